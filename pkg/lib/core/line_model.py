# Copyright 2026 The EBL Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""EBL - Line model.

Serial line specifications, installation/echelon capacity transforms and the
state counts of the full line Markov chain under the EB and IB policies.
"""
import dataclasses
import itertools
import math
import numbers

from ebl_errors import LineEvaluationError
from ebl_general_settings import MAX_STATE_COUNT
from ebl_general_settings import POLICY_EB
from ebl_general_settings import POLICY_IB

POLICIES = (POLICY_EB, POLICY_IB)


class LineSpecError(LineEvaluationError):
  pass


class NonMonotoneCapacities(LineSpecError):
  pass


class StateCountOverflow(LineEvaluationError):
  pass


@dataclasses.dataclass(frozen=True)
class EchelonCapacities(object):
  """Echelon buffer capacities K_1 >= K_2 >= ... >= K_{N-1} >= 1."""

  K: tuple

  def __post_init__(self):
    caps = tuple(_as_int(k, 'echelon capacity') for k in self.K)
    if not caps:
      raise LineSpecError('At least one echelon buffer is required')
    for n, (upper, lower) in enumerate(zip(caps, caps[1:]), start=1):
      if lower > upper:
        raise NonMonotoneCapacities(
            'Echelon capacities must be non-increasing: K_%d=%d < K_%d=%d' %
            (n, upper, n + 1, lower))
    if caps[-1] < 1:
      raise LineSpecError('The last echelon capacity must be at least 1')
    object.__setattr__(self, 'K', caps)

  def __len__(self):
    return len(self.K)

  def __getitem__(self, idx):
    return self.K[idx]

  def __iter__(self):
    return iter(self.K)


@dataclasses.dataclass(frozen=True)
class LineSpec(object):
  """A Bernoulli serial line.

  Attributes:
    n_machines: Number of machines N (at least 2).
    production_probs: p_1..p_N, each in (0, 1].
    buffer_caps: Installation buffer capacities C_1..C_{N-1}.
    policy: 'eb' or 'ib'.
    name: Free-form case label.
    echelon: Derived echelon capacities; all solver code indexes on these.
  """

  n_machines: int
  production_probs: tuple
  buffer_caps: tuple
  policy: str = POLICY_EB
  name: str = ''
  echelon: EchelonCapacities = dataclasses.field(
      init=False, repr=False, compare=False)

  def __post_init__(self):
    if isinstance(self.n_machines, bool) or not isinstance(
        self.n_machines, numbers.Integral):
      raise LineSpecError('Machine count must be an integer')
    if self.n_machines < 2:
      raise LineSpecError('A line needs at least 2 machines, got %d' %
                          self.n_machines)
    probs = tuple(float(p) for p in self.production_probs)
    if len(probs) != self.n_machines:
      raise LineSpecError('Expected %d production probabilities, got %d' %
                          (self.n_machines, len(probs)))
    for n, p in enumerate(probs, start=1):
      if not 0.0 < p <= 1.0:
        raise LineSpecError('Production probability p_%d=%r outside (0, 1]' %
                            (n, p))
    caps = tuple(_as_int(c, 'buffer capacity') for c in self.buffer_caps)
    if len(caps) != self.n_machines - 1:
      raise LineSpecError('Expected %d buffer capacities, got %d' %
                          (self.n_machines - 1, len(caps)))
    for n, c in enumerate(caps, start=1):
      if c < 0:
        raise LineSpecError('Buffer capacity C_%d=%d is negative' % (n, c))
    if self.policy not in POLICIES:
      raise LineSpecError('Unknown policy %r (expected one of %s)' %
                          (self.policy, ', '.join(POLICIES)))
    object.__setattr__(self, 'n_machines', int(self.n_machines))
    object.__setattr__(self, 'production_probs', probs)
    object.__setattr__(self, 'buffer_caps', caps)
    object.__setattr__(self, 'echelon', _echelon_from_caps(caps))

  def with_policy(self, policy):
    return dataclasses.replace(self, policy=policy)


def _as_int(value, what):
  if isinstance(value, bool):
    raise LineSpecError('Invalid %s %r' % (what, value))
  if isinstance(value, numbers.Integral):
    return int(value)
  if isinstance(value, float) and value.is_integer():
    return int(value)
  raise LineSpecError('Invalid %s %r (integer expected)' % (what, value))


def _echelon_from_caps(caps):
  # K_n = 1 + C_n + ... + C_{N-1}
  suffix = list(itertools.accumulate(reversed(caps)))
  return EchelonCapacities(tuple(1 + s for s in reversed(suffix)))


def _as_echelon(K):
  if isinstance(K, EchelonCapacities):
    return K
  return EchelonCapacities(tuple(K))


def _checked_count(count):
  if count > MAX_STATE_COUNT:
    raise StateCountOverflow('State count %d exceeds the 64-bit range' % count)
  return count


def echelon_capacities(spec):
  return spec.echelon


def installation_capacities(K):
  """Inverse of echelon_capacities.

  Args:
    K: EchelonCapacities or a sequence of echelon capacities.

  Returns:
    Tuple C_1..C_{N-1} with C_n = K_n - K_{n+1} and C_{N-1} = K_{N-1} - 1.

  Raises:
    NonMonotoneCapacities: if K increases anywhere.
  """
  caps = _as_echelon(K).K
  return tuple(a - b for a, b in zip(caps, caps[1:])) + (caps[-1] - 1,)


def state_count_eb(K):
  """Number of feasible stage-WIP vectors under the EB policy.

  Counts non-increasing echelon vectors x_1 >= ... >= x_{N-1} >= 0 with
  x_n <= K_n, one echelon buffer at a time from the last one upwards.
  """
  caps = _as_echelon(K).K
  counts = [1] * (caps[-1] + 1)
  for cap in reversed(caps[:-1]):
    cumulative = list(itertools.accumulate(counts))
    top = len(cumulative) - 1
    counts = [cumulative[min(x, top)] for x in range(cap + 1)]
  return _checked_count(sum(counts))


def state_count_ib(C):
  caps = tuple(_as_int(c, 'buffer capacity') for c in C)
  return _checked_count(math.prod(c + 1 for c in caps))


def is_conwip(spec):
  """True iff every buffer except the last one has zero capacity."""
  return all(c == 0 for c in spec.buffer_caps[:-1])


def obsolete_buffers(spec):
  """Indices n (2..N-1) of echelon buffers E_n with K_n = K_{n-1}.

  Such a buffer can never block M_n: when x_n = K_n = K_{n-1} the stage WIP
  y_{n-1} is zero, so M_n is starved anyway.
  """
  caps = spec.echelon.K
  return [n for n in range(2, spec.n_machines)
          if caps[n - 1] == caps[n - 2]]
