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

"""EBL - Exact stationary analysis of the full line chain.

Builds the Markov chain of the whole line (stage-WIP vectors under EB,
installation-WIP vectors under IB) by pushing every machine-outcome vector
through the simulator's one-period step, and solves it for its stationary
distribution. Only practical for small lines; used as a reference.
"""
import dataclasses
import itertools
import logging
import warnings

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from decomposition import PerformanceReport
from ebl_errors import LineEvaluationError
from ebl_general_settings import EXACT_CHUNK_ROWS
from ebl_general_settings import EXACT_RESIDUAL_TOL
from ebl_general_settings import EXACT_STATE_CAP
from ebl_general_settings import POLICY_EB
from ebl_general_settings import POWER_MAX_ITERATIONS
from line_model import state_count_eb
from line_model import state_count_ib
from simulator import eligible_eb
from simulator import eligible_ib
from simulator import step_eb
from simulator import step_ib

logger = logging.getLogger('EBL-exact')


class TooLarge(LineEvaluationError):
  pass


class SingularSystem(LineEvaluationError):
  pass


@dataclasses.dataclass
class StateIndex(object):
  """Bijection between feasible state vectors and 0..size-1.

  states holds stage-WIP vectors y (EB) or installation-WIP vectors w (IB),
  one per row, sorted by their mixed-radix code.
  """

  policy: str
  dims: tuple
  states: np.ndarray
  codes: np.ndarray

  @classmethod
  def build(cls, policy, dims, states):
    states = np.asarray(states, dtype=np.int64).reshape(-1, len(dims))
    try:
      codes = np.ravel_multi_index(states.T, dims)
    except ValueError as e:
      raise TooLarge('State space cannot be indexed: %s' % e)
    order = np.argsort(codes, kind='stable')
    return cls(policy, tuple(dims), states[order], codes[order])

  def __len__(self):
    return len(self.codes)

  def lookup(self, states):
    """Indices of the given state vectors (rows of a 2-D array)."""
    codes = np.ravel_multi_index(np.asarray(states).T, self.dims)
    idx = np.searchsorted(self.codes, codes)
    idx = np.minimum(idx, len(self.codes) - 1)
    if np.any(self.codes[idx] != codes):
      raise LineEvaluationError('Successor outside the feasible state set')
    return idx

  def state(self, idx):
    return tuple(int(v) for v in self.states[idx])

  def echelon_states(self):
    return np.cumsum(self.states[:, ::-1], axis=1)[:, ::-1]


def _eb_states(caps):
  """Stage-WIP vectors of every non-increasing x with x_n <= K_n."""
  echelons = [(x,) for x in range(caps[-1] + 1)]
  for cap in reversed(caps[:-1]):
    echelons = [(x,) + rest for rest in echelons
                for x in range(rest[0], cap + 1)]
  x = np.array(echelons, dtype=np.int64).reshape(-1, len(caps))
  return x - np.concatenate([x[:, 1:], np.zeros((len(x), 1), np.int64)],
                            axis=1)


def state_index(spec):
  if spec.policy == POLICY_EB:
    caps = spec.echelon.K
    return StateIndex.build(spec.policy, tuple(k + 1 for k in caps),
                            _eb_states(caps))
  dims = tuple(c + 2 for c in spec.buffer_caps)
  states = list(itertools.product(*[range(d) for d in dims]))
  return StateIndex.build(spec.policy, dims, states)


def build_chain(spec, cap=EXACT_STATE_CAP):
  """Exact transition matrix of the line.

  Args:
    spec: LineSpec, EB or IB.
    cap: Largest state count accepted.

  Returns:
    (StateIndex, scipy.sparse.csr_matrix) with a row-stochastic matrix.

  Raises:
    TooLarge: if the state count exceeds cap.
  """
  if spec.policy == POLICY_EB:
    count = state_count_eb(spec.echelon)
  else:
    # w_n ranges over 0..1+C_n, one more level than the buffer alone
    count = state_count_ib(tuple(c + 1 for c in spec.buffer_caps))
  if count > cap:
    raise TooLarge('%d states exceed the exact-analysis cap of %d' %
                   (count, cap))
  index = state_index(spec)
  n_machines = spec.n_machines
  probs = np.asarray(spec.production_probs)
  outcomes = np.array(list(itertools.product((False, True),
                                             repeat=n_machines)))
  weights = np.prod(np.where(outcomes, probs, 1.0 - probs), axis=1)
  outcomes = outcomes[weights > 0.0]
  weights = weights[weights > 0.0]
  n_outcomes = len(weights)

  chunk = max(1, EXACT_CHUNK_ROWS // n_outcomes)
  rows, cols, vals = [], [], []
  for start in range(0, len(index), chunk):
    block = index.states[start:start + chunk]
    size = len(block)
    current = np.repeat(block[:, None, :], n_outcomes, axis=1)
    draws = np.broadcast_to(outcomes, (size,) + outcomes.shape)
    if spec.policy == POLICY_EB:
      successor = step_eb(current, draws, spec.echelon, check=False)[0]
    else:
      successor = step_ib(current, draws, spec.buffer_caps, check=False)[0]
    rows.append(np.repeat(np.arange(start, start + size), n_outcomes))
    cols.append(index.lookup(successor.reshape(-1, n_machines - 1)))
    vals.append(np.tile(weights, size))
  matrix = sparse.coo_matrix(
      (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
      shape=(len(index), len(index))).tocsr()
  logger.debug('Built %s chain with %d states and %d transitions',
               spec.policy, len(index), matrix.nnz)
  return index, matrix


def _residual(matrix, pi):
  return float(np.max(np.abs(matrix.T.dot(pi) - pi)))


def _power_iteration(matrix, start, tol, max_iterations):
  # The lazy chain (I + P) / 2 has the same stationary vectors and is aperiodic
  transposed = matrix.T.tocsr()
  pi = start / start.sum()
  for iteration in range(1, max_iterations + 1):
    nxt = 0.5 * (pi + transposed.dot(pi))
    nxt /= nxt.sum()
    pi = nxt
    if iteration % 100 == 0 and _residual(matrix, pi) <= tol:
      return pi
  if _residual(matrix, pi) <= tol:
    return pi
  raise SingularSystem('Power iteration did not reach residual %.1g in %d '
                       'iterations' % (tol, max_iterations))


def stationary(matrix, start=None, tol=EXACT_RESIDUAL_TOL,
               max_iterations=POWER_MAX_ITERATIONS):
  """Stationary vector of a row-stochastic sparse matrix.

  Solves pi (P - I) = 0 with one balance equation replaced by sum(pi) = 1.
  If the direct solve fails or is not accurate enough, power iteration takes
  over from `start` (uniform by default).

  Raises:
    SingularSystem: if neither method produces a stationary vector.
  """
  matrix = sparse.csr_matrix(matrix)
  size = matrix.shape[0]
  if size == 1:
    return np.ones(1)
  balance = (matrix.T - sparse.identity(size, format='csr')).tocsr()
  system = sparse.vstack([balance[:-1, :],
                          sparse.csr_matrix(np.ones((1, size)))]).tocsc()
  rhs = np.zeros(size)
  rhs[-1] = 1.0
  pi = None
  with warnings.catch_warnings():
    warnings.simplefilter('error', sparse_linalg.MatrixRankWarning)
    try:
      pi = sparse_linalg.spsolve(system, rhs)
    except (RuntimeError, ValueError, np.linalg.LinAlgError,
            sparse_linalg.MatrixRankWarning) as e:
      logger.warning('Direct stationary solve failed (%s); falling back to '
                     'power iteration', e)
  if pi is not None and np.all(np.isfinite(pi)):
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    if _residual(matrix, pi) <= tol:
      return pi
    start = pi
  if start is None:
    start = np.ones(size)
  return _power_iteration(matrix, np.asarray(start, dtype=float), tol,
                          max_iterations)


def exact_measures(spec, index, pi):
  """Line measures computed directly from the stationary vector."""
  probs = np.asarray(spec.production_probs)
  states = index.states
  if spec.policy == POLICY_EB:
    eligible = eligible_eb(states, spec.echelon)
  else:
    eligible = eligible_ib(states, spec.buffer_caps)
  produce = eligible * probs
  throughput = float(np.dot(pi, produce[:, -1]))
  stage = pi.dot(states)
  echelon = np.cumsum(stage[::-1])[::-1]
  overflow = ()
  if spec.policy == POLICY_EB:
    # Expected overflow flag over independent machine outcomes
    caps = np.asarray(spec.echelon.K)
    threshold = caps[:-1] - caps[1:] + 1
    rates = (produce[:, :-2] * (1.0 - produce[:, 1:-1]) *
             (states[:, :-1] >= threshold))
    overflow = tuple(float(v) for v in pi.dot(rates))
  return PerformanceReport(
      throughput=throughput,
      stage_wip=tuple(float(v) for v in stage),
      echelon_wip=tuple(float(v) for v in echelon),
      overflow=overflow)


def evaluate_exact(spec, cap=EXACT_STATE_CAP):
  """Builds, solves and measures the exact chain of one line."""
  index, matrix = build_chain(spec, cap=cap)
  start = np.zeros(len(index))
  start[index.lookup(np.zeros((1, spec.n_machines - 1), np.int64))[0]] = 1.0
  pi = stationary(matrix, start=start)
  report = exact_measures(spec, index, pi)
  logger.info('Exact %s analysis of %s: %d states, throughput %.5f',
              spec.policy, spec.name or 'line', len(index), report.throughput)
  return report
