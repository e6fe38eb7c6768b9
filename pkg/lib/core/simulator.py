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

"""EBL - Time-driven simulation of a Bernoulli serial line.

All machines decide on the start-of-period state and every production is
applied at once at the end of the period. Replications are simulated side by
side as rows of numpy arrays; each row draws from its own Philox stream keyed
by (base_seed, replication), consumed period by period and machine by machine.
"""
import dataclasses
import logging
import time

import numpy as np
from scipy import stats

from ebl_errors import LineEvaluationError
from ebl_general_settings import POLICY_CONWIP
from ebl_general_settings import POLICY_EB
from ebl_general_settings import POLICY_IB
from ebl_general_settings import SIM_ASSERT_FEASIBLE
from ebl_general_settings import SIM_BLOCK_PERIODS
from ebl_general_settings import SIM_CONFIDENCE
from ebl_general_settings import SIM_HORIZON
from ebl_general_settings import SIM_REPLICATIONS
from ebl_general_settings import SIM_SEED
from ebl_general_settings import SIM_WARMUP
from line_model import LineSpecError
from line_model import is_conwip

logger = logging.getLogger('EBL-simulator')


class InfeasibleState(LineEvaluationError):
  pass


@dataclasses.dataclass(frozen=True)
class SimConfig(object):
  replications: int = SIM_REPLICATIONS
  horizon: int = SIM_HORIZON
  base_seed: int = SIM_SEED
  warmup: int = SIM_WARMUP

  def __post_init__(self):
    if self.replications < 1:
      raise LineSpecError('replications must be at least 1')
    if self.horizon < 1:
      raise LineSpecError('horizon must be at least 1')
    if self.warmup < 0 or self.warmup >= self.horizon:
      raise LineSpecError('warmup must lie in [0, horizon)')
    if not 0 <= self.base_seed < 2**64:
      raise LineSpecError('seed must be an unsigned 64-bit integer')


@dataclasses.dataclass(frozen=True)
class SimEstimate(object):
  mean: float
  half_width_95: float
  n: int


@dataclasses.dataclass
class SimReport(object):
  throughput: SimEstimate
  stage_wip: tuple
  overflow: tuple
  policy: str
  wall_time: float = 0.0


def _echelon(y):
  return np.cumsum(y[..., ::-1], axis=-1)[..., ::-1]


def _move(state, produced):
  return state + produced[..., :-1] - produced[..., 1:]


def _serial_eligibility(stage, room_first, room_rest):
  eligible = np.empty(stage.shape[:-1] + (stage.shape[-1] + 1,), dtype=bool)
  eligible[..., 0] = room_first
  eligible[..., 1:-1] = (stage[..., :-1] >= 1) & room_rest
  eligible[..., -1] = stage[..., -1] >= 1
  return eligible


def eligible_eb(y, K):
  """Machines that are neither starved nor blocked under the EB policy.

  M_1 needs x_1 < K_1, M_n needs y_{n-1} >= 1 and x_n < K_n, M_N needs
  y_{N-1} >= 1.
  """
  caps = np.asarray(tuple(K), dtype=np.int64)
  x = _echelon(y)
  return _serial_eligibility(y, x[..., 0] < caps[0], x[..., 1:] < caps[1:])


def eligible_ib(w, C):
  caps = np.asarray(tuple(C), dtype=np.int64) + 1
  return _serial_eligibility(w, w[..., 0] < caps[0], w[..., 1:] < caps[1:])


def eb_overflow(y, produced, K):
  """Arrivals at stage n with no departure while y_n >= K_n - K_{n+1} + 1."""
  caps = np.asarray(tuple(K), dtype=np.int64)
  threshold = caps[:-1] - caps[1:] + 1
  return (produced[..., :-2] & ~produced[..., 1:-1] &
          (y[..., :-1] >= threshold))


def step_eb(y, draws, K, check=True):
  """One period under the EB policy.

  Args:
    y: Stage WIPs, shape (..., N-1).
    draws: Bernoulli outcomes per machine, shape (..., N).
    K: Echelon capacities K_1..K_{N-1}.
    check: Verify that y is feasible.

  Returns:
    (y', produced, overflow) with overflow of shape (..., N-2).

  Raises:
    InfeasibleState: if check is set and y violates 0 <= x_n <= K_n.
  """
  y = np.asarray(y)
  if check:
    caps = np.asarray(tuple(K), dtype=np.int64)
    if np.any(y < 0) or np.any(_echelon(y) > caps):
      raise InfeasibleState('Stage WIP %s violates echelon capacities %s' %
                            (y.tolist(), caps.tolist()))
  produced = eligible_eb(y, K) & np.asarray(draws, dtype=bool)
  return _move(y, produced), produced, eb_overflow(y, produced, K)


def step_ib(w, draws, C, check=True):
  """One period under the IB policy; M_n blocks when w_n = 1 + C_n."""
  w = np.asarray(w)
  if check:
    caps = np.asarray(tuple(C), dtype=np.int64) + 1
    if np.any(w < 0) or np.any(w > caps):
      raise InfeasibleState('Installation WIP %s violates capacities %s' %
                            (w.tolist(), caps.tolist()))
  produced = eligible_ib(w, C) & np.asarray(draws, dtype=bool)
  return _move(w, produced), produced


def step_conwip(y, draws, cap, check=True):
  """One period of a CONWIP line: only M_1 blocks, on total WIP = cap."""
  y = np.asarray(y)
  total = y.sum(axis=-1)
  if check and (np.any(y < 0) or np.any(total > cap)):
    raise InfeasibleState('Stage WIP %s exceeds the WIP cap %d' %
                          (y.tolist(), cap))
  eligible = np.empty(y.shape[:-1] + (y.shape[-1] + 1,), dtype=bool)
  eligible[..., 0] = total < cap
  eligible[..., 1:] = y >= 1
  produced = eligible & np.asarray(draws, dtype=bool)
  overflow = produced[..., :-2] & ~produced[..., 1:-1] & (y[..., :-1] >= 1)
  return _move(y, produced), produced, overflow


def replication_generator(base_seed, replication):
  seq = np.random.SeedSequence([int(base_seed), int(replication)])
  return np.random.Generator(np.random.Philox(seq))


def _draw_blocks(generators, probs, horizon):
  """Yields Bernoulli outcome blocks of shape (periods, replications, N)."""
  probs = np.asarray(probs)
  done = 0
  while done < horizon:
    periods = min(SIM_BLOCK_PERIODS, horizon - done)
    uniforms = np.stack(
        [g.random((periods, len(probs))) for g in generators], axis=1)
    yield uniforms < probs
    done += periods


def _stepper(spec, policy):
  if policy == POLICY_EB:
    caps = spec.echelon.K
    return lambda s, d: step_eb(s, d, caps, check=SIM_ASSERT_FEASIBLE)
  if policy == POLICY_CONWIP:
    if not is_conwip(spec):
      raise LineSpecError('CONWIP simulation needs C_1..C_{N-2} = 0')
    cap = spec.echelon.K[0]
    return lambda s, d: step_conwip(s, d, cap, check=SIM_ASSERT_FEASIBLE)
  if policy == POLICY_IB:
    caps = spec.buffer_caps

    def step(s, d):
      nxt, produced = step_ib(s, d, caps, check=SIM_ASSERT_FEASIBLE)
      return nxt, produced, np.zeros(s.shape[:-1] + (s.shape[-1] - 1,),
                                     dtype=bool)
    return step
  raise LineSpecError('Unknown policy %r' % policy)


def run_replications(spec, config, policy=None, trajectory=False):
  """Simulates every replication and returns per-replication time averages.

  Returns:
    Dict of arrays: 'throughput' (R,), 'stage_wip' (R, N-1), 'overflow'
    (R, N-2); with trajectory set, also 'states' (horizon, R, N-1).
  """
  policy = policy or spec.policy
  step = _stepper(spec, policy)
  reps = config.replications
  n_stages = spec.n_machines - 1
  generators = [replication_generator(config.base_seed, k)
                for k in range(reps)]
  state = np.zeros((reps, n_stages), dtype=np.int64)
  wip_sum = np.zeros((reps, n_stages))
  exits = np.zeros(reps)
  overflows = np.zeros((reps, max(n_stages - 1, 0)))
  states = [] if trajectory else None
  period = 0
  for block in _draw_blocks(generators, spec.production_probs, config.horizon):
    for draws in block:
      state, produced, overflow = step(state, draws)
      if period >= config.warmup:
        wip_sum += state
        exits += produced[:, -1]
        overflows += overflow
      if trajectory:
        states.append(state.copy())
      period += 1
  periods = config.horizon - config.warmup
  out = {
      'throughput': exits / periods,
      'stage_wip': wip_sum / periods,
      'overflow': overflows / periods,
  }
  if trajectory:
    out['states'] = np.stack(states)
  return out


def estimate(samples, confidence=SIM_CONFIDENCE):
  """Mean and Student-t confidence half-width across replications."""
  samples = np.asarray(samples, dtype=float)
  n = len(samples)
  mean = float(samples.mean())
  if n < 2:
    logger.warning('Single replication: confidence half-width reported as 0')
    return SimEstimate(mean, 0.0, n)
  half = stats.sem(samples) * stats.t.ppf((1 + confidence) / 2, n - 1)
  return SimEstimate(mean, float(half), n)


def simulate(spec, config=None, policy=None):
  """Replicated simulation of a line under its own (or the given) policy."""
  config = config or SimConfig()
  policy = policy or spec.policy
  started = time.perf_counter()
  runs = run_replications(spec, config, policy=policy)
  report = SimReport(
      throughput=estimate(runs['throughput']),
      stage_wip=tuple(estimate(runs['stage_wip'][:, n])
                      for n in range(spec.n_machines - 1)),
      overflow=(tuple(estimate(runs['overflow'][:, n])
                      for n in range(spec.n_machines - 2))
                if policy != POLICY_IB else ()),
      policy=policy)
  report.wall_time = time.perf_counter() - started
  logger.info('Simulated %s (%s): throughput %.5f +/- %.5f in %.2f s',
              spec.name or 'line', policy, report.throughput.mean,
              report.throughput.half_width_95, report.wall_time)
  return report


def simulate_conwip(spec, config=None):
  return simulate(spec, config, policy=POLICY_CONWIP)


def state_frequencies(spec, horizon, seed=SIM_SEED, thin=1, policy=None):
  """Visit counts of a single run, sampled every `thin` periods.

  Returns:
    Dict mapping state tuples (y for EB, w for IB) to visit counts.
  """
  config = SimConfig(replications=1, horizon=horizon, base_seed=seed)
  states = run_replications(spec, config, policy=policy,
                            trajectory=True)['states'][thin - 1::thin, 0, :]
  keys, counts = np.unique(states, axis=0, return_counts=True)
  return {tuple(int(v) for v in key): int(c) for key, c in zip(keys, counts)}
