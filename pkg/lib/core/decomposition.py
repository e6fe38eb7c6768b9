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

"""EBL - Decomposition of an EB line into two-machine subsystems.

Subsystem L_1 is the birth-death chain of machine M_1 against the aggregate
downstream machine. Subsystem L_n (2 <= n <= N-1) is the triangular chain of
machine M_n between the external arrival r_{n-1} and the aggregate downstream
machine q_{n+1}. Neighbouring subsystems are coupled by

  r_n(x) = lambda_n(x)       (arrivals into L_{n+1} = internal arrivals of L_n)
  q_n(x) = v_n(x)            (downstream rate of L_{n-1} = throughput of L_n)

and the loop walks back and forth over the line until the arrival
probabilities agree.
"""
import dataclasses
import logging
import time

import numpy as np

from ebl_errors import LineEvaluationError
from ebl_general_settings import DEFAULT_EPSILON
from ebl_general_settings import NEGATIVE_WIP_TOLERANCE
from ebl_general_settings import OUTER_MAX_SOLVES
from ebl_general_settings import POLICY_EB
from ebl_general_settings import PROB_FLOOR
from ebl_general_settings import THROUGHPUT_SLACK
from line_model import obsolete_buffers
from subsystem_solver import NoConvergence
from subsystem_solver import SubsystemParams
from subsystem_solver import compute_measures
from subsystem_solver import init_marginal_product
from subsystem_solver import solve_first_subsystem
from subsystem_solver import solve_stationary

logger = logging.getLogger('EBL-decomposition')


class DecompositionPolicyError(LineEvaluationError):
  pass


class NegativeStageWip(LineEvaluationError):
  pass


@dataclasses.dataclass
class DecompositionState(object):
  """Coupling vectors and warm starts, keyed by subsystem index n.

  Attributes:
    arrival: n -> r_{n-1}(x), x = 0..K_{n-1}, for n = 2..N-1.
    downstream: n -> q_{n+1}(x), x = 0..K_n, for n = 1..N-1 (the last one is
      the constant p_N and never changes).
    warm_starts: n -> last TriangularDistribution of L_n.
    measures: n -> last SubsystemMeasures of L_n.
    boundary_residual: n -> last relative gap between lambda_n and r_n.
    converged: n -> whether the gap at boundary n is below eps.
    solves: Number of subsystem solves so far.
    blocking: n -> whether M_n blocks on E_n inside L_n.
  """

  arrival: dict
  downstream: dict
  warm_starts: dict
  blocking: dict
  measures: dict = dataclasses.field(default_factory=dict)
  boundary_residual: dict = dataclasses.field(default_factory=dict)
  converged: dict = dataclasses.field(default_factory=dict)
  solves: int = 0


@dataclasses.dataclass
class PerformanceReport(object):
  """Line-level performance measures.

  overflow holds theta_1..theta_{N-2}; theta_{N-1} is identically zero.
  """

  throughput: float
  stage_wip: tuple
  echelon_wip: tuple
  overflow: tuple
  outer_iterations: int = 0
  wall_time: float = 0.0
  converged: bool = True
  max_boundary_residual: float = 0.0


def _require_eb(spec):
  if spec.policy != POLICY_EB:
    raise DecompositionPolicyError('decomposition requires EB policy')


def _arrival_vector(rate, capacity):
  vec = np.full(capacity + 1, float(rate))
  vec[capacity] = 0.0
  return vec


def _downstream_vector(rate, capacity):
  vec = np.full(capacity + 1, float(rate))
  vec[0] = 0.0
  return vec


def _params(spec, state, n):
  caps = spec.echelon.K
  k_up, k_down = caps[n - 2], caps[n - 1]
  return SubsystemParams(
      k_up=k_up,
      k_down=k_down,
      arrival=state.arrival[n],
      production=_downstream_vector(spec.production_probs[n - 1], k_up),
      downstream=state.downstream[n],
      blocking=state.blocking[n])


def initialize(spec, eliminate_obsolete=False):
  """Initial coupling vectors from the slowest machines up- and downstream.

  r_{n-1}(x) = min(p_1..p_{n-1}) for x < K_{n-1}, and q_{n+1}(x) =
  min(p_{n+1}..p_N) for x >= 1. Each interior subsystem gets a warm start
  from init_marginal_product.

  Args:
    spec: EB LineSpec.
    eliminate_obsolete: Drop the blocking rule of M_n in every subsystem whose
      echelon buffer E_n is obsolete.

  Returns:
    DecompositionState.
  """
  _require_eb(spec)
  probs = spec.production_probs
  caps = spec.echelon.K
  n_machines = spec.n_machines
  obsolete = set(obsolete_buffers(spec)) if eliminate_obsolete else set()
  state = DecompositionState(arrival={}, downstream={}, warm_starts={},
                             blocking={})
  for n in range(1, n_machines):
    state.downstream[n] = _downstream_vector(min(probs[n:]), caps[n - 1])
  for n in range(2, n_machines):
    state.arrival[n] = _arrival_vector(min(probs[:n - 1]), caps[n - 2])
    state.blocking[n] = n not in obsolete
    state.warm_starts[n] = init_marginal_product(_params(spec, state, n))
  return state


def _solve(spec, state, n, eps, max_solves):
  state.solves += 1
  if state.solves > max_solves:
    worst = max(state.boundary_residual.values(), default=0.0)
    raise NoConvergence('Fixed point did not converge in %d subsystem solves '
                        '(worst boundary residual %.3g)' % (max_solves, worst),
                        max_iters=max_solves, residual=worst)
  params = _params(spec, state, n)
  dist = solve_stationary(params, warm_start=state.warm_starts[n], eps=eps)
  state.warm_starts[n] = dist
  measures = compute_measures(params, dist)
  state.measures[n] = measures
  return measures


def run_fixed_point(spec, state, eps=DEFAULT_EPSILON, inner_eps=None,
                    max_solves=OUTER_MAX_SOLVES):
  """Backward/forward sweep over the interior subsystems.

  Starts at n = N-1. After solving L_{N-1}, q_{N-1} = v_{N-1} and the walk moves
  to N-2. At an interior n, if lambda_n matches r_n on x < K_n the walk
  propagates q_n = v_n and moves down; otherwise it sets r_n = lambda_n and
  moves back up. The walk ends when it reaches n = 1.

  Args:
    spec: EB LineSpec.
    state: DecompositionState from initialize.
    eps: Outer convergence threshold.
    inner_eps: Gauss-Seidel threshold, defaults to eps.
    max_solves: Cap on subsystem solves.

  Returns:
    The updated state.

  Raises:
    NoConvergence: if the cap on subsystem solves is exceeded.
  """
  _require_eb(spec)
  if inner_eps is None:
    inner_eps = eps
  caps = spec.echelon.K
  last = spec.n_machines - 1
  n = last
  while n >= 2:
    measures = _solve(spec, state, n, inner_eps, max_solves)
    if n == last:
      state.downstream[n - 1] = measures.cond_throughput.copy()
      n -= 1
      continue
    k_down = caps[n - 1]
    current = state.arrival[n + 1]
    gap = np.abs(measures.lambda_[:k_down] - current[:k_down])
    residual = float(np.max(gap / np.maximum(current[:k_down], PROB_FLOOR)))
    state.boundary_residual[n] = residual
    if residual < eps:
      state.converged[n] = True
      state.downstream[n - 1] = measures.cond_throughput.copy()
      n -= 1
    else:
      state.converged[n] = False
      state.arrival[n + 1] = measures.lambda_.copy()
      n += 1
  logger.debug('Fixed point reached after %d subsystem solves', state.solves)
  return state


def assemble_report(spec, state):
  """Solves L_1 and collects the line-level measures.

  Raises:
    NegativeStageWip: if a stage WIP is negative beyond tolerance.
  """
  _require_eb(spec)
  caps = spec.echelon.K
  first = solve_first_subsystem(spec.production_probs[0], state.downstream[1],
                                caps[0])
  echelon = [first.avg_wip]
  overflow = []
  for n in range(2, spec.n_machines):
    measures = state.measures[n]
    echelon.append(measures.avg_echelon_wip)
    overflow.append(measures.overflow)
  stage = [a - b for a, b in zip(echelon, echelon[1:])] + [echelon[-1]]
  for n, value in enumerate(stage, start=1):
    if value < -NEGATIVE_WIP_TOLERANCE:
      raise NegativeStageWip('Stage WIP y_%d = %.3g is negative' % (n, value))
  throughput = first.throughput
  bound = min(spec.production_probs)
  if throughput > bound + THROUGHPUT_SLACK:
    logger.warning('Throughput %.6f exceeds the slowest machine (%.6f)',
                   throughput, bound)
  residuals = state.boundary_residual.values()
  return PerformanceReport(
      throughput=throughput,
      stage_wip=tuple(stage),
      echelon_wip=tuple(echelon),
      overflow=tuple(overflow),
      outer_iterations=state.solves,
      converged=all(state.converged.values()),
      max_boundary_residual=max(residuals, default=0.0))


def evaluate(spec, eps=DEFAULT_EPSILON, inner_eps=None,
             max_solves=OUTER_MAX_SOLVES, eliminate_obsolete=False):
  """Runs the whole decomposition for one EB line."""
  started = time.perf_counter()
  state = initialize(spec, eliminate_obsolete=eliminate_obsolete)
  run_fixed_point(spec, state, eps=eps, inner_eps=inner_eps,
                  max_solves=max_solves)
  report = assemble_report(spec, state)
  report.wall_time = time.perf_counter() - started
  logger.info('Decomposed %s: throughput %.5f after %d solves in %.2f s',
              spec.name or 'line', report.throughput, report.outer_iterations,
              report.wall_time)
  return report
