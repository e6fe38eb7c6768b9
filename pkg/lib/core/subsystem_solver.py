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

"""EBL - Two-machine subsystem solver.

Stationary analysis of the building blocks of the decomposition:

* the triangular chain of an interior subsystem, with state (i, j) where i is
  the stage WIP y_{n-1} of the upstream stage and j the echelon WIP x_n of the
  downstream echelon buffer, 0 <= j <= k_down and 0 <= i <= k_up - j;
* the birth-death chain of the first subsystem.

In every period three independent events are evaluated on the start-of-period
state: an external arrival with probability r(i + j), a part produced by the
upstream machine with probability p(i) (only if j < k_down) and a part produced
by the aggregate downstream machine with probability q(j). The successor state
is (i + a - b, j + b - c).
"""
import dataclasses
import itertools
import logging

import numpy as np
from scipy import sparse
from scipy import special
from scipy.sparse import linalg as sparse_linalg

from ebl_errors import LineEvaluationError
from ebl_general_settings import DEFAULT_EPSILON
from ebl_general_settings import GS_MAX_SWEEPS
from ebl_general_settings import PROB_FLOOR

logger = logging.getLogger('EBL-subsystem')


class SubsystemParamsError(LineEvaluationError):
  pass


class NoConvergence(LineEvaluationError):
  """Raised when an iterative solve exceeds its iteration cap."""

  def __init__(self, message, max_iters=None, residual=None):
    super(NoConvergence, self).__init__(message)
    self.max_iters = max_iters
    self.residual = residual


class DegenerateDownstream(LineEvaluationError):
  pass


@dataclasses.dataclass(frozen=True)
class DegenerateState(object):
  """A conditional measure whose conditioning event has zero mass."""
  measure: str
  x: int


@dataclasses.dataclass
class SubsystemParams(object):
  """Parameters of one interior two-machine subsystem.

  Attributes:
    k_up: Upstream echelon capacity K_{n-1}.
    k_down: Downstream echelon capacity K_n, 1 <= k_down <= k_up.
    arrival: r(x) for x = 0..k_up, with r(k_up) = 0.
    production: p(y) for y = 0..k_up, with p(0) = 0.
    downstream: q(x) for x = 0..k_down, with q(0) = 0.
    blocking: Whether the upstream machine blocks at j = k_down. Only an
      obsolete echelon buffer (k_up = k_down) may drop the rule.
  """

  k_up: int
  k_down: int
  arrival: np.ndarray
  production: np.ndarray
  downstream: np.ndarray
  blocking: bool = True

  def __post_init__(self):
    self.k_up = int(self.k_up)
    self.k_down = int(self.k_down)
    if not 1 <= self.k_down <= self.k_up:
      raise SubsystemParamsError('Need 1 <= k_down <= k_up, got k_up=%d, '
                                 'k_down=%d' % (self.k_up, self.k_down))
    if not self.blocking and self.k_up != self.k_down:
      raise SubsystemParamsError('Blocking can only be dropped when '
                                 'k_up = k_down')
    self.arrival = self._vector(self.arrival, self.k_up + 1, 'arrival')
    self.production = self._vector(self.production, self.k_up + 1,
                                   'production')
    self.downstream = self._vector(self.downstream, self.k_down + 1,
                                   'downstream')
    if self.arrival[-1] != 0.0:
      raise SubsystemParamsError('r(k_up) must be 0')
    if self.production[0] != 0.0:
      raise SubsystemParamsError('p(0) must be 0')
    if self.downstream[0] != 0.0:
      raise SubsystemParamsError('q(0) must be 0')

  @staticmethod
  def _vector(values, size, what):
    vec = np.asarray(values, dtype=float)
    if vec.shape != (size,):
      raise SubsystemParamsError('%s vector must have %d entries, got %s' %
                                 (what, size, vec.shape))
    if np.any(vec < 0.0) or np.any(vec > 1.0) or not np.all(np.isfinite(vec)):
      raise SubsystemParamsError('%s vector entries must lie in [0, 1]' % what)
    return vec


def triangle_size(k_up, k_down):
  return (k_up + 1) * (k_down + 1) - (k_down + 1) * k_down // 2


def triangle_states(k_up, k_down):
  """States of the triangular chain in sweep order (j ascending, i ascending).

  Returns:
    Pair of integer arrays (i, j).
  """
  i_list = []
  j_list = []
  for j in range(k_down + 1):
    count = k_up - j + 1
    i_list.append(np.arange(count))
    j_list.append(np.full(count, j))
  return np.concatenate(i_list), np.concatenate(j_list)


@dataclasses.dataclass
class TriangularDistribution(object):
  """Stationary probabilities P(i, j) of a triangular subsystem chain.

  probs is a (k_up + 1) x (k_down + 1) array that is zero outside the
  triangle i + j <= k_up.
  """

  k_up: int
  k_down: int
  probs: np.ndarray
  iterations: int = 0
  residual: float = 0.0

  @classmethod
  def from_mapping(cls, k_up, k_down, mapping):
    probs = np.zeros((k_up + 1, k_down + 1))
    for (i, j), value in mapping.items():
      if not (0 <= j <= k_down and 0 <= i <= k_up - j):
        raise SubsystemParamsError('State (%d, %d) outside the triangle' %
                                   (i, j))
      probs[i, j] = value
    return cls(k_up, k_down, probs)

  @classmethod
  def from_vector(cls, k_up, k_down, vector, iterations=0, residual=0.0):
    """Builds a distribution from a vector in sweep order."""
    ii, jj = triangle_states(k_up, k_down)
    probs = np.zeros((k_up + 1, k_down + 1))
    probs[ii, jj] = vector
    return cls(k_up, k_down, probs, iterations, residual)

  def to_vector(self):
    ii, jj = triangle_states(self.k_up, self.k_down)
    return self.probs[ii, jj].copy()

  def __getitem__(self, state):
    return float(self.probs[state])

  def total(self):
    return float(self.probs.sum())


@dataclasses.dataclass
class SubsystemMeasures(object):
  """Performance measures of one solved subsystem."""

  lambda_: np.ndarray
  cond_throughput: np.ndarray
  avg_echelon_wip: float
  overflow: float
  iterations: int = 0
  residual: float = 0.0
  degenerate: tuple = ()


@dataclasses.dataclass
class BirthDeathResult(object):
  """Solution of the first subsystem."""

  probs: np.ndarray
  throughput: float
  avg_wip: float
  lambda_: np.ndarray


def transition_matrix(params):
  """Sparse row-stochastic transition matrix of the triangular chain.

  Rows and columns follow triangle_states ordering.
  """
  k_up, k_down = params.k_up, params.k_down
  ii, jj = triangle_states(k_up, k_down)
  size = len(ii)
  index = np.full((k_up + 1, k_down + 1), -1, dtype=np.int64)
  index[ii, jj] = np.arange(size)

  arrive = params.arrival[ii + jj]
  produce = params.production[ii]
  if params.blocking:
    produce = np.where(jj < k_down, produce, 0.0)
  depart = params.downstream[jj]

  rows, cols, vals = [], [], []
  source = np.arange(size)
  for a, b, c in itertools.product((0, 1), repeat=3):
    prob = ((arrive if a else 1.0 - arrive) *
            (produce if b else 1.0 - produce) *
            (depart if c else 1.0 - depart))
    keep = prob > 0.0
    rows.append(source[keep])
    cols.append(index[ii[keep] + a - b, jj[keep] + b - c])
    vals.append(prob[keep])
  matrix = sparse.coo_matrix(
      (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
      shape=(size, size))
  return matrix.tocsr()


def _sweep_operator(matrix):
  """Splits pi = P^T pi into the Gauss-Seidel sweep (D - L) pi' = U pi.

  D holds the outflows 1 - P(s, s); L and U are the strictly lower and upper
  parts of P^T in sweep order. States without outflow keep their value.

  Returns:
    (solve, upper, frozen): a factorized solver of D - L, U as csr and the
    mask of states without outflow.
  """
  incoming = matrix.T.tocsr()
  stay = incoming.diagonal()
  outflow = np.asarray(incoming.sum(axis=0)).ravel() - stay
  frozen = outflow <= 0.0
  active = sparse.diags((~frozen).astype(float))
  lower = active.dot(sparse.tril(incoming, k=-1, format='csr'))
  upper = active.dot(sparse.triu(incoming, k=1, format='csr')).tocsr()
  diag = np.where(frozen, 1.0, outflow)
  system = (sparse.diags(diag) - lower).tocsc()
  # No column permutation and diagonal pivots: the factor is D - L itself
  solve = sparse_linalg.splu(system, permc_spec='NATURAL',
                             diag_pivot_thresh=0.0).solve
  return solve, upper, frozen


def _sweep(solve, upper, frozen, pi):
  return solve(upper.dot(pi) + np.where(frozen, pi, 0.0))


def solve_stationary(params, warm_start=None, eps=DEFAULT_EPSILON,
                     max_sweeps=GS_MAX_SWEEPS):
  """Gauss-Seidel solve of the triangular subsystem chain.

  Each sweep updates pi(s) = sum_t pi(t) P(t, s) / (1 - P(s, s)) in sweep
  order, then renormalizes. The solve stops once the largest relative change
  of a probability between two normalized sweeps drops below eps.

  Args:
    params: SubsystemParams.
    warm_start: Optional TriangularDistribution with the same capacities.
    eps: Convergence threshold.
    max_sweeps: Sweep cap.

  Returns:
    TriangularDistribution carrying the sweep count and the balance residual.

  Raises:
    NoConvergence: if the sweep cap is exceeded.
  """
  if eps <= 0:
    raise SubsystemParamsError('eps must be positive')
  matrix = transition_matrix(params)
  solve, upper, frozen = _sweep_operator(matrix)
  size = matrix.shape[0]

  if warm_start is not None:
    if (warm_start.k_up, warm_start.k_down) != (params.k_up, params.k_down):
      raise SubsystemParamsError('Warm start does not match the subsystem')
    pi = warm_start.to_vector()
    if pi.sum() <= 0.0:
      pi = np.ones(size)
  else:
    pi = np.ones(size)
  current = pi / pi.sum()

  change = np.inf
  for sweep in range(1, max_sweeps + 1):
    previous = current
    current = _sweep(solve, upper, frozen, previous)
    total = current.sum()
    if not total > 0.0:
      raise NoConvergence('Probability mass vanished during sweep %d' % sweep,
                          max_iters=max_sweeps)
    current = np.clip(current / total, 0.0, None)
    change = np.max(np.abs(current - previous) /
                    np.maximum(previous, PROB_FLOOR))
    if change < eps:
      break
  else:
    raise NoConvergence('Gauss-Seidel did not converge in %d sweeps '
                        '(last change %.3g)' % (max_sweeps, change),
                        max_iters=max_sweeps, residual=change)

  residual = float(np.max(np.abs(matrix.T.dot(current) - current)))
  logger.debug('Subsystem k_up=%d k_down=%d solved: %d sweeps, residual %.3g',
               params.k_up, params.k_down, sweep, residual)
  return TriangularDistribution.from_vector(params.k_up, params.k_down,
                                            current, sweep, residual)


def _conditional(num, den, measure, flags, skip=()):
  values = np.zeros_like(num)
  positive = den > 0.0
  values[positive] = num[positive] / den[positive]
  for x in np.flatnonzero(~positive):
    if int(x) in skip:
      continue
    state = DegenerateState(measure, int(x))
    logger.warning('Degenerate state: %s(%d) has zero mass', measure, x)
    if flags is not None:
      flags.append(state)
  return np.clip(values, 0.0, 1.0)


def internal_arrival_probability(params, dist, flags=None):
  """lambda(x): probability that the upstream machine produces given x_n = x."""
  den = dist.probs.sum(axis=0)
  num = (dist.probs * params.production[:, None]).sum(axis=0)
  values = _conditional(num, den, 'lambda', flags, skip=(params.k_down,))
  values[params.k_down] = 0.0
  return values


def conditional_throughput(params, dist, flags=None):
  """v(x): probability that the downstream machine produces given x_{n-1} = x."""
  ii, jj = np.indices(dist.probs.shape)
  level = (ii + jj).ravel()
  weights = dist.probs.ravel()
  size = params.k_up + 1
  den = np.bincount(level, weights=weights, minlength=size)[:size]
  num = np.bincount(level, weights=(dist.probs * params.downstream).ravel(),
                    minlength=size)[:size]
  values = _conditional(num, den, 'v', flags)
  values[0] = 0.0
  return values


def average_echelon_wip(dist):
  return float(np.dot(np.arange(dist.k_down + 1), dist.probs.sum(axis=0)))


def overflow_probability(params, dist):
  """Rate of arrivals that find the local buffer full and no departure."""
  k_up, k_down = params.k_up, params.k_down
  ii, jj = np.indices(dist.probs.shape)
  mask = (ii >= k_up - k_down + 1) & (ii + jj <= k_up)
  level = np.minimum(ii + jj, k_up)
  terms = (dist.probs * params.arrival[level] *
           (1.0 - params.production[ii]))
  return float(np.clip(terms[mask].sum(), 0.0, 1.0))


def compute_measures(params, dist):
  flags = []
  return SubsystemMeasures(
      lambda_=internal_arrival_probability(params, dist, flags),
      cond_throughput=conditional_throughput(params, dist, flags),
      avg_echelon_wip=average_echelon_wip(dist),
      overflow=overflow_probability(params, dist),
      iterations=dist.iterations,
      residual=dist.residual,
      degenerate=tuple(flags))


def birth_death_stationary(up, down):
  """Stationary vector of a birth-death chain on 0..M.

  Args:
    up: up[j] = probability of j -> j + 1, j = 0..M-1.
    down: down[j] = probability of j -> j - 1, j = 1..M (down[0] unused).

  Returns:
    Probability vector of length M + 1. With zero rates the mass sits on the
    closed class reached from state 0.
  """
  up = np.asarray(up, dtype=float)
  down = np.asarray(down, dtype=float)
  size = len(down)
  top = size - 1
  blocked_up = np.flatnonzero(up <= 0.0)
  if blocked_up.size:
    top = int(blocked_up[0])
  bottom = 0
  for j in range(top, 0, -1):
    if down[j] <= 0.0:
      bottom = j
      break
  log_probs = np.full(size, -np.inf)
  log_probs[bottom] = 0.0
  for j in range(bottom, top):
    log_probs[j + 1] = log_probs[j] + np.log(up[j]) - np.log(down[j + 1])
  log_probs[bottom:top + 1] -= special.logsumexp(log_probs[bottom:top + 1])
  return np.exp(log_probs)


def solve_first_subsystem(p1, q, k1):
  """Solves the first subsystem L_1.

  M_1 is never starved and blocks when x_1 = K_1; the aggregate downstream
  machine produces with probability q(x_1). Below K_1 the level rises with
  probability p1 (1 - q(j)) and falls with (1 - p1) q(j); at K_1 it falls
  with q(K_1).

  Args:
    p1: Production probability of M_1, in (0, 1].
    q: q(x) for x = 0..K_1 with q(0) = 0.
    k1: Echelon capacity K_1.

  Returns:
    BirthDeathResult.

  Raises:
    DegenerateDownstream: if q(x) = 0 at a level 1 <= x <= K_1 of the closed
      class reached from the empty buffer. Transient levels (e.g. below K_1 - 1
      when p1 = 1) may carry q(x) = 0.
  """
  q = np.asarray(q, dtype=float)
  if len(q) != k1 + 1:
    raise SubsystemParamsError('q must have K_1 + 1 = %d entries' % (k1 + 1))
  if not 0.0 < p1 <= 1.0:
    raise SubsystemParamsError('p1 must lie in (0, 1]')
  up = p1 * (1.0 - q[:k1])
  down = (1.0 - p1) * q
  down[k1] = q[k1]
  probs = birth_death_stationary(up, down)
  stuck = np.flatnonzero((q <= 0.0) & (probs > 0.0))
  stuck = stuck[stuck >= 1]
  if stuck.size:
    raise DegenerateDownstream('Downstream probability is zero at x=%d' %
                               int(stuck[0]))
  lambda_ = np.full(k1 + 1, float(p1))
  lambda_[k1] = 0.0
  return BirthDeathResult(
      probs=probs,
      throughput=float(p1 * (1.0 - probs[k1])),
      avg_wip=float(np.dot(np.arange(k1 + 1), probs)),
      lambda_=lambda_)


def product_on_triangle(marginal_up, marginal_down):
  """Normalized product of two marginals restricted to the triangle.

  Falls back to the uniform distribution if the product has no mass there.
  """
  k_up = len(marginal_up) - 1
  k_down = len(marginal_down) - 1
  probs = np.outer(marginal_up, marginal_down)
  ii, jj = np.indices(probs.shape)
  probs[ii + jj > k_up] = 0.0
  total = probs.sum()
  if total <= 0.0:
    probs = (ii + jj <= k_up).astype(float)
    total = probs.sum()
  return TriangularDistribution(k_up, k_down, probs / total)


def _two_machine_marginal(upstream, downstream, capacity):
  if upstream <= 0.0:
    marginal = np.zeros(capacity + 1)
    marginal[0] = 1.0
    return marginal
  try:
    return solve_first_subsystem(min(upstream, 1.0), downstream, capacity).probs
  except DegenerateDownstream:
    return np.full(capacity + 1, 1.0 / (capacity + 1))


def init_marginal_product(params_init):
  """Warm start from the product of two birth-death marginals.

  The stage-WIP marginal treats the subsystem as a two-machine line fed at
  the initial arrival probability and drained at the slower of the upstream
  machine and the initial downstream probability; the echelon-WIP marginal is
  a two-machine line fed at the slower of the arrival and the upstream machine
  and drained by the initial downstream vector.
  """
  k_up, k_down = params_init.k_up, params_init.k_down
  arrival = float(params_init.arrival[:k_up].min())
  produce = float(params_init.production[1])
  drain = min(produce, float(params_init.downstream[1:].min()))
  q_up = np.full(k_up + 1, drain)
  q_up[0] = 0.0
  marginal_up = _two_machine_marginal(arrival, q_up, k_up)
  marginal_down = _two_machine_marginal(min(arrival, produce),
                                        params_init.downstream, k_down)
  return product_on_triangle(marginal_up, marginal_down)
