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

"""EBL - Subsystem solver tests."""
import itertools

import numpy as np
import pytest

from subsystem_solver import DegenerateDownstream
from subsystem_solver import NoConvergence
from subsystem_solver import SubsystemParams
from subsystem_solver import SubsystemParamsError
from subsystem_solver import TriangularDistribution
from subsystem_solver import average_echelon_wip
from subsystem_solver import birth_death_stationary
from subsystem_solver import compute_measures
from subsystem_solver import init_marginal_product
from subsystem_solver import solve_first_subsystem
from subsystem_solver import solve_stationary
from subsystem_solver import transition_matrix
from subsystem_solver import triangle_size
from subsystem_solver import triangle_states


def make_params(k_up, k_down, r=0.6, p=0.7, q=0.5, blocking=True):
  arrival = np.full(k_up + 1, r)
  arrival[k_up] = 0.0
  production = np.full(k_up + 1, p)
  production[0] = 0.0
  downstream = np.full(k_down + 1, q)
  downstream[0] = 0.0
  return SubsystemParams(k_up, k_down, arrival, production, downstream,
                         blocking)


def dense_stationary(matrix):
  dense = matrix.toarray()
  size = dense.shape[0]
  system = np.vstack([dense.T - np.eye(size), np.ones(size)])
  rhs = np.zeros(size + 1)
  rhs[-1] = 1.0
  return np.linalg.lstsq(system, rhs, rcond=None)[0]


def explicit_matrix(params):
  """Transition matrix written out event by event on the (i, j) grid."""
  states = [(i, j) for j in range(params.k_down + 1)
            for i in range(params.k_up - j + 1)]
  index = {s: n for n, s in enumerate(states)}
  out = np.zeros((len(states), len(states)))
  for (i, j), n in index.items():
    r = params.arrival[i + j]
    p = params.production[i] if (j < params.k_down or not params.blocking) \
        else 0.0
    q = params.downstream[j]
    for a, b, c in itertools.product((0, 1), repeat=3):
      prob = (r if a else 1 - r) * (p if b else 1 - p) * (q if c else 1 - q)
      if prob > 0.0:
        out[n, index[(i + a - b, j + b - c)]] += prob
  return out


@pytest.mark.parametrize('k_up,k_down', [(1, 1), (3, 1), (4, 2), (6, 6)])
def test_triangle_geometry(k_up, k_down):
  ii, jj = triangle_states(k_up, k_down)
  assert len(ii) == triangle_size(k_up, k_down)
  assert np.all(ii + jj <= k_up)
  assert np.all(jj <= k_down)
  # Sweep order: j ascending, then i ascending.
  keys = list(zip(jj.tolist(), ii.tolist()))
  assert keys == sorted(keys)


@pytest.mark.parametrize('k_up,k_down', [(2, 1), (5, 3), (4, 4)])
def test_transition_matrix_matches_event_rules(k_up, k_down):
  params = make_params(k_up, k_down, r=0.3, p=0.8, q=0.45)
  matrix = transition_matrix(params)
  np.testing.assert_allclose(matrix.sum(axis=1), 1.0, atol=1e-12)
  np.testing.assert_allclose(matrix.toarray(), explicit_matrix(params),
                             atol=1e-14)


@pytest.mark.parametrize('k_up,k_down,r,p,q', [
    (3, 2, 0.4, 0.6, 0.8),
    (5, 3, 0.8, 0.6, 0.4),
    (6, 1, 0.6, 0.6, 0.6),
    (4, 4, 0.9, 0.5, 0.7),
])
def test_gauss_seidel_matches_dense_solve(k_up, k_down, r, p, q):
  params = make_params(k_up, k_down, r, p, q)
  dist = solve_stationary(params, eps=1e-11)
  expected = dense_stationary(transition_matrix(params))
  np.testing.assert_allclose(dist.to_vector(), expected, atol=1e-8)
  assert dist.total() == pytest.approx(1.0, abs=1e-10)
  assert dist.residual < 1e-8


def test_stationary_satisfies_balance_equations():
  params = make_params(5, 2, r=0.55, p=0.65, q=0.35)
  dist = solve_stationary(params, eps=1e-12)
  pi = dist.to_vector()
  np.testing.assert_allclose(pi @ explicit_matrix(params), pi, atol=1e-10)
  assert np.all(dist.probs[np.add.outer(np.arange(6), np.arange(3)) > 5] == 0)


def test_warm_start_converges_to_same_solution():
  params = make_params(6, 3, r=0.7, p=0.6, q=0.5)
  cold = solve_stationary(params, eps=1e-10)
  warm = solve_stationary(params, warm_start=init_marginal_product(params),
                          eps=1e-10)
  np.testing.assert_allclose(warm.probs, cold.probs, atol=1e-8)


def test_nearby_solution_warm_start_needs_fewer_sweeps():
  params = make_params(8, 4, r=0.7, p=0.6, q=0.5)
  nearby = solve_stationary(make_params(8, 4, r=0.68, p=0.6, q=0.52),
                            eps=1e-10)
  cold = solve_stationary(params, eps=1e-10)
  warm = solve_stationary(params, warm_start=nearby, eps=1e-10)
  assert warm.iterations < cold.iterations
  np.testing.assert_allclose(warm.probs, cold.probs, atol=1e-8)


def test_marginal_product_warm_start_needs_fewer_sweeps():
  # A loaded subsystem spreads its mass over many orders of magnitude.
  params = make_params(10, 5, r=0.9, p=0.5, q=0.4)
  cold = solve_stationary(params, eps=1e-10)
  warm = solve_stationary(params, warm_start=init_marginal_product(params),
                          eps=1e-10)
  assert warm.iterations < cold.iterations


def test_warm_start_shape_mismatch_rejected():
  with pytest.raises(SubsystemParamsError):
    solve_stationary(make_params(4, 2),
                     warm_start=init_marginal_product(make_params(4, 3)))


def test_sweep_cap_raises_no_convergence():
  with pytest.raises(NoConvergence) as raised:
    solve_stationary(make_params(8, 4), eps=1e-14, max_sweeps=2)
  assert raised.value.max_iters == 2


def test_measures_conserve_flow():
  params = make_params(5, 3, r=0.5, p=0.7, q=0.6)
  dist = solve_stationary(params, eps=1e-12)
  measures = compute_measures(params, dist)
  marginal_x = dist.probs.sum(axis=0)
  inflow = np.dot(measures.lambda_, marginal_x)
  outflow = np.dot(params.downstream, marginal_x)
  assert inflow == pytest.approx(outflow, rel=1e-8)
  assert measures.lambda_[params.k_down] == 0.0
  assert measures.cond_throughput[0] == 0.0
  assert np.all((measures.cond_throughput >= 0) &
                (measures.cond_throughput <= 1))
  assert measures.avg_echelon_wip == pytest.approx(
      np.dot(np.arange(4), marginal_x))
  assert 0.0 <= measures.overflow <= 1.0
  assert measures.degenerate == ()


def test_overflow_is_zero_without_local_buffer_pressure():
  # k_up - k_down + 1 = 3: an arrival must find at least 3 parts locally.
  params = make_params(3, 1, r=0.5, p=1.0, q=0.5)
  dist = TriangularDistribution.from_mapping(
      3, 1, {(0, 0): 0.25, (1, 0): 0.25, (2, 0): 0.25, (2, 1): 0.25})
  assert compute_measures(params, dist).overflow == 0.0


def test_zero_mass_columns_flagged_as_degenerate():
  params = make_params(3, 2)
  dist = TriangularDistribution.from_mapping(3, 2, {(0, 0): 1.0})
  measures = compute_measures(params, dist)
  flagged = {(f.measure, f.x) for f in measures.degenerate}
  assert ('lambda', 1) in flagged
  assert ('v', 3) in flagged
  assert ('lambda', 2) not in flagged
  assert average_echelon_wip(dist) == 0.0


def test_birth_death_detailed_balance():
  up = np.array([0.3, 0.2, 0.25, 0.1])
  down = np.array([0.0, 0.4, 0.15, 0.3, 0.5])
  probs = birth_death_stationary(up, down)
  assert probs.sum() == pytest.approx(1.0)
  np.testing.assert_allclose(probs[:-1] * up, probs[1:] * down[1:])


def test_birth_death_mass_on_closed_class():
  probs = birth_death_stationary([0.5, 0.0, 0.5], [0.0, 0.5, 0.5, 0.5])
  assert probs[2] == 0.0 and probs[3] == 0.0
  assert probs[0] + probs[1] == pytest.approx(1.0)


def test_first_subsystem_flow_balance():
  q = np.array([0.0, 0.4, 0.5, 0.55, 0.6])
  result = solve_first_subsystem(0.7, q, 4)
  assert result.probs.sum() == pytest.approx(1.0)
  assert result.throughput == pytest.approx(np.dot(result.probs, q))
  assert result.lambda_.tolist() == [0.7, 0.7, 0.7, 0.7, 0.0]


def test_first_subsystem_with_reliable_machines_holds_one_part():
  result = solve_first_subsystem(1.0, [0.0, 1.0, 1.0], 2)
  assert result.probs[1] == pytest.approx(1.0)
  assert result.throughput == pytest.approx(1.0)


def test_first_subsystem_rejects_zero_downstream():
  with pytest.raises(DegenerateDownstream):
    solve_first_subsystem(0.5, [0.0, 0.5, 0.0], 2)


def test_first_subsystem_with_reliable_first_machine_skips_transient_zero():
  # With p1 = 1 only levels K_1 - 1 and K_1 recur; q(1) = 0 is never visited.
  result = solve_first_subsystem(1.0, [0.0, 0.0, 0.5, 0.6], 3)
  np.testing.assert_allclose(result.probs[:2], 0.0)
  assert result.probs.sum() == pytest.approx(1.0)
  assert result.throughput == pytest.approx(np.dot(result.probs,
                                                   [0.0, 0.0, 0.5, 0.6]))


def test_first_subsystem_rejects_zero_downstream_in_closed_class():
  with pytest.raises(DegenerateDownstream):
    solve_first_subsystem(1.0, [0.0, 0.5, 0.0, 0.6], 3)


def test_init_marginal_product_is_distribution_on_triangle():
  params = make_params(6, 3)
  dist = init_marginal_product(params)
  assert dist.total() == pytest.approx(1.0)
  ii, jj = np.indices(dist.probs.shape)
  assert np.all(dist.probs[ii + jj > 6] == 0.0)
  assert np.all(dist.probs >= 0.0)


@pytest.mark.parametrize('change', [
    dict(k_down=0), dict(k_down=5), dict(blocking=False),
])
def test_invalid_params_rejected(change):
  kwargs = dict(k_up=4, k_down=2, blocking=True)
  kwargs.update(change)
  with pytest.raises(SubsystemParamsError):
    make_params(**kwargs)


def test_boundary_values_enforced():
  base = make_params(3, 2)
  arrival = base.arrival.copy()
  arrival[3] = 0.1
  with pytest.raises(SubsystemParamsError):
    SubsystemParams(3, 2, arrival, base.production, base.downstream)
  with pytest.raises(SubsystemParamsError):
    SubsystemParams(3, 2, base.arrival, base.production, [0.0, 0.5])


def test_unblocked_obsolete_subsystem():
  params = make_params(3, 3, blocking=False)
  dist = solve_stationary(params, eps=1e-11)
  np.testing.assert_allclose(dist.to_vector(),
                             dense_stationary(transition_matrix(params)),
                             atol=1e-8)
