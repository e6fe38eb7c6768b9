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

"""EBL - Exact chain tests."""
import numpy as np
import pytest
from scipy import stats

from decomposition import evaluate
from ebl_errors import LineEvaluationError
from exact_oracle import TooLarge
from exact_oracle import build_chain
from exact_oracle import evaluate_exact
from exact_oracle import exact_measures
from exact_oracle import stationary
from exact_oracle import state_index
from line_model import LineSpec
from line_model import state_count_eb
from simulator import SimConfig
from simulator import eligible_eb
from simulator import estimate
from simulator import run_replications
from simulator import simulate
from simulator import state_frequencies
from simulator import step_eb
from subsystem_solver import solve_first_subsystem


def test_eb_index_enumerates_feasible_states():
  spec = LineSpec(4, (0.5,) * 4, (1, 0, 2))
  index = state_index(spec)
  assert len(index) == state_count_eb(spec.echelon)
  x = index.echelon_states()
  assert np.all(x[:, :-1] >= x[:, 1:])
  assert np.all(x <= np.asarray(spec.echelon.K))
  assert np.all(index.states >= 0)
  assert len({tuple(s) for s in index.states.tolist()}) == len(index)


def test_index_lookup_round_trips_and_rejects_outsiders():
  index = state_index(LineSpec(3, (0.5,) * 3, (1, 1)))
  idx = index.lookup(index.states)
  np.testing.assert_array_equal(idx, np.arange(len(index)))
  assert index.state(int(idx[-1])) == tuple(index.states[-1].tolist())
  with pytest.raises(LineEvaluationError):
    index.lookup(np.array([[2, 2]]))


def test_ib_index_is_full_product():
  spec = LineSpec(3, (0.5,) * 3, (1, 2), policy='ib')
  assert len(state_index(spec)) == 3 * 4


@pytest.mark.parametrize('policy', ['eb', 'ib'])
def test_chain_is_row_stochastic(policy):
  spec = LineSpec(4, (0.4, 0.9, 0.6, 0.7), (1, 1, 2), policy=policy)
  index, matrix = build_chain(spec)
  assert matrix.shape == (len(index), len(index))
  np.testing.assert_allclose(np.asarray(matrix.sum(axis=1)).ravel(), 1.0)


def test_state_cap_enforced():
  with pytest.raises(TooLarge):
    build_chain(LineSpec(4, (0.5,) * 4, (5, 5, 5)), cap=100)


def test_stationary_of_small_chains():
  np.testing.assert_allclose(stationary(np.array([[0.9, 0.1], [0.5, 0.5]])),
                             [5 / 6, 1 / 6])
  np.testing.assert_allclose(stationary(np.array([[0.0, 1.0], [1.0, 0.0]])),
                             [0.5, 0.5])


def test_reducible_chain_falls_back_to_start():
  pi = stationary(np.eye(3), start=np.array([1.0, 0.0, 0.0]))
  np.testing.assert_allclose(pi, [1.0, 0.0, 0.0])


@pytest.mark.parametrize('policy', ['eb', 'ib'])
def test_exact_flow_is_conserved(policy):
  spec = LineSpec(4, (0.6, 0.8, 0.5, 0.9), (1, 2, 1), policy=policy)
  report = evaluate_exact(spec)
  assert 0.0 < report.throughput <= 0.5
  assert sum(report.stage_wip) == pytest.approx(report.echelon_wip[0])
  if policy == 'eb':
    index, matrix = build_chain(spec)
    pi = stationary(matrix)
    produce = eligible_eb(index.states, spec.echelon) * np.asarray(
        spec.production_probs)
    rates = pi.dot(produce)
    np.testing.assert_allclose(rates, rates[-1], rtol=1e-9)
    assert len(report.overflow) == 2
  else:
    assert report.overflow == ()


def test_two_machine_exact_throughput_closed_form():
  # Zero buffer: y alternates 0 -> 1 w.p. p1, 1 -> 0 w.p. p2.
  p1, p2 = 0.6, 0.8
  report = evaluate_exact(LineSpec(2, (p1, p2), (0,)))
  assert report.throughput == pytest.approx(p1 * p2 / (p1 + p2))


LINES = [
    (3, (1, 1)), (3, (2, 1)), (3, (0, 3)), (3, (2, 3)),
    (4, (1, 1, 1)), (4, (2, 1, 1)), (4, (0, 1, 2)),
]
PROBS = [0.4, 0.6, 0.8]


@pytest.mark.parametrize('n_machines,caps', LINES)
@pytest.mark.parametrize('pattern', ['flat', 'rising', 'falling'])
@pytest.mark.parametrize('level', PROBS)
def test_decomposition_close_to_exact(n_machines, caps, pattern, level):
  if pattern == 'flat':
    probs = (level,) * n_machines
  else:
    probs = tuple(PROBS[(PROBS.index(level) + k) % 3]
                  for k in range(n_machines))
    if pattern == 'falling':
      probs = probs[::-1]
  spec = LineSpec(n_machines, probs, caps)
  assert spec.echelon.K[0] <= 6
  exact = evaluate_exact(spec)
  approx = evaluate(spec, eps=1e-6)
  assert approx.throughput == pytest.approx(exact.throughput, rel=1e-2)


@pytest.mark.slow
@pytest.mark.parametrize('probs,caps', [
    ((0.6, 0.8, 0.7), (1, 1)),
    ((0.4, 0.6, 0.8, 0.6), (1, 0, 2)),
])
def test_simulated_frequencies_follow_exact_distribution(probs, caps):
  spec = LineSpec(len(probs), probs, caps)
  index, matrix = build_chain(spec)
  pi = stationary(matrix)
  counts = state_frequencies(spec, horizon=400000, seed=99, thin=100)
  total = sum(counts.values())
  observed = np.zeros(len(index))
  for y, count in counts.items():
    observed[index.lookup(np.array([y]))[0]] = count
  expected = pi * total
  # Pool states with small expected counts into one cell
  small = expected < 5
  f_obs = np.append(observed[~small], observed[small].sum())
  f_exp = np.append(expected[~small], expected[small].sum())
  if f_exp[-1] == 0:
    f_obs, f_exp = f_obs[:-1], f_exp[:-1]
  f_exp *= f_obs.sum() / f_exp.sum()
  assert stats.chisquare(f_obs, f_exp).pvalue > 0.001


def test_step_frequencies_match_chain_rows():
  spec = LineSpec(3, (0.6, 0.5, 0.7), (1, 1))
  index, matrix = build_chain(spec)
  rng = np.random.default_rng(7)
  draws = rng.random((20000, 3)) < np.asarray(spec.production_probs)
  for row in range(len(index)):
    start = np.repeat(index.states[row][None, :], len(draws), axis=0)
    successors = step_eb(start, draws, spec.echelon)[0]
    observed = np.bincount(index.lookup(successors), minlength=len(index))
    expected = matrix[row].toarray().ravel()
    freq = observed / len(draws)
    sigma = np.sqrt(expected * (1 - expected) / len(draws))
    assert np.all(np.abs(freq - expected) <= 3 * sigma + 1e-3)


def test_two_machine_chain_is_first_subsystem():
  spec = LineSpec(2, (0.6, 0.6), (1,))
  index, matrix = build_chain(spec)
  assert len(index) == 3
  pi = stationary(matrix)
  first = solve_first_subsystem(0.6, [0.0, 0.6, 0.6], 2)
  np.testing.assert_allclose(pi[index.lookup(np.array([[0], [1], [2]]))],
                             first.probs, atol=1e-12)
  assert exact_measures(spec, index, pi).throughput == pytest.approx(
      first.throughput)


def test_trivial_and_doubly_stochastic_chains():
  np.testing.assert_allclose(stationary(np.array([[1.0]])), [1.0])
  doubly = np.array([[0.2, 0.5, 0.3], [0.5, 0.3, 0.2], [0.3, 0.2, 0.5]])
  np.testing.assert_allclose(stationary(doubly), [1 / 3] * 3)


def test_saturated_line_is_exact():
  report = evaluate_exact(LineSpec(3, (1.0, 1.0, 1.0), (1, 1)))
  assert report.throughput == pytest.approx(1.0)


def test_seven_machine_example_exceeds_state_cap():
  with pytest.raises(TooLarge):
    build_chain(LineSpec(7, (0.9,) * 7, (5,) * 6))


def test_ib_simulation_agrees_with_exact_chain():
  spec = LineSpec(3, (0.6, 0.6, 0.6), (1, 1), policy='ib')
  exact = evaluate_exact(spec)
  sim = simulate(spec, SimConfig(replications=10, horizon=50000,
                                 base_seed=2024, warmup=0))
  assert abs(sim.throughput.mean - exact.throughput) <= (
      3 * sim.throughput.half_width_95)
  for got, want in zip(sim.stage_wip, exact.stage_wip):
    assert abs(got.mean - want) <= 3 * got.half_width_95 + 1e-3


@pytest.mark.slow
@pytest.mark.parametrize('policy', ['eb', 'ib'])
def test_confidence_intervals_cover_exact_throughput(policy):
  spec = LineSpec(3, (0.6, 0.7, 0.6), (1, 1), policy=policy)
  exact = evaluate_exact(spec).throughput
  covered = 0
  seeds = range(20)
  for seed in seeds:
    runs = run_replications(
        spec, SimConfig(replications=5, horizon=10000, base_seed=seed))
    interval = estimate(runs['throughput'], confidence=0.99)
    covered += abs(interval.mean - exact) <= interval.half_width_95
  assert covered >= 0.9 * len(seeds)
