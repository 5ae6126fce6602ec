import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jobpar import coupling as cp
from jobpar.model import SystemConfig, SystemState, departure_rate, sample_class
from jobpar.simulator import SnapshotPlan, run_ctmc


def _random_state(rng, n, d, jobs):
    s = SystemState(n)
    for _ in range(jobs):
        s.add(sample_class(rng, n, d))
    return s


def _dominated_pair(rng, n, d, jobs, keep):
    upper = _random_state(rng, n, d, jobs)
    lower = SystemState(n)
    for cls in upper.jobs():
        if rng.random() < keep:
            lower.add(cls)
    return lower, upper


def test_equal_starts_stay_equal():
    rng = np.random.default_rng(1)
    s = _random_state(rng, 12, 2, 15)
    tr = cp.run_coupled(SystemConfig(12, 2, 0.6, seed=2), 50.0, s.copy(), s.copy())
    assert np.all(tr.w_values == 0) and tr.increases == tr.decreases == 0
    assert tr.final.lower == tr.final.upper


def test_invalid_pair_rejected():
    a = SystemState.from_jobs(5, [(0, 1)])
    with pytest.raises(ValueError):
        cp.CoupledState(a, SystemState(5))
    with pytest.raises(ValueError):
        cp.run_coupled(SystemConfig(5, 2, 0.5), 1.0, a, SystemState(5))


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4), st.floats(0.1, 0.9))
def test_dominance_along_random_paths(seed, d, lam):
    rng = np.random.default_rng(seed)
    n = 10
    lower, upper = _dominated_pair(rng, n, d, 20, 0.5)
    state = cp.CoupledState(lower, upper)
    cfg = SystemConfig(n, d, lam)
    arrivals = 0
    for _ in range(200):
        prev = state
        state, ev = cp.coupled_step(state, cfg, rng)
        assert state.lower.dominated_by(state.upper)
        assert np.all(state.lower.queue_lengths <= state.upper.queue_lengths)
        state.lower.check()
        state.upper.check()
        assert state.w >= 0
        if ev.kind == "arrival":
            arrivals += 1
            assert state.lower.total_jobs == prev.lower.total_jobs + 1
            assert state.upper.total_jobs == prev.upper.total_jobs + 1


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1))
def test_equal_class_rate_ordering(seed):
    rng = np.random.default_rng(seed)
    lower, upper = _dominated_pair(rng, 8, 2, 14, 0.6)
    for cls, x in lower.class_counts.items():
        if upper.class_counts[cls] == x:
            assert departure_rate(lower, cls) >= departure_rate(upper, cls) - 1e-12


def test_engine_rate_split_sums_to_marginals():
    rng = np.random.default_rng(5)
    lower, upper = _dominated_pair(rng, 9, 3, 12, 0.5)
    eng = cp._Engine(9, 3, 0.5, lower, upper)
    both, lo, up = eng.rates()
    rl = sum(departure_rate(lower, c) for c in lower.class_counts)
    ru = sum(departure_rate(upper, c) for c in upper.class_counts)
    assert float((both + lo).sum()) == pytest.approx(rl)
    assert float((both + up).sum()) == pytest.approx(ru)


def test_w_is_a_metric_on_dominated_pairs():
    rng = np.random.default_rng(7)
    for _ in range(50):
        lower, upper = _dominated_pair(rng, 8, 2, 10, 0.5)
        w = cp.distance(lower, upper)
        assert w >= 0
        assert (w == 0) == np.array_equal(lower.queue_lengths, upper.queue_lengths)


def test_violation_is_detected():
    eng = cp._Engine(4, 2, 0.5, SystemState(4), SystemState.from_jobs(4, [(0, 1)]))
    eng.xl[0] = 2
    eng.ql[[0, 1]] = 2
    with pytest.raises(AssertionError):
        eng.check()


def test_w_window_means_and_values():
    tr = cp.WTrace(np.array([0.0, 1.0, 3.0]), np.array([2.0, 1.0, 0.0]))
    assert list(tr.window_means([0.0, 1.0, 3.0, 5.0])) == [2.0, 1.0, 0.0]
    assert list(tr.value_at([0.5, 2.0, 10.0])) == [2.0, 1.0, 0.0]


def test_w_decreases_from_empty_lower():
    cfg = SystemConfig(30, 2, 0.7, seed=3)
    upper = run_ctmc(cfg, SnapshotPlan(50 / 0.3, 1, 0.0)).final_state()
    means = []
    for r in range(30):
        tr = cp.run_coupled(cfg, 40.0, SystemState(30), upper, rng=np.random.default_rng(r))
        means.append(tr.window_means([0, 5, 10, 20, 40]))
    m = np.mean(means, axis=0)
    assert np.all(np.diff(m) <= 0.02)
    assert m[0] > m[-1]


def test_monotone_start_report():
    rep = cp.monotone_start_check(SystemConfig(30, 2, 0.7, seed=1), [0, 1, 3, 8], 60)
    assert rep.ok
    assert np.all(rep.cdf[0] == 1.0)
    idle = cp.monotone_start_check(SystemConfig(10, 2, 0.0), [0, 1, 5], 5)
    assert idle.ok and idle.worst_z == 0 and np.all(idle.cdf == 1.0)


def test_total_variation():
    assert cp.total_variation([0, 0, 1, 1], [0, 0, 1, 1]) == 0
    assert cp.total_variation([0, 0], [1, 1]) == 1
    assert cp.total_variation([0, 1, 2, 3], [0, 0, 1, 1]) == pytest.approx(0.5)


def test_tv_curve_starts_near_lambda_and_decays():
    curve = cp.tv_convergence_curve(SystemConfig(40, 2, 0.7, seed=2), [0, 2, 30], 60, 200)
    (t0, tv0), _, (_, tv_end) = curve
    assert t0 == 0 and tv0 == pytest.approx(0.7, abs=0.03)
    assert tv_end < 0.06
    assert cp.time_to_tv(curve, 0.1) == 30
    assert cp.time_to_tv([(1, 0.5)], 0.1) == math.inf
