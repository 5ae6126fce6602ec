import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from jobpar import meanfield as mf
from oracles import mf_mean_by_consistency

# mean-field means computed by the mpmath consistency oracle and frozen
FROZEN_MEANS = {
    (0.3, 2): 0.37868687600165046,
    (0.3, 4): 0.3660052141668218,
    (0.9, 2): 3.3376520447193228,
    (0.9, 4): 2.716993662017109,
    (0.5, 3): 0.7438284573303543,
    (0.99, 2): 8.670437003492133,
    (0.1, 6): 0.10586882779364441,
}


def test_phi_boundary_values():
    assert mf.phi(0.0, 0.3, 2) == pytest.approx(1.75)
    assert mf.phi(0.0, 0.6, 2) == math.inf
    assert mf.phi(1e6, 0.5, 2) == pytest.approx(0.5, abs=1e-5)
    with pytest.raises(ValueError):
        mf.phi(1.0, 1.2, 2)
    with pytest.raises(ValueError):
        mf.phi(-1.0, 0.5, 2)


@given(st.floats(0.05, 0.95), st.integers(2, 6), st.floats(1e-3, 50), st.floats(1.01, 3))
def test_phi_strictly_decreasing(lam, d, x, factor):
    assert mf.phi(x, lam, d) > mf.phi(x * factor, lam, d)


@pytest.mark.parametrize("key", sorted(FROZEN_MEANS))
def test_fixed_point_against_frozen_oracle(key):
    assert mf.solve_fixed_point(*key).mean_q == pytest.approx(FROZEN_MEANS[key], abs=1e-8)


def test_oracle_still_reproduces_frozen_value():
    assert mf_mean_by_consistency(0.9, 2) == pytest.approx(FROZEN_MEANS[(0.9, 2)], abs=1e-12)


@given(st.floats(0.01, 0.99), st.integers(2, 8))
def test_solution_invariants(lam, d):
    s = mf.solve_fixed_point(lam, d)
    assert s.pi[0] == 1.0 - lam
    assert np.all(s.pi > 0)
    assert 1.0 - s.tail_mass_bound <= s.pi.sum() <= 1.0
    assert s.mu * s.mean_q == pytest.approx((d - 1) * lam, rel=1e-12)
    mean = float(np.arange(s.pi.size) @ s.pi)
    assert mean == pytest.approx(s.mean_q, abs=s.truncation_k * s.tail_mass_bound + 1e-8)
    # local balance
    u = np.arange(s.pi.size - 1)
    np.testing.assert_allclose(s.pi[:-1] * d * lam, s.pi[1:] * (1 + (u + 1) * s.mu), rtol=1e-12)


def test_solver_errors():
    with pytest.raises(ValueError):
        mf.solve_fixed_point(0.5, 2, tol=0)
    with pytest.raises(ValueError):
        mf.solve_fixed_point(0.5, 1)
    with pytest.raises(ValueError):
        mf.solve_fixed_point(1.0, 2)
    assert mf.mean_queue_length(0.5, 1) == pytest.approx(1.0)


def test_heavy_traffic_bound():
    assert mf.heavy_traffic_constant(2) == pytest.approx(0.5 * math.log(8 / 7))
    assert mf.heavy_traffic_constant(2) == pytest.approx(0.06677, abs=1e-5)
    assert mf.heavy_traffic_bound(0.9, 2)[1] is True
    assert mf.heavy_traffic_bound(0.8, 2)[1] is False
    with pytest.raises(ValueError):
        mf.heavy_traffic_bound(0.9, 1)


def test_stationary_cdf():
    s = mf.solve_fixed_point(0.3, 2)
    cdf = mf.stationary_cdf(s)
    assert cdf[0] == 0.7
    assert np.all(np.diff(cdf) > 0)
    assert cdf[-1] >= 1 - s.tail_mass_bound


def test_ode_rates():
    s = mf.solve_fixed_point(0.9, 2)
    y = s.ccdf()
    assert mf.service_ratio(y) == pytest.approx(0.9 / s.mean_q, rel=1e-8)
    up, down = mf.ode_rates(mf.CcdfState.empty(5), 0.7, 3)
    assert np.allclose(up, 3 * 0.7)
    assert down[1] == pytest.approx(1 + 2)


def test_ccdf_state_validation():
    mf.CcdfState(np.array([1.0, 0.5, 0.2]))
    for bad in ([0.9, 0.5], [1.0, 0.2, 0.5], [1.0, 1.2], [1.0, -0.1]):
        with pytest.raises(ValueError):
            mf.CcdfState(np.array(bad))


@pytest.mark.parametrize("lam,d", [(0.3, 2), (0.9, 2), (0.9, 4), (0.7, 3)])
def test_stationary_point_is_ode_fixed_point(lam, d):
    y = mf.solve_fixed_point(lam, d).ccdf()
    assert np.max(np.abs(mf.ode_rhs(y, lam, d))) < 1e-8


def test_ode_from_empty_is_monotone_and_converges():
    traj = mf.integrate_ode(mf.CcdfState.empty(2), 200.0, 0.01, 0.9, 2, record_every=50)
    assert not traj.truncation_warning and traj.max_violation <= 1e-9
    assert np.all(np.diff(traj.ybar, axis=0) >= -1e-12)
    assert traj.ybar[-1][1] == pytest.approx(0.9, abs=1e-4)
    assert traj.times[-1] == pytest.approx(200.0)


def test_ode_step_halving():
    kw = dict(initial=mf.CcdfState.empty(2), horizon=5.0, lam=0.8, d=2, truncation_k=30)
    a = mf.integrate_ode(step=0.02, **kw).ybar[-1]
    b = mf.integrate_ode(step=0.01, **kw).ybar[-1]
    c = mf.integrate_ode(step=0.005, **kw).ybar[-1]
    # fourth-order: errors shrink by about 16 per halving
    assert np.max(np.abs(b - c)) < np.max(np.abs(a - b)) / 8 + 1e-13
    assert np.max(np.abs(b - c)) < 1e-8


def test_ode_truncation_flag():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        traj = mf.integrate_ode(mf.CcdfState.empty(2), 30.0, 0.01, 0.95, 2, truncation_k=3)
    assert traj.truncation_warning
