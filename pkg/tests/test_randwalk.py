from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.optimize import brentq

from neadchain import randwalk as rw
from neadchain.randwalk import RegimeError, WalkParams

NAMED = WalkParams(50, 20, 0.06, 0.2)

# valid (beta' < 3/5) grid used by several checks
GRID = [
    NAMED,
    WalkParams.from_drift(0, 10, 0.3),
    WalkParams.from_drift(20, 30, 0.1),
    WalkParams.from_drift(5, 8, 0.25),
    WalkParams.from_drift(100, 50, 0.4),
]


def test_params_invariant():
    with pytest.raises(ValueError):
        WalkParams(50, 20, 0.07, 0.2)
    assert NAMED.beta_prime == pytest.approx(0.26)
    assert NAMED.k_prime == 21


def test_f_has_trivial_root():
    assert rw.f(0.0, 0.26) == 0.0


def test_named_bracket_and_root():
    lo, hi = rw.root_bracket(NAMED)
    assert lo == pytest.approx(0.52 / 1.26) and hi == pytest.approx(1.04 / 1.26)
    assert (round(lo, 4), round(hi, 4)) == (0.4127, 0.8254)
    x, alpha = rw.solve_root(NAMED)
    ref = brentq(lambda t: rw.f(t, 0.26), lo, hi, xtol=1e-15)
    assert x == pytest.approx(ref, abs=1e-10)
    assert abs(x - 0.480) < 0.005
    assert abs(rw.f(x, 0.26)) <= 1e-12
    assert alpha == pytest.approx(1 - x / 21)


@pytest.mark.parametrize("params", GRID)
def test_root_inside_bracket(params):
    lo, hi = rw.root_bracket(params)
    x, alpha = rw.solve_root(params)
    assert lo <= x <= hi and x > 0
    assert abs(rw.f(x, params.beta_prime)) <= 1e-12
    assert 0 < alpha < 1


def test_solver_guard():
    with pytest.raises(RegimeError):
        rw.solve_root(WalkParams.from_drift(10, 2, 0.5))  # beta' = 0.5 + 0.75


def test_exact_alpha_matches_polynomial_root():
    # alpha = (1 - rho) + rho alpha^(K+1): roots of rho a^21 - a + (1 - rho)
    coeffs = np.zeros(22)
    coeffs[0] = NAMED.rho
    coeffs[-2] = -1.0
    coeffs[-1] = 1 - NAMED.rho
    roots = np.roots(coeffs)
    real = sorted(r.real for r in roots if abs(r.imag) < 1e-9 and 0 < r.real < 1 - 1e-9)
    assert len(real) == 1
    _, alpha = rw.solve_alpha_exact(NAMED)
    assert alpha == pytest.approx(real[0], abs=1e-12)


@pytest.mark.parametrize("params", GRID)
def test_steady_state_invariants(params):
    ss = rw.steady_state(params)
    assert 0 < ss.alpha < 1
    assert ss.s_M + ss.c * ss.alpha / (1 - ss.alpha) == pytest.approx(1.0, abs=1e-9)
    assert ss.recurrence_residual(200) <= 1e-9
    assert (ss.probs(300) >= 0).all()
    # s_M = rho * sum_{i=1..K} s_{M+i}
    K = int(params.K)
    assert ss.s_M == pytest.approx(params.rho * ss.probs(K + 1)[1:].sum(), rel=1e-12)


def test_steady_state_mean_and_tail():
    ss = rw.steady_state(NAMED)
    probs = ss.probs(20_000)
    levels = NAMED.M + np.arange(20_000)
    assert ss.mean == pytest.approx((probs * levels).sum(), rel=1e-9)
    assert ss.tail(NAMED.M + 10) == pytest.approx(probs[11:].sum(), rel=1e-9)
    assert ss.tail(NAMED.M - 1) == 1.0


def test_expected_value_bound():
    assert rw.expected_value_bound(NAMED) == pytest.approx(170)
    assert rw.expected_value_bound(WalkParams(0, 2, 0.75, 0.5)) == pytest.approx(6)
    with pytest.raises(RegimeError):
        rw.expected_value_bound(WalkParams.from_drift(0, 10, 0.7))


def test_tail_bound():
    assert rw.tail_bound(NAMED, 0.2) == pytest.approx(50 + 120 * math.log(10))
    assert round(rw.tail_bound(NAMED, 0.2), 1) == 326.3
    for delta in (0.0, 1.0, 2.0):
        with pytest.raises(ValueError):
            rw.tail_bound(NAMED, delta)


def test_walk_from_m_always_climbs():
    params = WalkParams(3, 3, 0.5, 0.5)
    traj = rw.simulate_walk(params, 5000, seed=1)
    assert traj[0] == 0 and traj[:4].tolist() == [0, 1, 2, 3]
    at_m = np.flatnonzero(traj[:-1] == 3)
    assert (traj[at_m + 1] == 4).all()
    assert traj.min() >= 0 and (traj[4:] >= 3).all()


def test_walk_transition_from_m_plus_one():
    params = WalkParams(3, 3, 0.5, 0.5)
    traj = rw.simulate_walk(params, 200_000, seed=2)
    src = np.flatnonzero(traj[:-1] == 4)
    nxt = traj[src + 1]
    assert set(nxt.tolist()) == {3, 5}
    assert abs((nxt == 3).mean() - 0.5) < 0.01


def test_walk_requires_integer_jump():
    with pytest.raises(ValueError):
        rw.simulate_walk(WalkParams.from_drift(5, 2.5, 0.2), 10, 0)


@pytest.mark.parametrize("params", GRID)
def test_monte_carlo_mean_below_bound(params):
    traj = rw.simulate_walk(params, 400_000, seed=3)[200_000:]
    assert traj.mean() <= rw.expected_value_bound(params)


def test_occupancy_matches_stationary_law():
    report = rw.walk_report(NAMED, 1_000_000, seed=0)
    assert report["mc_total_variation"] <= 0.02
    assert report["mc_mean"] <= 170
    assert abs(report["mc_mean"] - report["stationary_mean"]) < 5
    for delta, tail in report["tail"].items():
        assert tail["mc_exceedance"] <= float(delta)
