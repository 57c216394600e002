"""The (M, K, rho, beta) drift walk, its dominating chain and its bounds.

Above level M the dominating chain Y either steps up by one or, with
probability rho, drops by K (never below M).  With rho * K = 1 + beta the
drift above M is -beta, which yields

    E[Y] <= M + K (1 + beta) / beta
    P[Y > M + K (1 + beta) / beta * ln(2 / delta)] <= delta.

The stationary law is geometric above M: s_{M+i} = c alpha^i, where alpha
solves alpha = (1 - rho) + rho alpha^{K+1}.  Writing alpha = 1 - x / (K + 1)
and replacing (1 - x/k')^k' by e^{-x} turns this into the root of

    f(x) = e^{-x} - 1 + x / (1 + beta'),   beta' = beta + rho,

which lies in [2 beta'/(1 + beta'), 4 beta'/(1 + beta')] when beta' < 3/5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

BETA_LIMIT = 0.6


class RegimeError(ValueError):
    """Parameters outside the range where the bounds or root bracket hold."""


@dataclass(frozen=True)
class WalkParams:
    M: int
    K: float
    rho: float
    beta: float

    def __post_init__(self) -> None:
        if self.M < 0 or self.K <= 0 or self.beta <= 0 or not 0 < self.rho <= 1:
            raise ValueError(f"invalid walk parameters {self}")
        if abs(self.rho * self.K - (1 + self.beta)) > 1e-12:
            raise ValueError(f"rho*K = {self.rho * self.K} but 1 + beta = {1 + self.beta}")

    @classmethod
    def from_drift(cls, M: int, K: float, beta: float) -> "WalkParams":
        return cls(M, K, (1 + beta) / K, beta)

    @property
    def beta_prime(self) -> float:
        return self.beta + self.rho

    @property
    def k_prime(self) -> float:
        return self.K + 1


@dataclass(frozen=True)
class SteadyState:
    params: WalkParams
    s_M: float
    alpha: float
    c: float
    x: float
    alpha_approx: float
    x_approx: float

    def prob(self, level: int) -> float:
        """Stationary probability of Y == level."""
        i = level - self.params.M
        if i < 0:
            return 0.0
        if i == 0:
            return self.s_M
        return self.c * self.alpha ** i

    def probs(self, n_levels: int) -> np.ndarray:
        """s_M, s_{M+1}, ..., s_{M+n_levels-1}."""
        i = np.arange(n_levels)
        out = self.c * self.alpha ** i
        out[0] = self.s_M
        return out

    @property
    def mean(self) -> float:
        return self.params.M + self.c * self.alpha / (1 - self.alpha) ** 2

    def tail(self, level: float) -> float:
        """P[Y > level]."""
        i = math.floor(level - self.params.M)
        if i < 0:
            return 1.0
        return self.c * self.alpha ** (i + 1) / (1 - self.alpha)

    def recurrence_residual(self, levels: int = 200) -> float:
        M, K = self.params.M, int(round(self.params.K))
        rho = self.params.rho
        worst = 0.0
        for ell in range(M + 1, M + levels + 1):
            r = self.prob(ell + 1) - (1 - rho) * self.prob(ell) - rho * self.prob(ell + K + 1)
            worst = max(worst, abs(r))
        return worst


def f(x: float, beta_prime: float) -> float:
    return math.exp(-x) - 1 + x / (1 + beta_prime)


def _bisect(g, lo: float, hi: float, tol: float, max_iter: int = 200) -> float:
    glo = g(lo)
    mid = lo
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if abs(gm) <= tol or hi - lo < 1e-16:
            return mid
        if (gm < 0) == (glo < 0):
            lo, glo = mid, gm
        else:
            hi = mid
    return mid


def root_bracket(params: WalkParams) -> tuple[float, float]:
    bp = params.beta_prime
    return 2 * bp / (1 + bp), 4 * bp / (1 + bp)


def solve_root(params: WalkParams) -> tuple[float, float]:
    """Nonzero root x of f and alpha = 1 - x / (K + 1)."""
    bp = params.beta_prime
    if bp >= BETA_LIMIT:
        raise RegimeError(f"beta + rho = {bp} must be below 3/5")
    lo, hi = root_bracket(params)
    if not f(lo, bp) < 0 < f(hi, bp):
        raise RegimeError(f"f does not change sign on [{lo}, {hi}]")
    x = _bisect(lambda t: f(t, bp), lo, hi, 1e-12)
    return x, 1 - x / params.k_prime


def solve_alpha_exact(params: WalkParams) -> tuple[float, float]:
    """Root of alpha = (1 - rho) + rho alpha^{K+1} in (0, 1), as (x, alpha).

    h(x) = (1 - rho) + rho (1 - x/k')^k' - (1 - x/k') is convex with h(0) = 0,
    h'(0) < 0 and h <= rho f, so its positive root lies in [lower bracket, k').
    """
    rho, kp = params.rho, params.k_prime

    def h(x: float) -> float:
        a = 1 - x / kp
        return (1 - rho) + rho * a ** kp - a

    lo = root_bracket(params)[0]
    if not h(lo) < 0:
        raise RegimeError("exact fixed-point equation has no bracketed root")
    x = _bisect(h, lo, kp, 1e-15)
    return x, 1 - x / kp


def steady_state(params: WalkParams) -> SteadyState:
    x_approx, alpha_approx = solve_root(params)
    x, alpha = solve_alpha_exact(params)
    K = int(round(params.K))
    # s_M = rho * sum_{i=1..K} c alpha^i ; normalization s_M + c alpha / (1 - alpha) = 1
    geo_K = alpha * (1 - alpha ** K) / (1 - alpha)
    c = 1.0 / (params.rho * geo_K + alpha / (1 - alpha))
    return SteadyState(params, params.rho * c * geo_K, alpha, c, x, alpha_approx, x_approx)


def expected_value_bound(params: WalkParams) -> float:
    if params.beta > BETA_LIMIT:
        raise RegimeError(f"beta = {params.beta} exceeds 3/5")
    return params.M + params.K * (1 + params.beta) / params.beta


def tail_bound(params: WalkParams, delta: float) -> float:
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if params.beta > BETA_LIMIT:
        raise RegimeError(f"beta = {params.beta} exceeds 3/5")
    return params.M + params.K * (1 + params.beta) / params.beta * math.log(2 / delta)


def simulate_walk(params: WalkParams, steps: int, seed: int) -> np.ndarray:
    """Trajectory Y_1..Y_steps of the dominating chain, starting at Y_1 = 0.

    Below M the walk climbs deterministically; from M it always moves to M+1.
    """
    K = params.K
    if K != int(K):
        raise ValueError("simulation needs an integer jump size K")
    K = int(K)
    M = params.M
    drops = (np.random.default_rng(seed).random(steps) < params.rho).tolist()
    out = np.empty(steps, dtype=np.int64)
    y = 0
    for t in range(steps):
        out[t] = y
        if y > M and drops[t]:
            y = max(y - K, M)
        else:
            y += 1
    return out


def walk_report(params: WalkParams, steps: int = 1_000_000, seed: int = 0,
                deltas: tuple[float, ...] = (0.05, 0.2)) -> dict:
    """Solver output, bounds and Monte Carlo statistics (last half of the run)."""
    ss = steady_state(params)
    traj = simulate_walk(params, steps, seed)[steps // 2:]
    levels = np.bincount(traj[traj >= params.M] - params.M, minlength=1)
    emp = levels / levels.sum()
    theo = ss.probs(len(emp))
    tv = 0.5 * (np.abs(emp - theo).sum() + max(0.0, 1 - theo.sum()))
    report = {
        "params": {"M": params.M, "K": params.K, "rho": params.rho, "beta": params.beta},
        "beta_prime": params.beta_prime,
        "root_bracket": list(root_bracket(params)),
        "x": ss.x_approx,
        "alpha": ss.alpha_approx,
        "f_at_x": f(ss.x_approx, params.beta_prime),
        "x_exact": ss.x,
        "alpha_exact": ss.alpha,
        "s_M": ss.s_M,
        "c": ss.c,
        "stationary_mean": ss.mean,
        "recurrence_residual": ss.recurrence_residual(),
        "expected_value_bound": expected_value_bound(params),
        "mc_steps": steps,
        "mc_mean": float(traj.mean()),
        "mc_total_variation": float(tv),
        "tail": {},
    }
    for d in deltas:
        b = tail_bound(params, d)
        report["tail"][f"{d:g}"] = {"bound": b, "mc_exceedance": float((traj > b).mean())}
    return report
