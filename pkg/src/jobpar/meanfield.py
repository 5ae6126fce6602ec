"""Mean-field model of a tagged server.

In the large-n limit a tagged queue behaves as an M/M/1 queue with
reneging: arrivals at rate ``d*lam``, service at rate 1, and each of the
``k`` customers leaves independently at extra rate ``mu = (d-1) lam / EQ``,
where ``EQ`` is the stationary mean itself.  This module solves that fixed
point and integrates the transient ccdf equations.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

REL_EPS = 1e-15
MAX_TERMS = 10_000_000


def _check(lam: float, d: int) -> None:
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    if int(d) != d or d < 1:
        raise ValueError("d must be a positive integer")


def _series(x: float, lam: float, d: int, stop_above: float | None = None):
    """Partial sums of ``phi(x)``.

    Returns ``(sum, tail_bound)``.  With ``stop_above`` set, returns as soon as
    the partial sum exceeds it (terms are positive, so ``phi`` does too).
    """
    c = (d - 1) * lam * x
    dl = d * lam
    term = 1.0 - lam
    total = term
    u = 0
    while True:
        u += 1
        ratio = dl / (1.0 + u * c)
        term *= ratio
        total += term
        if stop_above is not None and total > stop_above:
            return total, 0.0
        if not math.isfinite(total):
            return math.inf, 0.0
        nxt = dl / (1.0 + (u + 1) * c)
        if nxt < 1.0 and term <= REL_EPS * total:
            # ratios decrease in u, so the remainder is dominated by a geometric series
            return total, term * nxt / (1.0 - nxt)
        if u >= MAX_TERMS:
            raise RuntimeError(f"phi series did not converge at x={x}")


def phi(x: float, lam: float, d: int) -> float:
    """``sum_u (1-lam) prod_{v<=u} d lam / (1 + v (d-1) lam x)``.

    ``phi(0)`` is ``(1-lam)/(1-d lam)`` when ``d lam < 1`` and ``inf``
    otherwise.
    """
    _check(lam, d)
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0 or d == 1:
        dl = d * lam
        return (1.0 - lam) / (1.0 - dl) if dl < 1.0 else math.inf
    total, tail = _series(x, lam, d)
    return total + tail


def _exceeds_one(x: float, lam: float, d: int) -> bool:
    total, tail = _series(x, lam, d, stop_above=1.0)
    if total > 1.0:
        return True
    # a converged sum below 1 whose tail bound could reach 1 is still ambiguous
    if total + tail > 1.0:
        raise RuntimeError(f"cannot resolve sign of phi(x) - 1 at x={x}")
    return False


@dataclass(frozen=True)
class MeanFieldSolution:
    """Fixed point ``xi`` with its invariant distribution truncated at level K.

    ``pi`` sums to at least ``1 - tail_mass_bound`` and at most 1.
    """

    lam: float
    d: int
    xi: float
    mean_q: float
    mu: float
    pi: np.ndarray
    truncation_k: int
    tail_mass_bound: float

    def ccdf(self, levels: int | None = None) -> np.ndarray:
        """``ybar[k] = P(Q >= k)`` for ``k = 0 .. K+1`` (``ybar[0] = 1``)."""
        tail = np.append(np.cumsum(self.pi[::-1])[::-1], 0.0)
        tail[0] = 1.0
        if levels is None:
            return tail
        out = np.zeros(levels)
        m = min(levels, tail.size)
        out[:m] = tail[:m]
        return out


def invariant_distribution(lam: float, d: int, mu: float, tail_eps: float = 1e-10):
    """``pi_u = (1-lam) prod_{v<=u} d lam / (1 + v mu)`` until the tail is below ``tail_eps``.

    Returns ``(pi, tail_bound)``.
    """
    dl = d * lam
    terms = [1.0 - lam]
    u = 0
    while True:
        u += 1
        terms.append(terms[-1] * dl / (1.0 + u * mu))
        nxt = dl / (1.0 + (u + 1) * mu)
        if nxt < 1.0:
            bound = terms[-1] * nxt / (1.0 - nxt)
            if bound < tail_eps:
                return np.array(terms), bound
        if u >= MAX_TERMS:
            raise RuntimeError("invariant distribution did not decay")


def solve_fixed_point(lam: float, d: int, tol: float = 1e-10) -> MeanFieldSolution:
    """Unique root ``xi`` of ``phi(xi) = 1``; the mean queue length is ``1/xi``.

    Bisection on the strictly decreasing ``phi``: the bracket starts at
    ``[1e-9, 1]`` and its upper end doubles until ``phi(hi) < 1``.
    """
    _check(lam, d)
    if d < 2:
        raise ValueError("the fixed point exists for d >= 2 only")
    if not tol > 0:
        raise ValueError("tol must be positive")
    lo, hi = 1e-9, 1.0
    while not _exceeds_one(lo, lam, d):
        lo /= 10.0
        if lo < 1e-300:
            raise RuntimeError("failed to bracket the fixed point from below")
    while _exceeds_one(hi, lam, d):
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise RuntimeError("failed to bracket the fixed point from above")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if _exceeds_one(mid, lam, d):
            lo = mid
        else:
            hi = mid
    # phi(hi) < 1 < phi(lo): take hi so the truncated pi never sums above 1
    xi = hi
    mu = (d - 1) * lam * xi
    pi, tail = invariant_distribution(lam, d, mu)
    gap = phi(lo, lam, d) - phi(hi, lam, d)
    return MeanFieldSolution(lam=lam, d=d, xi=xi, mean_q=1.0 / xi, mu=mu, pi=pi,
                             truncation_k=len(pi) - 1, tail_mass_bound=tail + gap)


def mean_queue_length(lam: float, d: int) -> float:
    """Mean-field mean queue length; ``lam/(1-lam)`` for ``d = 1``."""
    if d == 1:
        _check(lam, d)
        return lam / (1.0 - lam)
    return solve_fixed_point(lam, d).mean_q


def heavy_traffic_constant(d: int) -> float:
    if d < 2:
        raise ValueError("d must be at least 2")
    return (2 * d - 3) / (2 * (d - 1)) * math.log(4 * d / (4 * d - 1))


def heavy_traffic_bound(lam: float, d: int) -> tuple[float, bool]:
    """``(-log(1-lam)/c_d, applicable)``; the bound holds for ``lam > (4d-2)/(4d-1)``."""
    c = heavy_traffic_constant(d)
    applicable = (4 * d - 2) / (4 * d - 1) < lam < 1.0
    return -math.log1p(-lam) / c, applicable


def stationary_cdf(sol: MeanFieldSolution) -> np.ndarray:
    return np.cumsum(sol.pi)


# --------------------------------------------------------------------------
# transient equations
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CcdfState:
    ybar: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        y = np.asarray(self.ybar, dtype=float)
        if y.ndim != 1 or y.size < 2:
            raise ValueError("ybar needs at least levels 0 and 1")
        if y[0] != 1.0:
            raise ValueError("ybar[0] must equal 1")
        if np.any(y < 0) or np.any(y > 1) or np.any(np.diff(y) > 1e-12):
            raise ValueError("ybar must be a nonincreasing sequence in [0, 1]")
        object.__setattr__(self, "ybar", y)

    @classmethod
    def empty(cls, levels: int) -> "CcdfState":
        y = np.zeros(levels)
        y[0] = 1.0
        return cls(y)


def service_ratio(ybar: np.ndarray) -> float:
    """``ybar_1 / sum_{l>=1} ybar_l``, taken as 1 on the empty state.

    Near emptiness all mass sits on levels 0 and 1, where the denominator
    equals ``ybar_1``; the ratio therefore tends to 1.
    """
    s = float(np.sum(ybar[1:]))
    if ybar[1] <= 0.0 or s <= 0.0:
        return 1.0
    return float(ybar[1]) / s


def ode_rates(state: CcdfState | np.ndarray, lam: float, d: int):
    """Up and down transition rates of the tagged queue.

    Returns ``(up, down)`` arrays indexed by the source level ``k``:
    ``up[k] = d lam`` and ``down[k] = 1 + k (d-1) ratio`` (``down[0] = 0``).
    """
    y = state.ybar if isinstance(state, CcdfState) else np.asarray(state, dtype=float)
    ratio = service_ratio(y)
    k = np.arange(y.size)
    up = np.full(y.size, d * lam)
    down = 1.0 + k * (d - 1) * ratio
    down[0] = 0.0
    return up, down


def ode_rhs(ybar: np.ndarray, lam: float, d: int) -> np.ndarray:
    """Time derivative of the ccdf; entry 0 is zero and ``ybar_{K+1} = 0``.

    ``d ybar_k/dt = d lam (ybar_{k-1} - ybar_k) - down[k] (ybar_k - ybar_{k+1})``.
    """
    y = np.asarray(ybar, dtype=float)
    _, down = ode_rates(y, lam, d)
    nxt = np.append(y[1:], 0.0)
    out = np.zeros_like(y)
    out[1:] = d * lam * (y[:-1] - y[1:]) - down[1:] * (y[1:] - nxt[1:])
    return out


@dataclass
class OdeTrajectory:
    times: np.ndarray
    ybar: np.ndarray
    truncation_warning: bool
    max_violation: float

    def at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.times - t)))
        return self.ybar[i]

    @property
    def final(self) -> CcdfState:
        return CcdfState(self.ybar[-1], float(self.times[-1]))


def integrate_ode(initial: CcdfState, horizon: float, step: float, lam: float, d: int,
                  truncation_k: int | None = None, record_every: int = 1) -> OdeTrajectory:
    """Fixed-step classical Runge-Kutta integration of the ccdf equations.

    Levels ``1..K`` evolve; ``ybar_0 = 1`` and ``ybar_{K+1} = 0``.  After each
    step the state is clamped to ``[0, 1]`` and made nonincreasing in ``k``;
    the largest correction is reported as ``max_violation``.  The
    truncation flag is raised if ``ybar_K`` ever exceeds 1e-6.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if truncation_k is None:
        truncation_k = solve_fixed_point(lam, d).truncation_k if d >= 2 else 200
    K = int(truncation_k)
    y = np.zeros(K + 1)
    m = min(K + 1, initial.ybar.size)
    y[:m] = initial.ybar[:m]
    nsteps = int(math.ceil(horizon / step - 1e-9))
    t0 = initial.time
    times, path = [t0], [y.copy()]
    flag = bool(y[K] > 1e-6)
    worst = 0.0
    f = lambda v: ode_rhs(v, lam, d)
    for i in range(1, nsteps + 1):
        h = min(step, horizon - (i - 1) * step)
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        raw = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        raw[0] = 1.0
        fixed = np.minimum.accumulate(np.clip(raw, 0.0, 1.0))
        worst = max(worst, float(np.max(np.abs(fixed - raw))))
        y = fixed
        if y[K] > 1e-6:
            flag = True
        if i % record_every == 0 or i == nsteps:
            times.append(t0 + (i - 1) * step + h)
            path.append(y.copy())
    if flag:
        warnings.warn(f"truncation level K={K} too small: ybar_K exceeded 1e-6", RuntimeWarning)
    return OdeTrajectory(np.array(times), np.array(path), flag, worst)
