"""Two systems on one probability space, one dominating the other.

Both systems see the same arrivals.  For a class with fewer jobs in the
lower system, the two systems' departure clocks run independently.  For a
class with equal counts, the upper departure clock also removes a lower
job, and the lower system gets an extra clock of rate ``r - rbar``.  This
is valid because equal counts and smaller queues give ``r >= rbar``.
Clocks are redrawn after every event.  That is equivalent to picking the
next event with probability proportional to its rate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .model import Exponential, InvariantViolation, SystemConfig, SystemState
from .simulator import ccdf_from_queue_lengths, replica_generators, replica_queue_lengths, run_replicas

RATE_TOL = 1e-12


class DominanceViolation(InvariantViolation, AssertionError):
    pass


@dataclass
class CoupledState:
    lower: SystemState
    upper: SystemState

    def __post_init__(self):
        if self.lower.n != self.upper.n:
            raise ValueError("coupled systems must have the same number of servers")
        if not self.lower.dominated_by(self.upper):
            raise ValueError("lower state is not dominated by the upper state")

    @property
    def w(self) -> float:
        return distance(self.lower, self.upper)


def distance(lower: SystemState, upper: SystemState) -> float:
    """``W = (1/n) sum_j (qbar_j - q_j)``; a metric only on dominated pairs."""
    return float(np.sum(upper.queue_lengths - lower.queue_lengths)) / lower.n


@dataclass(frozen=True)
class Event:
    kind: str  # "arrival", "both", "lower" or "upper"
    servers: tuple
    dt: float


class _Engine:
    """Dense arrays over the classes present in either system."""

    def __init__(self, n: int, d: int, lam: float, lower: SystemState, upper: SystemState,
                 service_rate: float = 1.0):
        self.n, self.d, self.lam, self.rate = n, d, lam, service_rate
        self.index: dict[tuple, int] = {}
        self.srv = np.zeros((16, d), dtype=np.int64)
        self.xl = np.zeros(16, dtype=np.int64)
        self.xu = np.zeros(16, dtype=np.int64)
        self.k = 0
        self.ql = lower.queue_lengths.copy()
        self.qu = upper.queue_lengths.copy()
        for cls in set(lower.class_counts) | set(upper.class_counts):
            i = self._slot(cls)
            self.xl[i] = lower.class_counts.get(cls, 0)
            self.xu[i] = upper.class_counts.get(cls, 0)
        self.arrivals = 0
        self.events = 0

    def _slot(self, cls: tuple) -> int:
        i = self.index.get(cls)
        if i is not None:
            return i
        if self.k == len(self.xl):
            grow = len(self.xl)
            self.srv = np.vstack([self.srv, np.zeros((grow, self.d), dtype=np.int64)])
            self.xl = np.concatenate([self.xl, np.zeros(grow, dtype=np.int64)])
            self.xu = np.concatenate([self.xu, np.zeros(grow, dtype=np.int64)])
        i = self.k
        self.k += 1
        self.index[cls] = i
        self.srv[i] = cls
        self.xl[i] = self.xu[i] = 0
        return i

    def _drop(self, i: int) -> None:
        last = self.k - 1
        del self.index[tuple(int(s) for s in self.srv[i])]
        if i != last:
            self.srv[i] = self.srv[last]
            self.xl[i] = self.xl[last]
            self.xu[i] = self.xu[last]
            self.index[tuple(int(s) for s in self.srv[i])] = i
        self.k = last

    def rates(self):
        """Per-class ``(both, lower_only, upper_only)`` rates."""
        k = self.k
        srv = self.srv[:k]
        xl, xu = self.xl[:k], self.xu[:k]
        with np.errstate(divide="ignore"):
            il = np.where(self.ql > 0, 1.0 / self.ql, 0.0)
            iu = np.where(self.qu > 0, 1.0 / self.qu, 0.0)
        rl = self.rate * xl * il[srv].sum(axis=1)
        ru = self.rate * xu * iu[srv].sum(axis=1)
        eq = xl == xu
        gap = rl - ru
        if np.any(eq & (gap < -RATE_TOL * np.maximum(ru, 1.0))):
            raise DominanceViolation("lower departure rate below upper rate on an equal class")
        both = np.where(eq, ru, 0.0)
        lower = np.where(eq, np.maximum(gap, 0.0), rl)
        upper = np.where(eq, 0.0, ru)
        return both, lower, upper

    def step(self, rng: np.random.Generator) -> Event:
        both, lo, up = self.rates()
        arr = self.n * self.lam
        weights = np.concatenate([both, lo, up])
        total = arr + float(weights.sum())
        if total <= 0.0:
            return Event("none", (), math.inf)
        dt = rng.exponential(1.0 / total)
        u = rng.random() * total
        self.events += 1
        if u < arr:
            servers = tuple(int(s) for s in np.sort(rng.choice(self.n, self.d, replace=False)))
            i = self._slot(servers)
            self.xl[i] += 1
            self.xu[i] += 1
            self.ql[list(servers)] += 1
            self.qu[list(servers)] += 1
            self.arrivals += 1
            kind = "arrival"
        else:
            c = np.cumsum(weights)
            j = min(int(np.searchsorted(c, u - arr, side="right")), c.size - 1)
            while weights[j] <= 0.0:  # rounding can land on a zero-width bin
                j -= 1
            kind = ("both", "lower", "upper")[j // self.k]
            i = j % self.k
            servers = tuple(int(s) for s in self.srv[i])
            if kind in ("both", "lower"):
                self.xl[i] -= 1
                self.ql[list(servers)] -= 1
            if kind in ("both", "upper"):
                self.xu[i] -= 1
                self.qu[list(servers)] -= 1
            self.check(i)
            if self.xu[i] == 0:
                self._drop(i)
        return Event(kind, servers, dt)

    def check(self, i: int | None = None) -> None:
        if i is not None and not 0 <= self.xl[i] <= self.xu[i]:
            raise DominanceViolation(f"class counts {self.xl[i]} > {self.xu[i]} after event")
        if np.any(self.ql > self.qu) or np.any(self.ql < 0):
            raise DominanceViolation("lower queue length exceeds upper queue length")
        k = self.k
        if np.any(self.xl[:k] > self.xu[:k]) or np.any(self.xl[:k] < 0):
            raise DominanceViolation("class-count dominance lost")

    @property
    def w(self) -> float:
        return float(np.sum(self.qu - self.ql)) / self.n

    def states(self) -> CoupledState:
        lo, hi = SystemState(self.n), SystemState(self.n)
        for cls, i in self.index.items():
            if self.xl[i]:
                lo.add(cls, int(self.xl[i]))
            if self.xu[i]:
                hi.add(cls, int(self.xu[i]))
        return CoupledState(lo, hi)


def _service_rate(config: SystemConfig) -> float:
    if not isinstance(config.service_law, Exponential):
        raise ValueError("the coupling needs exponential service")
    return 1.0 / config.service_law.mean


def coupled_step(state: CoupledState, config: SystemConfig, rng: np.random.Generator):
    """Apply one event of the coupled chain; returns ``(new_state, event)``."""
    eng = _Engine(config.n, config.d, config.lam, state.lower, state.upper, _service_rate(config))
    ev = eng.step(rng)
    return eng.states(), ev


@dataclass
class WTrace:
    """``W`` just after each event (and at time 0); a right-continuous step path."""

    times: np.ndarray
    w_values: np.ndarray
    events: int = 0
    arrivals: int = 0
    increases: int = 0
    decreases: int = 0
    final: CoupledState | None = field(default=None, repr=False)

    def window_means(self, edges) -> np.ndarray:
        """Time average of ``W`` over each window ``[edges[i], edges[i+1])``."""
        edges = np.asarray(edges, dtype=float)
        t = np.append(self.times, max(edges[-1], self.times[-1]))
        # integral of the step path up to each breakpoint
        area = np.concatenate([[0.0], np.cumsum(self.w_values * np.diff(t))])

        def integral(x):
            i = np.searchsorted(t, x, side="right") - 1
            i = np.clip(i, 0, len(self.w_values) - 1)
            return area[i] + self.w_values[i] * (x - t[i])

        return np.diff(integral(edges)) / np.diff(edges)

    def value_at(self, times) -> np.ndarray:
        i = np.searchsorted(self.times, np.asarray(times, dtype=float), side="right") - 1
        return self.w_values[np.clip(i, 0, None)]


def run_coupled(config: SystemConfig, horizon: float, lower_init: SystemState,
                upper_init: SystemState, rng: np.random.Generator | None = None,
                max_events: int | None = None) -> WTrace:
    """Run the coupled chain up to ``horizon`` (or ``max_events``), recording ``W``.

    Dominance is checked after every event; a failure raises
    :class:`DominanceViolation`.
    """
    state = CoupledState(lower_init, upper_init)
    rng = config.rng() if rng is None else rng
    eng = _Engine(config.n, config.d, config.lam, state.lower, state.upper, _service_rate(config))
    eng.check()
    t = 0.0
    times, ws = [0.0], [eng.w]
    inc = dec = 0
    while True:
        if max_events is not None and eng.events >= max_events:
            break
        ev = eng.step(rng)
        if t + ev.dt > horizon:
            break
        t += ev.dt
        times.append(t)
        ws.append(eng.w)
        inc += ev.kind == "lower"
        dec += ev.kind == "upper"
    return WTrace(np.array(times), np.array(ws), eng.events, eng.arrivals, inc, dec, eng.states())


# --------------------------------------------------------------------------
# marginal-law diagnostics from independent replicas
# --------------------------------------------------------------------------

@dataclass
class MonotoneReport:
    times: np.ndarray
    cdf: np.ndarray          # (T, levels) mean over replicas of P(q <= k)
    stderr: np.ndarray       # (T, levels)
    worst_z: float
    worst_excess: float
    worst_pair: tuple | None
    sigma: float

    @property
    def ok(self) -> bool:
        return self.worst_z <= self.sigma


def monotone_start_check(config: SystemConfig, times, replicas: int, levels: int | None = None,
                         sigma: float = 3.0, threads: int = 1) -> MonotoneReport:
    """From an empty start, check ``cdf_s >= cdf_t`` for every ``s < t`` in the grid.

    Each replica gives one cdf (fraction of servers with at most ``k``
    jobs); a pair violates the order at level ``k`` when
    ``cdf_t - cdf_s`` exceeds ``sigma`` combined standard errors.
    """
    times = np.asarray(sorted(times), dtype=float)
    q = replica_queue_lengths(config, times, replicas, threads=threads)
    if levels is None:
        levels = int(q.max()) + 2
    cdf_r = 1.0 - ccdf_from_queue_lengths(q, levels + 1)[..., 1:]   # (R, T, levels)
    mean = cdf_r.mean(axis=0)
    se = cdf_r.std(axis=0, ddof=1) / math.sqrt(replicas) if replicas > 1 else np.zeros_like(mean)
    worst_z, worst_excess, pair = 0.0, -math.inf, None
    for a in range(len(times)):
        for b in range(a + 1, len(times)):
            diff = mean[b] - mean[a]
            s = np.sqrt(se[a] ** 2 + se[b] ** 2)
            with np.errstate(divide="ignore", invalid="ignore"):
                z = np.where(s > 0, diff / s, np.where(diff > 1e-12, math.inf, 0.0))
            excess = diff - sigma * s
            if z.max() > worst_z:
                worst_z, pair = float(z.max()), (float(times[a]), float(times[b]))
            worst_excess = max(worst_excess, float(excess.max()))
    return MonotoneReport(times, mean, se, worst_z, worst_excess, pair, sigma)


def total_variation(a: np.ndarray, b: np.ndarray) -> float:
    """Plug-in TV distance between two integer samples (histograms on the support union)."""
    a, b = np.asarray(a, dtype=np.int64).ravel(), np.asarray(b, dtype=np.int64).ravel()
    m = int(max(a.max(initial=0), b.max(initial=0))) + 1
    pa = np.bincount(a, minlength=m) / a.size
    pb = np.bincount(b, minlength=m) / b.size
    return 0.5 * float(np.abs(pa - pb).sum())


def stationary_sample(config: SystemConfig, rng: np.random.Generator, snapshots: int = 400,
                      warm_factor: float = 50.0) -> np.ndarray:
    """Queue lengths from one run warmed for ``warm_factor/(1-lam)``, then sampled
    every ``1/(1-lam)``; shape ``(snapshots, n)``."""
    scale = 1.0 / (1.0 - config.lam)
    times = warm_factor * scale + scale * np.arange(snapshots)
    rate = _service_rate(config)
    init = np.zeros((0, config.d), dtype=np.int64)
    return kernels.get().ctmc(config.n, config.d, config.lam / rate, times * rate, 0.0, init, rng)[0]


def tv_convergence_curve(config: SystemConfig, times, replicas: int, reference_snapshots: int = 400,
                         threads: int = 1) -> list[tuple[float, float]]:
    """Estimated TV distance between the empty-start marginal at each time and
    the stationary marginal; both pooled over servers (and replicas or
    snapshots)."""
    times = np.asarray(times, dtype=float)
    gens = replica_generators(config.seed, replicas + 1)
    ref = stationary_sample(config, gens[-1], reference_snapshots)
    rate = _service_rate(config)
    init = np.zeros((0, config.d), dtype=np.int64)
    kern = kernels.get()

    def one(g):
        return kern.ctmc(config.n, config.d, config.lam / rate, times * rate, 0.0, init, g)[0]

    q = np.stack(run_replicas(one, gens[:-1], threads))   # (R, T, n)
    return [(float(t), total_variation(q[:, i, :], ref)) for i, t in enumerate(times)]


def time_to_tv(curve, threshold: float = 0.1) -> float:
    """First grid time whose TV estimate is at most ``threshold`` (inf if none)."""
    for t, tv in curve:
        if tv <= threshold:
            return t
    return math.inf
