"""Domain types and exact rate computations for the finite-n replicated PS system.

A job is served simultaneously by ``d`` processor-sharing servers.  Jobs that
share the same set of servers form a *class*; the system state is the sparse
map from classes to job counts.  The ``C(n, d)`` possible classes are never
enumerated.
"""
from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np


class InvariantViolation(RuntimeError):
    """Raised when a state's cached queue lengths disagree with its classes."""


# --------------------------------------------------------------------------
# service-time laws
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Exponential:
    mean: float = 1.0

    def __post_init__(self):
        if not self.mean > 0:
            raise ValueError("exponential mean must be positive")


@dataclass(frozen=True)
class Erlang:
    phases: int
    mean: float = 1.0

    def __post_init__(self):
        if int(self.phases) != self.phases or self.phases < 1:
            raise ValueError("Erlang phases must be a positive integer")
        if not self.mean > 0:
            raise ValueError("Erlang mean must be positive")


@dataclass(frozen=True)
class HyperExponential:
    rates: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.rates) != len(self.weights) or not self.rates:
            raise ValueError("rates and weights must be non-empty and of equal length")
        if any(r <= 0 for r in self.rates):
            raise ValueError("hyperexponential rates must be positive")
        if any(w < 0 for w in self.weights):
            raise ValueError("hyperexponential weights must be nonnegative")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError("hyperexponential weights must sum to 1")

    @property
    def mean(self) -> float:
        return sum(w / r for w, r in zip(self.weights, self.rates))

    @classmethod
    def unit_mean(cls, r1: float, r2: float) -> "HyperExponential":
        """Two-phase law with rates ``(r1, r2)`` weighted to have mean 1.

        The weight ``p`` on ``r1`` solves ``p/r1 + (1-p)/r2 = 1``.
        """
        a, b = 1.0 / r1, 1.0 / r2
        if a == b:
            raise ValueError("rates must differ")
        p = (1.0 - b) / (a - b)
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"no unit-mean mixture exists for rates ({r1}, {r2})")
        return cls((r1, r2), (p, 1.0 - p))


ServiceLaw = Exponential | Erlang | HyperExponential


def law_mean(law: ServiceLaw) -> float:
    return float(law.mean)


def encode_law(law: ServiceLaw) -> tuple[int, np.ndarray]:
    """Flatten a law into ``(kind, params)`` as understood by the kernels.

    kind 0: params = [mean]
    kind 1: params = [phases, mean]
    kind 2: params = [r_1 .. r_m, w_1 .. w_m]
    """
    if isinstance(law, Exponential):
        return 0, np.array([law.mean], dtype=np.float64)
    if isinstance(law, Erlang):
        return 1, np.array([law.phases, law.mean], dtype=np.float64)
    if isinstance(law, HyperExponential):
        return 2, np.array(law.rates + law.weights, dtype=np.float64)
    raise TypeError(f"unknown service law {law!r}")


def draw_work(law: ServiceLaw, rng: np.random.Generator, size: int) -> np.ndarray:
    """Independent job sizes from ``law``."""
    if isinstance(law, Exponential):
        return rng.exponential(law.mean, size)
    if isinstance(law, Erlang):
        return rng.gamma(law.phases, law.mean / law.phases, size)
    comp = rng.choice(len(law.rates), size=size, p=law.weights)
    return rng.exponential(1.0, size) / np.asarray(law.rates)[comp]


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SystemConfig:
    """Parameters of one simulated system.

    ``lam`` is the normalised arrival rate; the total arrival rate is
    ``n * lam``.  ``lam = 0`` is accepted (an idle system).  Values at or
    above 1 are unstable and rejected unless ``allow_unstable`` is set.
    """

    n: int
    d: int
    lam: float
    service_law: ServiceLaw = field(default_factory=Exponential)
    seed: int = 0
    allow_unstable: bool = False

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        if int(self.d) != self.d or not 1 <= self.d <= self.n:
            raise ValueError(f"d must satisfy 1 <= d <= n, got d={self.d}, n={self.n}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.lam >= 1 and not self.allow_unstable:
            raise ValueError(f"lambda={self.lam} violates the stability condition lambda < 1")

    def rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed))


# --------------------------------------------------------------------------
# classes and states
# --------------------------------------------------------------------------

def class_index(servers: Iterable[int]) -> tuple[int, ...]:
    """Canonical form of a class: the sorted tuple of its distinct servers."""
    out = tuple(sorted(int(s) for s in servers))
    if len(set(out)) != len(out):
        raise ValueError(f"class servers must be distinct: {out}")
    return out


def sample_class(rng: np.random.Generator, n: int, d: int) -> tuple[int, ...]:
    """Uniformly random d-subset of ``range(n)`` as a sorted tuple."""
    if not 1 <= d <= n:
        raise ValueError(f"need 1 <= d <= n, got d={d}, n={n}")
    return tuple(sorted(int(s) for s in rng.choice(n, size=d, replace=False)))


class SystemState:
    """Sparse class counts with incrementally maintained queue lengths."""

    def __init__(self, n: int, counts: Mapping[Sequence[int], int] | None = None):
        self.n = int(n)
        self.class_counts: dict[tuple[int, ...], int] = {}
        self.queue_lengths = np.zeros(self.n, dtype=np.int64)
        for cls, x in (counts or {}).items():
            self.add(cls, x)

    @classmethod
    def from_jobs(cls, n: int, jobs: Iterable[Sequence[int]]) -> "SystemState":
        st = cls(n)
        for servers in jobs:
            st.add(servers)
        return st

    def copy(self) -> "SystemState":
        st = SystemState(self.n)
        st.class_counts = dict(self.class_counts)
        st.queue_lengths = self.queue_lengths.copy()
        return st

    def add(self, servers: Sequence[int], count: int = 1) -> None:
        if count < 0:
            raise ValueError("count must be nonnegative")
        if count == 0:
            return
        cls = class_index(servers)
        if cls[0] < 0 or cls[-1] >= self.n:
            raise ValueError(f"class {cls} out of range for n={self.n}")
        self.class_counts[cls] = self.class_counts.get(cls, 0) + count
        for j in cls:
            self.queue_lengths[j] += count

    def remove(self, servers: Sequence[int], count: int = 1) -> None:
        cls = class_index(servers)
        x = self.class_counts.get(cls, 0)
        if count > x:
            raise ValueError(f"cannot remove {count} jobs of class {cls}; only {x} present")
        if x == count:
            del self.class_counts[cls]
        else:
            self.class_counts[cls] = x - count
        for j in cls:
            self.queue_lengths[j] -= count

    def count(self, servers: Sequence[int]) -> int:
        return self.class_counts.get(class_index(servers), 0)

    @property
    def total_jobs(self) -> int:
        return sum(self.class_counts.values())

    def jobs(self) -> list[tuple[int, ...]]:
        """One entry per job (classes repeated by multiplicity), sorted."""
        out = []
        for cls in sorted(self.class_counts):
            out.extend([cls] * self.class_counts[cls])
        return out

    def recount(self) -> np.ndarray:
        q = np.zeros(self.n, dtype=np.int64)
        for cls, x in self.class_counts.items():
            for j in cls:
                q[j] += x
        return q

    def check(self) -> None:
        if any(x <= 0 for x in self.class_counts.values()):
            raise InvariantViolation("non-positive class count stored")
        if not np.array_equal(self.recount(), self.queue_lengths):
            raise InvariantViolation("cached queue lengths disagree with class counts")

    def dominated_by(self, other: "SystemState") -> bool:
        """Componentwise ``self <= other`` on class counts."""
        return all(other.class_counts.get(c, 0) >= x for c, x in self.class_counts.items())

    def empirical_measure(self, time: float = 0.0) -> "EmpiricalMeasure":
        return EmpiricalMeasure.from_queue_lengths(self.queue_lengths, time)

    def __eq__(self, other):
        return (isinstance(other, SystemState) and self.n == other.n
                and self.class_counts == other.class_counts)

    def __repr__(self):
        return f"SystemState(n={self.n}, jobs={self.total_jobs}, classes={len(self.class_counts)})"


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Fraction of servers at each queue length, at a given time."""

    counts: np.ndarray
    time: float = 0.0

    @classmethod
    def from_queue_lengths(cls, q, time: float = 0.0) -> "EmpiricalMeasure":
        q = np.asarray(q)
        frac = np.bincount(q, minlength=1) / q.size
        return cls(frac, float(time))

    def ccdf(self, levels: int | None = None) -> np.ndarray:
        """``ybar[k] = fraction of servers with at least k jobs``."""
        tail = np.cumsum(self.counts[::-1])[::-1]
        tail[0] = 1.0
        if levels is None:
            return tail
        out = np.zeros(levels)
        m = min(levels, tail.size)
        out[:m] = tail[:m]
        return out

    def mean(self) -> float:
        return float(np.dot(np.arange(self.counts.size), self.counts))


# --------------------------------------------------------------------------
# rates and drift
# --------------------------------------------------------------------------

def _inverse_load(state: SystemState, cls: tuple[int, ...], x: int) -> float:
    s = 0.0
    for j in cls:
        q = state.queue_lengths[j]
        if q < x or q == 0:
            raise InvariantViolation(
                f"server {j} has queue length {q} but class {cls} holds {x} jobs")
        s += 1.0 / q
    return s


def departure_rate(state: SystemState, servers: Sequence[int]) -> float:
    """Rate ``x_i * sum_{j in class} 1/q_j`` at which a class-i job leaves."""
    cls = class_index(servers)
    x = state.class_counts.get(cls, 0)
    if x == 0:
        return 0.0
    return x * _inverse_load(state, cls, x)


def total_departure_rate(state: SystemState) -> float:
    """Number of busy servers; equals the sum of class departure rates."""
    return float(np.count_nonzero(state.queue_lengths))


def lyapunov_drift(state: SystemState, config: SystemConfig) -> float:
    """Generator applied to ``Psi(x) = sum_j q_j**2`` at the current state.

    The arrival part over all ``C(n, d)`` classes collapses to
    ``2 lam d sum_j q_j + n lam d`` since each class has arrival rate
    ``n lam / C(n, d)`` and each server lies in ``C(n-1, d-1)`` classes.
    Departures only involve classes that are present.
    """
    lam, d, n = config.lam, config.d, config.n
    q = state.queue_lengths
    drift = 2.0 * lam * d * float(q.sum()) + n * lam * d
    for cls, x in state.class_counts.items():
        r = x * _inverse_load(state, cls, x)
        drift += r * (d - 2.0 * float(sum(q[j] for j in cls)))
    return drift


def drift_upper_bound(state: SystemState, config: SystemConfig) -> float:
    """Cauchy-Schwarz bound ``2d(lam-1) sum_j q_j + d(n lam + B(x))``."""
    d = config.d
    return (2.0 * d * (config.lam - 1.0) * float(state.queue_lengths.sum())
            + d * (config.n * config.lam + total_departure_rate(state)))


def negative_drift_threshold(n: int, lam: float) -> float:
    """Total queue mass above which the drift is guaranteed negative."""
    return n * (1.0 + lam) / (2.0 * (1.0 - lam))


def n_classes(n: int, d: int) -> int:
    return math.comb(n, d)
