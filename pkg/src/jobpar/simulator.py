"""Snapshot-based simulation of the finite-n system.

Three engines share one contract and return :class:`QueueStats`:

* :func:`run_ctmc` samples the Markov chain directly, each job leaving at
  rate ``sum_{j in class} 1/q_j``;
* :func:`run_uniformized` uses a constant event clock of rate ``n(1+lam)``
  where non-arrival events are virtual services at a uniform server;
* :func:`run_workload` follows every job's remaining work and so accepts
  any :data:`~jobpar.model.ServiceLaw`.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from . import kernels
from .model import (EmpiricalMeasure, Exponential, SystemConfig, SystemState, draw_work,
                    encode_law)


class UnsupportedLawError(ValueError):
    pass


@dataclass(frozen=True)
class SnapshotPlan:
    warmup: float
    count: int
    spacing: float

    def __post_init__(self):
        if self.warmup < 0:
            raise ValueError("warmup must be nonnegative")
        if int(self.count) != self.count or self.count < 1:
            raise ValueError("count must be a positive integer")
        if self.spacing < 0 or (self.count > 1 and self.spacing == 0):
            raise ValueError("spacing must be positive when more than one snapshot is taken")

    @classmethod
    def default(cls, lam: float, count: int = 100) -> "SnapshotPlan":
        """Warm up for ``10/(1-lam)``, then ``count`` snapshots ``5/(1-lam)`` apart."""
        scale = 1.0 / (1.0 - lam)
        return cls(10.0 * scale, count, 5.0 * scale)

    def times(self) -> np.ndarray:
        return self.warmup + self.spacing * np.arange(self.count, dtype=np.float64)


@dataclass
class QueueStats:
    """Queue lengths at every snapshot plus time-averaged run statistics.

    ``queue_lengths`` has one row per snapshot.  ``busy_fraction`` and
    ``mean_jobs`` are time averages over ``[warmup, last snapshot]``;
    ``mean_sojourn`` averages over jobs that left in that window.
    """

    queue_lengths: np.ndarray
    times: np.ndarray
    mean: float
    mean_ci_halfwidth: float
    empirical_cdf: np.ndarray
    busy_fraction: float = math.nan
    mean_jobs: float = math.nan
    mean_sojourn: float = math.nan
    arrival_rate: float = math.nan
    events: int = 0
    final_jobs: np.ndarray = field(default=None, repr=False)

    @property
    def snapshots(self) -> list[EmpiricalMeasure]:
        return [EmpiricalMeasure.from_queue_lengths(q, t)
                for q, t in zip(self.queue_lengths, self.times)]

    @property
    def samples(self) -> np.ndarray:
        """All recorded queue lengths, pooled across servers and snapshots."""
        return self.queue_lengths.ravel()

    def cdf(self, levels: int) -> np.ndarray:
        out = np.ones(levels)
        m = min(levels, self.empirical_cdf.size)
        out[:m] = self.empirical_cdf[:m]
        return out

    def final_state(self) -> SystemState:
        return SystemState.from_jobs(self.queue_lengths.shape[1], self.final_jobs)


def batch_means_ci(values, batches: int = 20, level: float = 0.95) -> float:
    """Half-width of a Student-t interval from non-overlapping batch means."""
    values = np.asarray(values, dtype=float)
    b = min(batches, values.size)
    if b < 2:
        return math.nan
    per = values.size // b
    means = values[: per * b].reshape(b, per).mean(axis=1)
    return float(sps.t.ppf(0.5 + level / 2, b - 1) * means.std(ddof=1) / math.sqrt(b))


def _summarise(snaps, times, stats, config: SystemConfig, warmup: float, final) -> QueueStats:
    snaps = np.asarray(snaps)
    pooled = np.bincount(snaps.ravel().astype(np.int64), minlength=1)
    cdf = np.cumsum(pooled) / pooled.sum()
    cdf[-1] = 1.0
    per_snap = snaps.mean(axis=1)
    span = float(times[-1]) - warmup
    n = config.n
    busy_area, jobs_area, soj_sum, departures, events, _ = stats
    return QueueStats(
        queue_lengths=snaps,
        times=np.asarray(times, dtype=float),
        mean=float(snaps.mean()),
        mean_ci_halfwidth=batch_means_ci(per_snap),
        empirical_cdf=cdf,
        busy_fraction=busy_area / (n * span) if span > 0 else math.nan,
        mean_jobs=jobs_area / span if span > 0 else math.nan,
        mean_sojourn=soj_sum / departures if departures > 0 else math.nan,
        arrival_rate=n * config.lam,
        events=int(events),
        final_jobs=final,
    )


def _initial(config: SystemConfig, initial: SystemState | None) -> np.ndarray:
    if initial is None:
        return np.zeros((0, config.d), dtype=np.int64)
    if initial.n != config.n:
        raise ValueError("initial state has the wrong number of servers")
    return np.array(initial.jobs(), dtype=np.int64).reshape(-1, config.d)


def _require_exponential(config: SystemConfig, engine: str) -> float:
    law = config.service_law
    if not isinstance(law, Exponential):
        raise UnsupportedLawError(
            f"{engine} supports exponential service only; use run_workload for {law!r}")
    return law.mean


def run_ctmc(config: SystemConfig, plan: SnapshotPlan, initial: SystemState | None = None,
             rng: np.random.Generator | None = None, backend: str | None = None) -> QueueStats:
    """Simulate the class-count Markov chain with exponential clocks.

    A non-unit exponential mean ``m`` is handled by running the unit-mean
    chain at load ``lam * m`` on a clock slowed by ``m``; the plan stays in
    the caller's time units.
    """
    mean = _require_exponential(config, "run_ctmc")
    rng = config.rng() if rng is None else rng
    times = plan.times()
    snaps, stats, final = kernels.get(backend).ctmc(
        config.n, config.d, config.lam * mean, times / mean, plan.warmup / mean,
        _initial(config, initial), rng)
    stats = _rescale(stats, mean)
    return _summarise(snaps, times, stats, config, plan.warmup, final)


def run_uniformized(config: SystemConfig, plan: SnapshotPlan, initial: SystemState | None = None,
                    rng: np.random.Generator | None = None, backend: str | None = None) -> QueueStats:
    """Constant-rate event clock with virtual services at idle servers."""
    mean = _require_exponential(config, "run_uniformized")
    rng = config.rng() if rng is None else rng
    times = plan.times()
    snaps, stats, final = kernels.get(backend).uniformized(
        config.n, config.d, config.lam * mean, times / mean, plan.warmup / mean,
        _initial(config, initial), rng)
    stats = _rescale(stats, mean)
    return _summarise(snaps, times, stats, config, plan.warmup, final)


def _rescale(stats, mean):
    stats = np.array(stats, dtype=float)
    stats[:3] *= mean
    return stats


def run_workload(config: SystemConfig, plan: SnapshotPlan, initial: SystemState | None = None,
                 initial_work=None, rng: np.random.Generator | None = None,
                 backend: str | None = None) -> QueueStats:
    """Track remaining work of each job; valid for any service law.

    Between events a job receives work at rate ``sum_{j in class} 1/q_j``.
    ``initial_work`` gives the remaining work of the jobs of ``initial`` in
    the order of :meth:`SystemState.jobs`; it defaults to fresh draws.
    """
    rng = config.rng() if rng is None else rng
    kind, params = encode_law(config.service_law)
    init = _initial(config, initial)
    if initial_work is None:
        initial_work = draw_work(config.service_law, rng, len(init))
    initial_work = np.asarray(initial_work, dtype=np.float64)
    if initial_work.shape != (len(init),):
        raise ValueError("initial_work must have one entry per initial job")
    times = plan.times()
    snaps, stats, final = kernels.get(backend).workload(
        config.n, config.d, config.lam, kind, params, times, plan.warmup,
        init, initial_work, rng)
    return _summarise(snaps, times, stats, config, plan.warmup, final)


ENGINES = {"ctmc": run_ctmc, "uniformized": run_uniformized, "workload": run_workload}


# --------------------------------------------------------------------------
# replicas
# --------------------------------------------------------------------------

def replica_generators(seed: int, replicas: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(replicas)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def run_replicas(fn, generators, threads: int = 1) -> list:
    """``[fn(g) for g in generators]``, optionally on a thread pool.

    The compiled kernels release the GIL, so threads give real parallelism
    there.  Results keep the order of ``generators``.
    """
    if threads <= 1 or len(generators) <= 1:
        return [fn(g) for g in generators]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, generators))


def replica_queue_lengths(config: SystemConfig, times, replicas: int, *,
                          initial: SystemState | None = None, engine: str = "ctmc",
                          threads: int = 1) -> np.ndarray:
    """Queue lengths ``(replicas, len(times), n)`` from independent runs.

    Replica seeds are spawned from ``config.seed``.  ``engine`` is ``"ctmc"``
    or ``"uniformized"``.
    """
    if engine not in ("ctmc", "uniformized"):
        raise ValueError(f"unknown replica engine {engine!r}")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be a non-empty, nondecreasing list of nonnegative reals")
    init = _initial(config, initial)
    mean = _require_exponential(config, engine)
    kern = kernels.get()
    fn = kern.ctmc if engine == "ctmc" else kern.uniformized

    def one(g):
        return fn(config.n, config.d, config.lam * mean, times / mean, 0.0, init, g)[0]

    return np.stack(run_replicas(one, replica_generators(config.seed, replicas), threads))


def ccdf_from_queue_lengths(q: np.ndarray, levels: int) -> np.ndarray:
    """Fraction of servers with at least ``k`` jobs, along the last axis."""
    q = np.asarray(q)
    return np.stack([(q >= k).mean(axis=-1) for k in range(levels)], axis=-1)


def transient_ccdf(config: SystemConfig, times, replicas: int, levels: int = 4,
                   threads: int = 1) -> np.ndarray:
    """Empirical ccdf ``ybar^n_k(t)`` from an empty start, averaged over replicas.

    Returns an array ``(len(times), levels)``; column 0 is identically 1.
    """
    q = replica_queue_lengths(config, times, replicas, threads=threads)
    return ccdf_from_queue_lengths(q, levels).mean(axis=0)
