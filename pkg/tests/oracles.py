"""Independent reference computations used to check the package.

Each oracle takes a different route from the code under test.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction

import mpmath
import numpy as np
from scipy import optimize, stats
from scipy.optimize import linprog


def mf_mean_by_consistency(lam: float, d: int, dps: int = 30) -> float:
    """Mean-field mean queue length from the normalised reneging chain.

    For a trial reneging rate ``mu``, normalise ``prod dlam/(1+v mu)`` into a
    distribution and compare its mean with ``(d-1) lam / mu``.  The root in
    ``mu`` is the fixed point.  This avoids ``phi`` and the ``pi_0 = 1-lam``
    shortcut altogether.
    """
    mpmath.mp.dps = dps
    lam_, d_ = mpmath.mpf(lam), mpmath.mpf(d)

    def moments(mu):
        s0, s1, term, u = mpmath.mpf(1), mpmath.mpf(0), mpmath.mpf(1), 0
        while True:
            u += 1
            term *= d_ * lam_ / (1 + u * mu)
            s0 += term
            s1 += u * term
            if term < mpmath.mpf(10) ** (-dps) and d_ * lam_ / (1 + (u + 1) * mu) < 0.5:
                return s0, s1

    def g(logmu):
        mu = mpmath.e ** logmu
        s0, s1 = moments(mu)
        return mpmath.log(s1 / s0) - mpmath.log((d_ - 1) * lam_ / mu)

    lo, hi = mpmath.mpf(-7), mpmath.mpf(5)   # log mu bracket; g increases in log mu
    assert g(lo) < 0 < g(hi)
    for _ in range(80):
        mid = (lo + hi) / 2
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    mu = mpmath.e ** ((lo + hi) / 2)
    return float((d_ - 1) * lam_ / mu)


def drift_by_enumeration(counts: dict, n: int, d: int, lam: float) -> float:
    """Generator of ``sum_j q_j^2`` by listing every transition (small n only)."""
    q = np.zeros(n, dtype=np.int64)
    for cls, x in counts.items():
        q[list(cls)] += x
    psi = float(np.sum(q.astype(float) ** 2))
    classes = list(itertools.combinations(range(n), d))
    rate_each = n * lam / len(classes)
    total = 0.0
    for cls in classes:
        q2 = q.copy()
        q2[list(cls)] += 1
        total += rate_each * (float(np.sum(q2.astype(float) ** 2)) - psi)
    for cls, x in counts.items():
        if x == 0:
            continue
        r = x * sum(1.0 / q[j] for j in cls)
        q2 = q.copy()
        q2[list(cls)] -= 1
        total += r * (float(np.sum(q2.astype(float) ** 2)) - psi)
    return total


def k_core_fixpoint(n: int, edges, k: int):
    """Recompute all degrees over surviving edges until nothing changes."""
    alive = set(range(n))
    while True:
        live_edges = [i for i, e in enumerate(edges) if all(v in alive for v in e)]
        deg = dict.fromkeys(alive, 0)
        for i in live_edges:
            for v in edges[i]:
                deg[v] += 1
        drop = {v for v in alive if deg[v] < k}
        if not drop:
            return frozenset(alive), tuple(live_edges)
        alive -= drop


def makespan_lp(n: int, edges) -> float:
    """Optimal makespan via scipy's LP solver.

    Maximise the minimum job rate ``t`` subject to server capacity 1; the
    makespan is ``1/t``.
    """
    m = len(edges)
    pairs = [(v, e) for e in range(m) for v in edges[e]]
    nv = len(pairs) + 1                 # x(v, e) ... , t
    c = np.zeros(nv)
    c[-1] = -1.0
    a_ub, b_ub = [], []
    for e in range(m):                  # t - sum_v x(v,e) <= 0
        row = np.zeros(nv)
        row[-1] = 1.0
        for i, (v, ee) in enumerate(pairs):
            if ee == e:
                row[i] = -1.0
        a_ub.append(row)
        b_ub.append(0.0)
    for v in range(n):                  # sum_e x(v,e) <= 1
        row = np.zeros(nv)
        for i, (vv, _) in enumerate(pairs):
            if vv == v:
                row[i] = 1.0
        if row.any():
            a_ub.append(row)
            b_ub.append(1.0)
    res = linprog(c, A_ub=np.array(a_ub), b_ub=np.array(b_ub), bounds=[(0, None)] * nv,
                  method="highs")
    assert res.status == 0, res.message
    return 1.0 / res.x[-1]


def makespan_densest(edges) -> Fraction:
    """``max_S |S| / |N(S)|`` over job subsets ``S`` (Hall-type duality; tiny inputs)."""
    best = Fraction(0)
    m = len(edges)
    for r in range(1, m + 1):
        for S in itertools.combinations(range(m), r):
            nb = set().union(*(set(edges[i]) for i in S))
            best = max(best, Fraction(r, len(nb)))
    return best


def gamma_scipy(k: int, d: int) -> float:
    """Minimise with scipy's Poisson survival function on a bounded interval."""
    if (k - 1) * (d - 1) == 1:
        return float(math.factorial(d - 1))  # infimum approached as mu -> 0
    f = lambda mu: mu * math.factorial(d - 1) / stats.poisson.sf(k - 2, mu) ** (d - 1)
    res = optimize.minimize_scalar(f, bounds=(1e-2, 60.0), method="bounded",
                                   options={"xatol": 1e-10})
    return float(res.fun)


def multigraph_cycle_probability(lam: float) -> float:
    """Limit probability that ``lam*n`` uniform random pairs contain a cycle.

    Cycle counts of length ``k >= 2`` are asymptotically independent Poisson
    with means ``c^k / (2k)``, ``c = 2 lam`` (length 2 means a repeated pair).
    """
    c = 2.0 * lam
    return 1.0 - math.sqrt(1.0 - c) * math.exp(c / 2.0)


def mm1_mean(lam: float) -> float:
    return lam / (1.0 - lam)
