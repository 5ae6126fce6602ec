"""Static allocation: jobs as hyperedges over servers.

``floor(lam*n)`` unit jobs each sit on ``d`` uniformly chosen servers.  The
optimal makespan lies between ``k*/d`` and ``k*``, where ``k*`` is the
largest ``k`` with a nonempty k-core.  Random hypergraphs get a nonempty
k-core roughly when ``lam * d!`` exceeds ``gamma_k(d)``.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx
import numpy as np


@dataclass
class Hypergraph:
    n: int
    edges: np.ndarray  # (m, d), each row sorted, duplicates allowed

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64)
        if e.ndim != 2:
            e = e.reshape(len(e), -1) if e.size else np.zeros((0, 0), dtype=np.int64)
        e = np.sort(e, axis=1)
        if e.size and (e.min() < 0 or e.max() >= self.n):
            raise ValueError("edge vertex out of range")
        if e.shape[1] > 1 and np.any(e[:, 1:] == e[:, :-1]):
            raise ValueError("every edge must have d distinct vertices")
        self.edges = e

    @property
    def m(self) -> int:
        return self.edges.shape[0]

    @property
    def d(self) -> int:
        return self.edges.shape[1]

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)

    def incidence(self) -> list[list[int]]:
        inc: list[list[int]] = [[] for _ in range(self.n)]
        for i, e in enumerate(self.edges.tolist()):
            for v in e:
                inc[v].append(i)
        return inc

    def to_text(self) -> str:
        lines = [f"{self.n} {self.m} {self.d}"]
        lines += [" ".join(map(str, e)) for e in self.edges.tolist()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Hypergraph":
        rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        if not rows or len(rows[0]) != 3:
            raise ValueError("header must read 'n m d'")
        n, m, d = map(int, rows[0])
        body = rows[1:]
        if len(body) != m:
            raise ValueError(f"expected {m} edges, found {len(body)}")
        for i, r in enumerate(body):
            if len(r) != d:
                raise ValueError(f"edge {i} has {len(r)} vertices, expected {d}")
        return cls(n, np.array(body, dtype=np.int64).reshape(m, d))

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "Hypergraph":
        return cls.from_text(Path(path).read_text())


def gen_hypergraph(n: int, lam: float, d: int, seed=None) -> Hypergraph:
    """``floor(lam*n)`` independent uniform d-subsets of ``range(n)``."""
    if not 1 <= d <= n:
        raise ValueError(f"need 1 <= d <= n, got d={d}, n={n}")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    m = int(math.floor(lam * n))
    if 2 * d > n:
        edges = np.argsort(rng.random((m, n)), axis=1)[:, :d]
        return Hypergraph(n, edges)
    edges = rng.integers(0, n, size=(m, d))
    while True:
        s = np.sort(edges, axis=1)
        bad = np.any(s[:, 1:] == s[:, :-1], axis=1) if d > 1 else np.zeros(m, bool)
        if not bad.any():
            return Hypergraph(n, edges)
        edges[bad] = rng.integers(0, n, size=(int(bad.sum()), d))


@dataclass(frozen=True)
class CoreResult:
    k: int
    vertices: frozenset
    edges: tuple
    empty: bool


def k_core(h: Hypergraph, k: int) -> CoreResult:
    """Repeatedly delete vertices of degree below ``k`` with their edges."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    deg = h.degrees().tolist()
    inc = h.incidence()
    edges = h.edges.tolist()
    v_alive = [True] * h.n
    e_alive = [True] * h.m
    stack = [v for v in range(h.n) if deg[v] < k]
    while stack:
        v = stack.pop()
        if not v_alive[v]:
            continue
        v_alive[v] = False
        for ei in inc[v]:
            if not e_alive[ei]:
                continue
            e_alive[ei] = False
            for u in edges[ei]:
                if u != v and v_alive[u]:
                    deg[u] -= 1
                    if deg[u] == k - 1:
                        stack.append(u)
    verts = frozenset(v for v in range(h.n) if v_alive[v])
    kept = tuple(i for i in range(h.m) if e_alive[i])
    return CoreResult(k, verts, kept, not verts)


def _peel(h: Hypergraph):
    """Min-degree peeling.

    Returns ``(order, removed_edges, k_star)``; ``removed_edges[i]`` lists the
    edges still alive when ``order[i]`` was removed.
    """
    deg = h.degrees().tolist()
    inc = h.incidence()
    edges = h.edges.tolist()
    v_alive = [True] * h.n
    e_alive = [True] * h.m
    heap = [(deg[v], v) for v in range(h.n)]
    heapq.heapify(heap)
    order, removed, k_star = [], [], 0
    while heap:
        dv, v = heapq.heappop(heap)
        if not v_alive[v] or dv != deg[v]:
            continue
        k_star = max(k_star, dv)
        v_alive[v] = False
        mine = []
        for ei in inc[v]:
            if not e_alive[ei]:
                continue
            e_alive[ei] = False
            mine.append(ei)
            for u in edges[ei]:
                if u != v and v_alive[u]:
                    deg[u] -= 1
                    heapq.heappush(heap, (deg[u], u))
        order.append(v)
        removed.append(mine)
    return order, removed, k_star


def max_core_number(h: Hypergraph) -> int:
    """Largest ``k`` whose k-core is nonempty (0 without edges)."""
    if h.m == 0:
        return 0
    return _peel(h)[2]


@dataclass
class MakespanResult:
    lower: float
    upper: float
    k_star: int
    exact: float | None = None
    assignment: dict = field(default_factory=dict, repr=False)
    feasible: bool = True
    min_job_rate: float = math.inf

    @property
    def makespan_of_assignment(self) -> float:
        return 1.0 / self.min_job_rate if self.min_job_rate > 0 else math.inf


def audit_assignment(h: Hypergraph, x: dict, tol: float = 1e-9) -> tuple[bool, float]:
    """Check server capacities; returns ``(feasible, min job rate)``."""
    load = np.zeros(h.n)
    rate = np.zeros(h.m)
    for (v, e), val in x.items():
        if val < -tol or v not in h.edges[e]:
            return False, 0.0
        load[v] += val
        rate[e] += val
    ok = bool(np.all(load <= 1.0 + tol))
    return ok, float(rate.min()) if h.m else math.inf


def makespan_bounds(h: Hypergraph) -> MakespanResult:
    """``[k*/d, k*]`` with the peeling assignment that achieves ``k*``.

    Each server gives ``1/k*`` of its capacity to every edge still incident
    to it when it is peeled.  The peeled degree is at most ``k*``, so the
    assignment is feasible.
    """
    if h.m == 0:
        return MakespanResult(0.0, 0.0, 0, min_job_rate=math.inf)
    order, removed, k = _peel(h)
    x = {(v, e): 1.0 / k for v, es in zip(order, removed) for e in es}
    ok, rmin = audit_assignment(h, x)
    return MakespanResult(k / h.d, float(k), k, assignment=x, feasible=ok, min_job_rate=rmin)


def _flow_network(h: Hypergraph, T: float) -> nx.DiGraph:
    g = nx.DiGraph()
    for e, verts in enumerate(h.edges.tolist()):
        g.add_edge("s", ("e", e), capacity=1.0 / T)
        for v in verts:
            g.add_edge(("e", e), ("v", v))  # no capacity attribute: unbounded
    for v in np.unique(h.edges).tolist():
        g.add_edge(("v", v), "t", capacity=1.0)
    return g


def flow_feasible(h: Hypergraph, T: float, rel_tol: float = 1e-9):
    """Can every job get rate ``1/T``?  Returns ``(feasible, flow_dict)``."""
    value, flow = nx.maximum_flow(_flow_network(h, T), "s", "t")
    return value >= (h.m / T) * (1.0 - rel_tol), flow


def makespan_exact(h: Hypergraph, eps: float = 1e-9) -> MakespanResult:
    """Optimal makespan to within ``eps``, by bisection over ``[k*/d, k*]``.

    The returned assignment comes from the flow at the feasible end of the
    final bracket.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    res = makespan_bounds(h)
    if h.m == 0:
        res.exact = 0.0
        return res
    lo, hi = res.lower, res.upper
    ok, flow = flow_feasible(h, lo)
    if ok:
        hi = lo
    else:
        ok, flow = flow_feasible(h, hi)
        if not ok:
            raise RuntimeError("upper bound k* is not flow-feasible")
        while hi - lo > eps:
            mid = 0.5 * (lo + hi)
            ok, f = flow_feasible(h, mid)
            if ok:
                hi, flow = mid, f
            else:
                lo = mid
    x = {}
    for e in range(h.m):
        for node, val in flow[("e", e)].items():
            if val > 0:
                x[(node[1], e)] = val
    feasible, rmin = audit_assignment(h, x)
    return MakespanResult(res.lower, res.upper, res.k_star, exact=hi, assignment=x,
                          feasible=feasible, min_job_rate=rmin)


# --------------------------------------------------------------------------
# k-core threshold for random hypergraphs
# --------------------------------------------------------------------------

def poisson_tail(j: int, mu: float) -> float:
    """``P(Z_mu >= j)`` summed upward from ``j`` (no cancellation for small mu)."""
    if j <= 0:
        return 1.0
    if mu <= 0:
        return 0.0
    log_t = -mu + j * math.log(mu) - math.lgamma(j + 1)
    t = math.exp(log_t)
    total = t
    i = j
    while True:
        i += 1
        t *= mu / i
        total += t
        if i > mu and t <= 1e-17 * total:
            return min(total, 1.0)


def gamma_objective(mu: float, k: int, d: int) -> float:
    """``mu (d-1)! / P(Z_mu >= k-1)^(d-1)``."""
    p = poisson_tail(k - 1, mu)
    if p <= 0:
        return math.inf
    return mu * math.factorial(d - 1) / p ** (d - 1)


def gamma_limit_at_zero(k: int, d: int) -> float:
    """``lim_{mu->0}`` of the objective: ``(d-1)! ((k-1)!)^(d-1)`` when
    ``(k-1)(d-1) = 1``, else infinite."""
    if (k - 1) * (d - 1) == 1:
        return float(math.factorial(d - 1) * math.factorial(k - 1) ** (d - 1))
    return math.inf


def _golden(f, a: float, b: float, tol: float) -> float:
    invphi = (math.sqrt(5) - 1) / 2
    c, d_ = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d_)
    while b - a > tol:
        if fc < fd:
            b, d_, fd = d_, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d_, fd
            d_ = a + invphi * (b - a)
            fd = f(d_)
    return 0.5 * (a + b)


def gamma_minimiser(k: int, d: int, lo: float = 1e-3, hi: float = 100.0) -> tuple[float, float]:
    """``(mu*, gamma_k(d))``; ``mu* = 0`` when the infimum is the small-mu limit.

    A log-spaced scan locates the basin, then golden-section search on
    ``log mu`` refines it to 1e-9.
    """
    if k < 2 or d < 2:
        raise ValueError("k and d must be at least 2")
    f = lambda s: gamma_objective(math.exp(s), k, d)
    grid = np.linspace(math.log(lo), math.log(hi), 401)
    vals = [f(s) for s in grid]
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    s = _golden(f, a, b, 1e-9)
    best_mu, best = math.exp(s), f(s)
    limit = gamma_limit_at_zero(k, d)
    if limit <= best:
        return 0.0, limit
    return best_mu, best


def gamma_threshold(k: int, d: int) -> float:
    return gamma_minimiser(k, d)[1]


def lambda_threshold(k: int, d: int) -> float:
    """Edge density ``lam`` at which the k-core appears: ``gamma_k(d) / d!``."""
    return gamma_threshold(k, d) / math.factorial(d)


def core_phase_diagram(n: int, d: int, lams, trials: int, k: int, seed: int = 0) -> list[tuple[float, float]]:
    """Fraction of ``trials`` random hypergraphs with a nonempty k-core, per ``lam``."""
    out = []
    seqs = np.random.SeedSequence(seed).spawn(len(lams))
    for lam, ss in zip(lams, seqs):
        hits = 0
        for child in ss.spawn(trials):
            h = gen_hypergraph(n, lam, d, np.random.default_rng(child))
            hits += not k_core(h, k).empty
        out.append((float(lam), hits / trials))
    return out
