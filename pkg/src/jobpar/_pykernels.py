"""Pure-Python event loops; reference for, and fallback to, ``_ckernels``.

Every routine here consumes uniforms from the generator in exactly the same
order, and performs the same floating-point operations, as its compiled
twin.  Given the same seed both backends therefore produce bit-identical
trajectories, which the test-suite checks.

All three loops share the same signature family::

    kernel(n, d, lam, ..., snap_times, stats_start, init_jobs, gen)
        -> (snaps, stats, final_jobs)

``snaps`` is an ``int32`` array ``(len(snap_times), n)`` of queue lengths,
``stats`` holds ``[busy_area, jobs_area, sojourn_sum, departures, events,
arrivals]`` accumulated over ``[stats_start, snap_times[-1]]`` and
``final_jobs`` lists the servers of every job alive at the end.
"""
from __future__ import annotations

from math import inf, log

import numpy as np

REBUILD_EVERY = 1 << 14
_BLOCK = 4096


class _Uniforms:
    __slots__ = ("gen", "buf", "i")

    def __init__(self, gen: np.random.Generator):
        self.gen = gen
        self.buf: list[float] = []
        self.i = 0

    def __call__(self) -> float:
        if self.i == len(self.buf):
            self.buf = self.gen.random(_BLOCK).tolist()
            self.i = 0
        u = self.buf[self.i]
        self.i += 1
        return u


def _pick(u: float, k: int) -> int:
    r = int(u * k)
    return k - 1 if r >= k else r


class _Pool:
    """Job slots, per-server job lists and a Fenwick tree over job weights."""

    def __init__(self, n: int, d: int, cap: int = 64):
        self.n, self.d = n, d
        self.cap = cap
        self.srv = [0] * (cap * d)
        self.pos = [0] * (cap * d)
        self.alive = [False] * cap
        self.w = [0.0] * cap
        self.rem = [0.0] * cap
        self.arr = [0.0] * cap
        self.tree = [0.0] * (cap + 1)
        self.free = list(range(cap - 1, -1, -1))
        self.slist: list[list[int]] = [[] for _ in range(n)]
        self.busy = 0
        self.njobs = 0
        self.perm = list(range(n))
        self.act: list[int] = []
        self.apos = [0] * cap

    # -- storage ---------------------------------------------------------
    def _grow(self):
        old, d = self.cap, self.d
        cap = old * 2
        self.srv += [0] * (old * d)
        self.pos += [0] * (old * d)
        self.alive += [False] * old
        self.w += [0.0] * old
        self.rem += [0.0] * old
        self.arr += [0.0] * old
        self.apos += [0] * old
        self.free = list(range(cap - 1, old - 1, -1))
        self.cap = cap
        self.build()

    def build(self):
        cap, w = self.cap, self.w
        tree = [0.0] * (cap + 1)
        for i in range(1, cap + 1):
            tree[i] += w[i - 1]
            j = i + (i & -i)
            if j <= cap:
                tree[j] += tree[i]
        self.tree = tree

    def update(self, slot: int, delta: float):
        tree, cap = self.tree, self.cap
        i = slot + 1
        while i <= cap:
            tree[i] += delta
            i += i & -i

    def find(self, target: float) -> int:
        tree, cap = self.tree, self.cap
        p = 0
        step = cap
        while step:
            nxt = p + step
            if nxt <= cap and tree[nxt] <= target:
                p = nxt
                target -= tree[nxt]
            step >>= 1
        return p

    # -- jobs ------------------------------------------------------------
    def sample_servers(self, u) -> None:
        """Partial Fisher-Yates; the chosen servers end up in perm[:d]."""
        perm, n = self.perm, self.n
        for r in range(self.d):
            k = r + _pick(u(), n - r)
            perm[r], perm[k] = perm[k], perm[r]

    def add(self, servers, t: float) -> int:
        if not self.free:
            self._grow()
        slot = self.free.pop()
        d = self.d
        self.alive[slot] = True
        self.arr[slot] = t
        for r in range(d):
            j = servers[r]
            lst = self.slist[j]
            self.srv[slot * d + r] = j
            self.pos[slot * d + r] = len(lst)
            lst.append(slot)
            if len(lst) == 1:
                self.busy += 1
        self.apos[slot] = len(self.act)
        self.act.append(slot)
        self.njobs += 1
        return slot

    def remove(self, slot: int, weighted: bool) -> None:
        d, srv, pos = self.d, self.srv, self.pos
        for r in range(d):
            j = srv[slot * d + r]
            p = pos[slot * d + r]
            lst = self.slist[j]
            last = lst[-1]
            lst[p] = last
            lst.pop()
            if last != slot:
                for r2 in range(d):
                    if srv[last * d + r2] == j:
                        pos[last * d + r2] = p
                        break
            if not lst:
                self.busy -= 1
        a = self.apos[slot]
        last = self.act[-1]
        self.act[a] = last
        self.apos[last] = a
        self.act.pop()
        self.alive[slot] = False
        if weighted:
            old = self.w[slot]
            self.w[slot] = 0.0
            self.update(slot, -old)
        else:
            self.w[slot] = 0.0
        self.free.append(slot)
        self.njobs -= 1

    def weight(self, slot: int) -> float:
        d, srv, slist = self.d, self.srv, self.slist
        s = 0.0
        for r in range(d):
            s += 1.0 / len(slist[srv[slot * d + r]])
        return s

    def refresh(self, servers, weighted: bool) -> None:
        w = self.w
        for j in servers:
            for s in self.slist[j]:
                nw = self.weight(s)
                delta = nw - w[s]
                if delta != 0.0:
                    w[s] = nw
                    if weighted:
                        self.update(s, delta)

    def servers_of(self, slot: int) -> list[int]:
        d = self.d
        return self.srv[slot * d:(slot + 1) * d]

    def queue_lengths(self) -> list[int]:
        return [len(lst) for lst in self.slist]

    def final_jobs(self) -> np.ndarray:
        rows = [self.servers_of(s) for s in range(self.cap) if self.alive[s]]
        return np.array(rows, dtype=np.int64).reshape(len(rows), self.d)

    def final_work(self) -> np.ndarray:
        return np.array([self.rem[s] for s in range(self.cap) if self.alive[s]])


def _load(pool: _Pool, init_jobs, init_work=None):
    init_jobs = np.asarray(init_jobs, dtype=np.int64).reshape(-1, pool.d)
    for k, row in enumerate(init_jobs.tolist()):
        slot = pool.add(row, 0.0)
        if init_work is not None:
            pool.rem[slot] = float(init_work[k])
    for s in range(pool.cap):
        if pool.alive[s]:
            pool.w[s] = pool.weight(s)
    pool.build()


class _Recorder:
    __slots__ = ("snap", "count", "si", "out", "stats_start", "t_end", "stats")

    def __init__(self, snap_times, n, stats_start):
        self.snap = [float(s) for s in snap_times]
        self.count = len(self.snap)
        self.si = 0
        self.out = np.zeros((self.count, n), dtype=np.int32)
        self.stats_start = stats_start
        self.t_end = self.snap[-1]
        self.stats = [0.0] * 6

    def span(self, pool: _Pool, t: float, tn: float) -> bool:
        """Account for the state held on [t, tn); True once all snapshots are taken."""
        if self.si < self.count and self.snap[self.si] < tn:
            q = pool.queue_lengths()
            while self.si < self.count and self.snap[self.si] < tn:
                self.out[self.si] = q
                self.si += 1
        a = t if t > self.stats_start else self.stats_start
        b = tn if tn < self.t_end else self.t_end
        if b > a:
            self.stats[0] += pool.busy * (b - a)
            self.stats[1] += pool.njobs * (b - a)
        return self.si == self.count

    def departed(self, t: float, arrived: float):
        if t >= self.stats_start:
            self.stats[2] += t - arrived
            self.stats[3] += 1.0


def ctmc(n, d, lam, snap_times, stats_start, init_jobs, gen):
    """Direct simulation with per-job departure rates ``sum_j 1/q_j``.

    Identical jobs of one class are kept as separate slots; picking a slot
    proportionally to its own rate picks a class proportionally to
    ``x_i sum_j 1/q_j``.
    """
    u = _Uniforms(gen)
    pool = _Pool(n, d)
    _load(pool, init_jobs)
    rec = _Recorder(snap_times, n, stats_start)
    arr_rate = n * lam
    t = 0.0
    events = arrivals = 0
    while True:
        rate = arr_rate + pool.busy
        tn = t - log(1.0 - u()) / rate if rate > 0.0 else inf
        if rec.span(pool, t, tn):
            break
        t = tn
        events += 1
        if u() * rate < arr_rate:
            pool.sample_servers(u)
            servers = pool.perm[:d]
            pool.add(servers, t)
            arrivals += 1
        else:
            while True:
                slot = pool.find(u() * pool.tree[pool.cap])
                if slot < pool.cap and pool.alive[slot]:
                    break
            servers = pool.servers_of(slot)
            rec.departed(t, pool.arr[slot])
            pool.remove(slot, True)
        pool.refresh(servers, True)
        if events % REBUILD_EVERY == 0:
            pool.build()
    rec.stats[4], rec.stats[5] = float(events), float(arrivals)
    return rec.out, np.array(rec.stats), pool.final_jobs()


def uniformized(n, d, lam, snap_times, stats_start, init_jobs, gen):
    """Constant-rate event clock: arrival or a virtual service at a random server."""
    u = _Uniforms(gen)
    pool = _Pool(n, d)
    _load(pool, init_jobs)
    rec = _Recorder(snap_times, n, stats_start)
    rate = n * (1.0 + lam)
    p_arr = lam / (1.0 + lam)
    t = 0.0
    events = arrivals = 0
    while True:
        tn = t - log(1.0 - u()) / rate
        if rec.span(pool, t, tn):
            break
        t = tn
        events += 1
        if u() < p_arr:
            pool.sample_servers(u)
            pool.add(pool.perm[:d], t)
            arrivals += 1
        else:
            j = _pick(u(), n)
            lst = pool.slist[j]
            if lst:
                slot = lst[_pick(u(), len(lst))]
                rec.departed(t, pool.arr[slot])
                pool.remove(slot, False)
    rec.stats[4], rec.stats[5] = float(events), float(arrivals)
    return rec.out, np.array(rec.stats), pool.final_jobs()


def sample_work(u, kind: int, params) -> float:
    if kind == 0:
        return -log(1.0 - u()) * params[0]
    if kind == 1:
        k = int(params[0])
        s = 0.0
        for _ in range(k):
            s += -log(1.0 - u())
        return s * params[1] / k
    m = len(params) // 2
    u0 = u()
    c = 0.0
    comp = m - 1
    for i in range(m):
        c += params[m + i]
        if u0 < c:
            comp = i
            break
    return -log(1.0 - u()) / params[comp]


def workload(n, d, lam, law_kind, law_params, snap_times, stats_start,
             init_jobs, init_work, gen):
    """General service: track remaining work; rescan for the next completion."""
    u = _Uniforms(gen)
    params = [float(p) for p in law_params]
    pool = _Pool(n, d)
    _load(pool, init_jobs, init_work)
    rec = _Recorder(snap_times, n, stats_start)
    arr_rate = n * lam
    t = 0.0
    t_arr = -log(1.0 - u()) / arr_rate if arr_rate > 0.0 else inf
    events = arrivals = 0
    rem, w = pool.rem, pool.w
    while True:
        best = -1
        tc = inf
        for s in pool.act:
            c = rem[s] / w[s]
            if c < tc:
                tc = c
                best = s
        if tc < 0.0:
            tc = 0.0
        t_dep = t + tc
        arrival = t_arr <= t_dep
        tn = t_arr if arrival else t_dep
        if rec.span(pool, t, tn):
            break
        dt = tn - t
        for s in pool.act:
            rem[s] -= w[s] * dt
        t = tn
        events += 1
        if arrival:
            pool.sample_servers(u)
            servers = pool.perm[:d]
            work = sample_work(u, law_kind, params)
            slot = pool.add(servers, t)
            rem[slot] = work
            arrivals += 1
            t_arr = t - log(1.0 - u()) / arr_rate
        else:
            servers = pool.servers_of(best)
            rec.departed(t, pool.arr[best])
            pool.remove(best, False)
        pool.refresh(servers, False)
    rec.stats[4], rec.stats[5] = float(events), float(arrivals)
    return rec.out, np.array(rec.stats), pool.final_jobs()
