# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled event loops.  Mirrors ``_pykernels`` operation for operation."""

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport log, INFINITY
from libc.stdlib cimport malloc, realloc, free
from libc.string cimport memset
from numpy.random cimport bitgen_t

import numpy as np

cdef enum:
    REBUILD_EVERY = 1 << 14


cdef inline int _pick(double u, int k) noexcept nogil:
    cdef int r = <int>(u * k)
    if r >= k:
        return k - 1
    return r


cdef class _Pool:
    cdef bitgen_t *rng
    cdef int n, d, cap, busy, njobs, nfree, nact
    cdef int *srv
    cdef int *pos
    cdef char *alive
    cdef double *w
    cdef double *rem
    cdef double *arr
    cdef double *tree
    cdef int *freelist
    cdef int *act
    cdef int *apos
    cdef int **slist
    cdef int *slen
    cdef int *scap
    cdef int *perm
    cdef bint oom

    def __cinit__(self, int n, int d, gen):
        cdef int i
        self.rng = <bitgen_t *> PyCapsule_GetPointer(gen.bit_generator.capsule, "BitGenerator")
        self.n = n
        self.d = d
        self.cap = 64
        self.busy = 0
        self.njobs = 0
        self.nact = 0
        self.oom = False
        self.srv = <int *> malloc(self.cap * d * sizeof(int))
        self.pos = <int *> malloc(self.cap * d * sizeof(int))
        self.alive = <char *> malloc(self.cap * sizeof(char))
        self.w = <double *> malloc(self.cap * sizeof(double))
        self.rem = <double *> malloc(self.cap * sizeof(double))
        self.arr = <double *> malloc(self.cap * sizeof(double))
        self.tree = <double *> malloc((self.cap + 1) * sizeof(double))
        self.freelist = <int *> malloc(self.cap * sizeof(int))
        self.act = <int *> malloc(self.cap * sizeof(int))
        self.apos = <int *> malloc(self.cap * sizeof(int))
        self.slist = <int **> malloc(n * sizeof(int *))
        self.slen = <int *> malloc(n * sizeof(int))
        self.scap = <int *> malloc(n * sizeof(int))
        self.perm = <int *> malloc(n * sizeof(int))
        if (self.srv == NULL or self.pos == NULL or self.alive == NULL or self.w == NULL
                or self.rem == NULL or self.arr == NULL or self.tree == NULL
                or self.freelist == NULL or self.act == NULL or self.apos == NULL
                or self.slist == NULL or self.slen == NULL or self.scap == NULL
                or self.perm == NULL):
            raise MemoryError()
        memset(self.alive, 0, self.cap)
        for i in range(self.cap):
            self.w[i] = 0.0
            self.rem[i] = 0.0
            self.arr[i] = 0.0
            self.apos[i] = 0
        for i in range(self.cap + 1):
            self.tree[i] = 0.0
        # free stack pops 0, 1, 2, ... in order
        self.nfree = self.cap
        for i in range(self.cap):
            self.freelist[i] = self.cap - 1 - i
        for i in range(n):
            self.slist[i] = NULL
            self.slen[i] = 0
            self.scap[i] = 0
            self.perm[i] = i

    def __dealloc__(self):
        cdef int i
        if self.slist != NULL:
            for i in range(self.n):
                free(self.slist[i])
        free(self.srv); free(self.pos); free(self.alive); free(self.w)
        free(self.rem); free(self.arr); free(self.tree); free(self.freelist)
        free(self.act); free(self.apos); free(self.slist); free(self.slen)
        free(self.scap); free(self.perm)

    cdef inline double u(self) noexcept nogil:
        return self.rng.next_double(self.rng.state)

    cdef int grow(self) noexcept nogil:
        cdef int old = self.cap, cap = 2 * old, d = self.d, i
        cdef void *p
        p = realloc(self.srv, cap * d * sizeof(int))
        if p == NULL: return -1
        self.srv = <int *> p
        p = realloc(self.pos, cap * d * sizeof(int))
        if p == NULL: return -1
        self.pos = <int *> p
        p = realloc(self.alive, cap * sizeof(char))
        if p == NULL: return -1
        self.alive = <char *> p
        p = realloc(self.w, cap * sizeof(double))
        if p == NULL: return -1
        self.w = <double *> p
        p = realloc(self.rem, cap * sizeof(double))
        if p == NULL: return -1
        self.rem = <double *> p
        p = realloc(self.arr, cap * sizeof(double))
        if p == NULL: return -1
        self.arr = <double *> p
        p = realloc(self.tree, (cap + 1) * sizeof(double))
        if p == NULL: return -1
        self.tree = <double *> p
        p = realloc(self.freelist, cap * sizeof(int))
        if p == NULL: return -1
        self.freelist = <int *> p
        p = realloc(self.act, cap * sizeof(int))
        if p == NULL: return -1
        self.act = <int *> p
        p = realloc(self.apos, cap * sizeof(int))
        if p == NULL: return -1
        self.apos = <int *> p
        for i in range(old, cap):
            self.alive[i] = 0
            self.w[i] = 0.0
            self.rem[i] = 0.0
            self.arr[i] = 0.0
            self.apos[i] = 0
        for i in range(old * d, cap * d):
            self.srv[i] = 0
            self.pos[i] = 0
        self.nfree = old
        for i in range(old):
            self.freelist[i] = cap - 1 - i
        self.cap = cap
        self.build()
        return 0

    cdef void build(self) noexcept nogil:
        cdef int cap = self.cap, i, j
        cdef double *tree = self.tree
        for i in range(cap + 1):
            tree[i] = 0.0
        for i in range(1, cap + 1):
            tree[i] += self.w[i - 1]
            j = i + (i & -i)
            if j <= cap:
                tree[j] += tree[i]

    cdef inline void update(self, int slot, double delta) noexcept nogil:
        cdef int i = slot + 1, cap = self.cap
        while i <= cap:
            self.tree[i] += delta
            i += i & -i

    cdef inline int find(self, double target) noexcept nogil:
        cdef int p = 0, step = self.cap, nxt
        while step:
            nxt = p + step
            if nxt <= self.cap and self.tree[nxt] <= target:
                p = nxt
                target -= self.tree[nxt]
            step >>= 1
        return p

    cdef void sample_servers(self) noexcept nogil:
        cdef int r, k, tmp
        for r in range(self.d):
            k = r + _pick(self.u(), self.n - r)
            tmp = self.perm[r]
            self.perm[r] = self.perm[k]
            self.perm[k] = tmp

    cdef int push_server(self, int j, int slot) noexcept nogil:
        cdef void *p
        cdef int c
        if self.slen[j] == self.scap[j]:
            c = 4 if self.scap[j] == 0 else 2 * self.scap[j]
            p = realloc(self.slist[j], c * sizeof(int))
            if p == NULL:
                return -1
            self.slist[j] = <int *> p
            self.scap[j] = c
        self.slist[j][self.slen[j]] = slot
        self.slen[j] += 1
        return 0

    cdef int add(self, int *servers, double t) noexcept nogil:
        cdef int slot, r, j, d = self.d
        if self.nfree == 0:
            if self.grow() != 0:
                self.oom = True
                return -1
        self.nfree -= 1
        slot = self.freelist[self.nfree]
        self.alive[slot] = 1
        self.arr[slot] = t
        for r in range(d):
            j = servers[r]
            self.srv[slot * d + r] = j
            self.pos[slot * d + r] = self.slen[j]
            if self.push_server(j, slot) != 0:
                self.oom = True
                return -1
            if self.slen[j] == 1:
                self.busy += 1
        self.apos[slot] = self.nact
        self.act[self.nact] = slot
        self.nact += 1
        self.njobs += 1
        return slot

    cdef void remove(self, int slot, bint weighted) noexcept nogil:
        cdef int d = self.d, r, r2, j, p, last, a
        cdef double old
        for r in range(d):
            j = self.srv[slot * d + r]
            p = self.pos[slot * d + r]
            last = self.slist[j][self.slen[j] - 1]
            self.slist[j][p] = last
            self.slen[j] -= 1
            if last != slot:
                for r2 in range(d):
                    if self.srv[last * d + r2] == j:
                        self.pos[last * d + r2] = p
                        break
            if self.slen[j] == 0:
                self.busy -= 1
        a = self.apos[slot]
        last = self.act[self.nact - 1]
        self.act[a] = last
        self.apos[last] = a
        self.nact -= 1
        self.alive[slot] = 0
        if weighted:
            old = self.w[slot]
            self.w[slot] = 0.0
            self.update(slot, -old)
        else:
            self.w[slot] = 0.0
        self.freelist[self.nfree] = slot
        self.nfree += 1
        self.njobs -= 1

    cdef inline double weight(self, int slot) noexcept nogil:
        cdef int r, d = self.d
        cdef double s = 0.0
        for r in range(d):
            s += 1.0 / self.slen[self.srv[slot * d + r]]
        return s

    cdef void refresh(self, int *servers, bint weighted) noexcept nogil:
        cdef int r, k, j, s
        cdef double nw, delta
        for r in range(self.d):
            j = servers[r]
            for k in range(self.slen[j]):
                s = self.slist[j][k]
                nw = self.weight(s)
                delta = nw - self.w[s]
                if delta != 0.0:
                    self.w[s] = nw
                    if weighted:
                        self.update(s, delta)

    cdef void load_weights(self) noexcept nogil:
        cdef int s
        for s in range(self.cap):
            if self.alive[s]:
                self.w[s] = self.weight(s)
        self.build()

    def final_jobs(self):
        out = np.zeros((self.njobs, self.d), dtype=np.int64)
        cdef long long[:, ::1] o = out
        cdef int s, r, k = 0
        for s in range(self.cap):
            if self.alive[s]:
                for r in range(self.d):
                    o[k, r] = self.srv[s * self.d + r]
                k += 1
        return out


cdef class _Recorder:
    cdef double[::1] snap
    cdef int[:, ::1] out
    cdef int count, si, n
    cdef double stats_start, t_end
    cdef double stats[6]

    def __cinit__(self, double[::1] snap, int[:, ::1] out, double stats_start):
        cdef int i
        self.snap = snap
        self.out = out
        self.count = snap.shape[0]
        self.n = out.shape[1]
        self.si = 0
        self.stats_start = stats_start
        self.t_end = snap[self.count - 1]
        for i in range(6):
            self.stats[i] = 0.0

    cdef bint span(self, _Pool pool, double t, double tn) noexcept nogil:
        cdef int j
        cdef double a, b
        while self.si < self.count and self.snap[self.si] < tn:
            for j in range(self.n):
                self.out[self.si, j] = pool.slen[j]
            self.si += 1
        a = t if t > self.stats_start else self.stats_start
        b = tn if tn < self.t_end else self.t_end
        if b > a:
            self.stats[0] += pool.busy * (b - a)
            self.stats[1] += pool.njobs * (b - a)
        return self.si == self.count

    cdef inline void departed(self, double t, double arrived) noexcept nogil:
        if t >= self.stats_start:
            self.stats[2] += t - arrived
            self.stats[3] += 1.0

    def result(self, double events, double arrivals):
        self.stats[4] = events
        self.stats[5] = arrivals
        return np.array([self.stats[i] for i in range(6)])


cdef _Pool _loaded(int n, int d, gen, init_jobs, init_work=None):
    cdef _Pool pool = _Pool(n, d, gen)
    jobs = np.ascontiguousarray(np.asarray(init_jobs, dtype=np.int32).reshape(-1, d))
    cdef int[:, ::1] jv = jobs
    cdef int k, slot
    for k in range(jv.shape[0]):
        slot = pool.add(&jv[k, 0], 0.0)
        if slot < 0:
            raise MemoryError()
        if init_work is not None:
            pool.rem[slot] = float(init_work[k])
    pool.load_weights()
    return pool


def ctmc(int n, int d, double lam, snap_times, double stats_start, init_jobs, gen):
    cdef _Pool pool = _loaded(n, d, gen, init_jobs)
    snap = np.ascontiguousarray(snap_times, dtype=np.float64)
    out = np.zeros((snap.shape[0], n), dtype=np.int32)
    cdef _Recorder rec = _Recorder(snap, out, stats_start)
    cdef double arr_rate = n * lam, rate, tn, t = 0.0
    cdef long long events = 0, arrivals = 0
    cdef int slot, r
    cdef int *servers = <int *> malloc(d * sizeof(int))
    if servers == NULL:
        raise MemoryError()
    try:
        with gen.bit_generator.lock, nogil:
            while True:
                rate = arr_rate + pool.busy
                if rate > 0.0:
                    tn = t - log(1.0 - pool.u()) / rate
                else:
                    tn = INFINITY
                if rec.span(pool, t, tn):
                    break
                t = tn
                events += 1
                if pool.u() * rate < arr_rate:
                    pool.sample_servers()
                    for r in range(d):
                        servers[r] = pool.perm[r]
                    if pool.add(servers, t) < 0:
                        break
                    arrivals += 1
                else:
                    while True:
                        slot = pool.find(pool.u() * pool.tree[pool.cap])
                        if slot < pool.cap and pool.alive[slot]:
                            break
                    for r in range(d):
                        servers[r] = pool.srv[slot * d + r]
                    rec.departed(t, pool.arr[slot])
                    pool.remove(slot, True)
                pool.refresh(servers, True)
                if events % REBUILD_EVERY == 0:
                    pool.build()
    finally:
        free(servers)
    if pool.oom:
        raise MemoryError()
    return out, rec.result(events, arrivals), pool.final_jobs()


def uniformized(int n, int d, double lam, snap_times, double stats_start, init_jobs, gen):
    cdef _Pool pool = _loaded(n, d, gen, init_jobs)
    snap = np.ascontiguousarray(snap_times, dtype=np.float64)
    out = np.zeros((snap.shape[0], n), dtype=np.int32)
    cdef _Recorder rec = _Recorder(snap, out, stats_start)
    cdef double rate = n * (1.0 + lam), p_arr = lam / (1.0 + lam), tn, t = 0.0
    cdef long long events = 0, arrivals = 0
    cdef int j, slot
    with gen.bit_generator.lock, nogil:
        while True:
            tn = t - log(1.0 - pool.u()) / rate
            if rec.span(pool, t, tn):
                break
            t = tn
            events += 1
            if pool.u() < p_arr:
                pool.sample_servers()
                if pool.add(pool.perm, t) < 0:
                    break
                arrivals += 1
            else:
                j = _pick(pool.u(), n)
                if pool.slen[j] > 0:
                    slot = pool.slist[j][_pick(pool.u(), pool.slen[j])]
                    rec.departed(t, pool.arr[slot])
                    pool.remove(slot, False)
    if pool.oom:
        raise MemoryError()
    return out, rec.result(events, arrivals), pool.final_jobs()


cdef double _sample_work(_Pool pool, int kind, double *params, int nparams) noexcept nogil:
    cdef int k, i, m, comp
    cdef double s, u0, c
    if kind == 0:
        return -log(1.0 - pool.u()) * params[0]
    if kind == 1:
        k = <int> params[0]
        s = 0.0
        for i in range(k):
            s += -log(1.0 - pool.u())
        return s * params[1] / k
    m = nparams // 2
    u0 = pool.u()
    c = 0.0
    comp = m - 1
    for i in range(m):
        c += params[m + i]
        if u0 < c:
            comp = i
            break
    return -log(1.0 - pool.u()) / params[comp]


def workload(int n, int d, double lam, int law_kind, law_params, snap_times,
             double stats_start, init_jobs, init_work, gen):
    cdef _Pool pool = _loaded(n, d, gen, init_jobs, init_work)
    params_arr = np.ascontiguousarray(law_params, dtype=np.float64)
    cdef double[::1] pv = params_arr
    cdef int nparams = pv.shape[0]
    snap = np.ascontiguousarray(snap_times, dtype=np.float64)
    out = np.zeros((snap.shape[0], n), dtype=np.int32)
    cdef _Recorder rec = _Recorder(snap, out, stats_start)
    cdef double arr_rate = n * lam, t = 0.0, t_arr, tc, c, t_dep, tn, dt, work
    cdef long long events = 0, arrivals = 0
    cdef int best, k, s, r, slot
    cdef bint arrival
    cdef int *servers = <int *> malloc(d * sizeof(int))
    if servers == NULL:
        raise MemoryError()
    try:
        with gen.bit_generator.lock, nogil:
            if arr_rate > 0.0:
                t_arr = -log(1.0 - pool.u()) / arr_rate
            else:
                t_arr = INFINITY
            while True:
                best = -1
                tc = INFINITY
                for k in range(pool.nact):
                    s = pool.act[k]
                    c = pool.rem[s] / pool.w[s]
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
                for k in range(pool.nact):
                    s = pool.act[k]
                    pool.rem[s] -= pool.w[s] * dt
                t = tn
                events += 1
                if arrival:
                    pool.sample_servers()
                    for r in range(d):
                        servers[r] = pool.perm[r]
                    work = _sample_work(pool, law_kind, &pv[0], nparams)
                    slot = pool.add(servers, t)
                    if slot < 0:
                        break
                    pool.rem[slot] = work
                    arrivals += 1
                    t_arr = t - log(1.0 - pool.u()) / arr_rate
                else:
                    for r in range(d):
                        servers[r] = pool.srv[best * d + r]
                    rec.departed(t, pool.arr[best])
                    pool.remove(best, False)
                pool.refresh(servers, False)
    finally:
        free(servers)
    if pool.oom:
        raise MemoryError()
    return out, rec.result(events, arrivals), pool.final_jobs()
