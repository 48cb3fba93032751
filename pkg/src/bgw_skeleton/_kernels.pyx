# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation kernels.

Port of ``_kernels_py``; same counters, same comparisons, same outputs.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log1p
from libc.stdint cimport int8_t, int32_t, int64_t, uint8_t, uint64_t
from libc.stdlib cimport free, realloc

cnp.import_array()

NAME = "cython"

cdef enum:
    EXTINCT = 0
    HORIZON = 1
    CAP = 2
    STOPPED = 3

cdef enum:
    BD_EXTINCT = 0
    BD_ALIVE = 1
    BD_EXPLODED = 2
    BD_STOPPED = 3

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t SEED_SALT = 0x5851F42D4C957F2DULL
cdef double U53 = 1.0 / 9007199254740992.0


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double unif(uint64_t key, uint64_t ctr) noexcept nogil:
    return <double>(mix64(key + GOLDEN * (ctr + 1)) >> 11) * U53


cdef inline uint64_t replica_key(uint64_t seed, uint64_t replica) noexcept nogil:
    return mix64(mix64(seed ^ SEED_SALT) + GOLDEN * (replica + 1))


def stream_key(seed, replica):
    return int(replica_key(<uint64_t>seed, <uint64_t>replica))


cdef class _Arena:
    cdef int64_t cap
    cdef int64_t n
    cdef int64_t* parent
    cdef int32_t* gen
    cdef int8_t* typ
    cdef int32_t* off
    cdef uint8_t* marked
    cdef int64_t* fc
    cdef uint8_t* ht
    cdef uint8_t* mm
    cdef uint8_t* sk
    cdef int64_t* skg
    cdef int64_t skg_cap
    # per-tree scalars set by grow()
    cdef int status
    cdef int64_t last_gen
    cdef int64_t first_mark_gen
    cdef int64_t first_target_gen

    def __cinit__(self, int64_t cap=4096):
        self.cap = 0
        self.n = 0
        self.skg_cap = 0
        self.parent = NULL
        self.gen = NULL
        self.typ = NULL
        self.off = NULL
        self.marked = NULL
        self.fc = NULL
        self.ht = NULL
        self.mm = NULL
        self.sk = NULL
        self.skg = NULL
        self.reserve(cap)

    def __dealloc__(self):
        free(self.parent)
        free(self.gen)
        free(self.typ)
        free(self.off)
        free(self.marked)
        free(self.fc)
        free(self.ht)
        free(self.mm)
        free(self.sk)
        free(self.skg)

    cdef int reserve(self, int64_t need) except -1:
        cdef int64_t c = self.cap if self.cap > 0 else 1024
        if need <= self.cap:
            return 0
        while c < need:
            c *= 2
        self.parent = <int64_t*>self._grow(self.parent, c * sizeof(int64_t))
        self.gen = <int32_t*>self._grow(self.gen, c * sizeof(int32_t))
        self.typ = <int8_t*>self._grow(self.typ, c * sizeof(int8_t))
        self.off = <int32_t*>self._grow(self.off, c * sizeof(int32_t))
        self.marked = <uint8_t*>self._grow(self.marked, c * sizeof(uint8_t))
        self.fc = <int64_t*>self._grow(self.fc, c * sizeof(int64_t))
        self.ht = <uint8_t*>self._grow(self.ht, c * sizeof(uint8_t))
        self.mm = <uint8_t*>self._grow(self.mm, c * sizeof(uint8_t))
        self.sk = <uint8_t*>self._grow(self.sk, c * sizeof(uint8_t))
        self.cap = c
        return 0

    cdef void* _grow(self, void* p, size_t nbytes) except NULL:
        cdef void* q = realloc(p, nbytes)
        if q == NULL:
            raise MemoryError()
        return q

    cdef int reserve_gens(self, int64_t need) except -1:
        cdef void* q
        if need <= self.skg_cap:
            return 0
        q = realloc(self.skg, need * sizeof(int64_t))
        if q == NULL:
            raise MemoryError()
        self.skg = <int64_t*>q
        self.skg_cap = need
        return 0

    cdef int grow(self, uint64_t key, const double[:, ::1] cum, const double[:, ::1] amark,
                  const double[::1] pimut, int n_active, int64_t horizon, int64_t node_cap,
                  int64_t stop_events) except -1:
        cdef int64_t start = 0, end = 1, g = 0, events = 0, total, i, j, c, k
        cdef int t, pt, ct
        cdef double u, a, pm
        cdef int64_t nm, nt
        self.parent[0] = -1
        self.gen[0] = 0
        self.typ[0] = 0
        self.first_mark_gen = -1
        self.first_target_gen = -1
        self.status = EXTINCT
        while end > start:
            if g == horizon:
                # families of horizon nodes are not grown, but their count
                # marks are drawn so that marks are observed up to the horizon
                nm = 0
                for i in range(start, end):
                    t = self.typ[i]
                    self.off[i] = -1
                    self.marked[i] = 0
                    self.fc[i] = -1
                    if t >= n_active:
                        continue
                    u = unif(key, 3 * <uint64_t>i)
                    k = 0
                    while cum[t, k] <= u:
                        k += 1
                    a = amark[t, k]
                    if a > 0.0:
                        if unif(key, 3 * <uint64_t>i + 1) < a:
                            self.marked[i] = 1
                            nm += 1
                if nm and self.first_mark_gen < 0:
                    self.first_mark_gen = g
                self.status = HORIZON
                break
            total = 0
            nm = 0
            for i in range(start, end):
                t = self.typ[i]
                self.marked[i] = 0
                self.fc[i] = -1
                if t >= n_active:
                    self.off[i] = 0
                    continue
                u = unif(key, 3 * <uint64_t>i)
                k = 0
                while cum[t, k] <= u:
                    k += 1
                self.off[i] = <int32_t>k
                total += k
                a = amark[t, k]
                if a > 0.0:
                    if unif(key, 3 * <uint64_t>i + 1) < a:
                        self.marked[i] = 1
                        nm += 1
            if nm:
                events += nm
                if self.first_mark_gen < 0:
                    self.first_mark_gen = g
            if end + total > node_cap:
                self.status = CAP
                break
            self.reserve(end + total)
            c = end
            nt = 0
            for i in range(start, end):
                k = self.off[i]
                if k <= 0:
                    continue
                self.fc[i] = c
                pt = self.typ[i]
                pm = pimut[pt]
                for j in range(k):
                    self.parent[c] = i
                    self.gen[c] = <int32_t>(g + 1)
                    ct = pt
                    if pm > 0.0:
                        if unif(key, 3 * <uint64_t>c + 2) < pm:
                            ct = pt + 1
                    self.typ[c] = <int8_t>ct
                    if ct == n_active:
                        nt += 1
                    c += 1
            if nt:
                events += nt
                if self.first_target_gen < 0:
                    self.first_target_gen = g + 1
            start = end
            end = c
            g += 1
            if stop_events > 0 and events >= stop_events and end > start:
                for i in range(start, end):
                    self.off[i] = -1
                    self.marked[i] = 0
                    self.fc[i] = -1
                self.status = STOPPED
                break
        self.n = end
        self.last_gen = g
        return 0

    cdef int flags(self, int n_active) except -1:
        """Fill ht (success below), mm (mutation mark) and sk (skeleton)."""
        cdef int64_t i, p, n = self.n
        cdef bint unres
        for i in range(n):
            unres = (self.off[i] < 0 and self.typ[i] < n_active) or (self.off[i] > 0 and self.fc[i] < 0)
            self.ht[i] = 1 if (self.typ[i] == n_active or unres) else 0
            self.mm[i] = 0
            # sk temporarily holds "unresolved"
            self.sk[i] = 1 if unres else 0
        for i in range(n - 1, 0, -1):
            p = self.parent[i]
            if self.ht[i]:
                self.ht[p] = 1
                if self.typ[i] == self.typ[p] + 1:
                    self.mm[p] = 1
        for i in range(n):
            if self.mm[i]:
                self.marked[i] = 1
            self.sk[i] = 1 if (self.typ[i] == 0 and (self.marked[i] or self.sk[i])) else 0
        for i in range(n - 1, 0, -1):
            if self.sk[i]:
                self.sk[self.parent[i]] = 1
        return 0

    def arrays(self):
        cdef int64_t n = self.n
        cdef int64_t i
        parent = np.empty(n, dtype=np.int64)
        gen = np.empty(n, dtype=np.int32)
        typ = np.empty(n, dtype=np.int8)
        off = np.empty(n, dtype=np.int32)
        marked = np.empty(n, dtype=np.uint8)
        fc = np.empty(n, dtype=np.int64)
        cdef int64_t[::1] pv = parent
        cdef int32_t[::1] gv = gen
        cdef int8_t[::1] tv = typ
        cdef int32_t[::1] ov = off
        cdef uint8_t[::1] mv = marked
        cdef int64_t[::1] fv = fc
        for i in range(n):
            pv[i] = self.parent[i]
            gv[i] = self.gen[i]
            tv[i] = self.typ[i]
            ov[i] = self.off[i]
            mv[i] = self.marked[i]
            fv[i] = self.fc[i]
        return parent, gen, typ, off, marked, fc


def grow_tree(key, cum, amark, pimut, int n_active, int64_t horizon, int64_t node_cap,
              int64_t stop_events):
    cdef _Arena arena = _Arena(4096)
    cdef const double[:, ::1] cv = np.ascontiguousarray(cum, dtype=np.float64)
    cdef const double[:, ::1] av = np.ascontiguousarray(amark, dtype=np.float64)
    cdef const double[::1] piv = np.ascontiguousarray(pimut, dtype=np.float64)
    arena.grow(<uint64_t>key, cv, av, piv, n_active, horizon, node_cap, stop_events)
    parent, gen, typ, off, marked, fc = arena.arrays()
    return {
        "parent": parent,
        "generation": gen,
        "type_id": typ,
        "offspring": off,
        "count_marked": marked,
        "first_child": fc,
        "status": arena.status,
        "last_generation": arena.last_gen,
        "first_mark_generation": arena.first_mark_gen,
        "first_target_generation": arena.first_target_gen,
    }


def batch_trees(seed, int64_t first_replica, int64_t count, cum, amark, pimut, int n_active,
                int64_t horizon, int64_t node_cap, int64_t stop_events, count_gens):
    cdef _Arena arena = _Arena(4096)
    cdef const double[:, ::1] cv = np.ascontiguousarray(cum, dtype=np.float64)
    cdef const double[:, ::1] av = np.ascontiguousarray(amark, dtype=np.float64)
    cdef const double[::1] piv = np.ascontiguousarray(pimut, dtype=np.float64)
    cg_arr = np.ascontiguousarray(count_gens, dtype=np.int64)
    cdef const int64_t[::1] cg = cg_arr
    cdef int64_t ng = cg.shape[0]

    status_a = np.zeros(count, dtype=np.int8)
    nonempty_a = np.zeros(count, dtype=np.uint8)
    xi_a = np.zeros(count, dtype=np.uint8)
    x1_a = np.zeros(count, dtype=np.int32)
    w_a = np.zeros(count, dtype=np.int64)
    fmg_a = np.zeros(count, dtype=np.int32)
    ftg_a = np.zeros(count, dtype=np.int32)
    ext_a = np.zeros(count, dtype=np.int32)
    size_a = np.zeros(count, dtype=np.int64)
    ho_a = np.zeros(count, dtype=np.uint8)
    counts_a = np.zeros((count, ng), dtype=np.int64)
    cdef int8_t[::1] status_v = status_a
    cdef uint8_t[::1] nonempty_v = nonempty_a
    cdef uint8_t[::1] xi_v = xi_a
    cdef int32_t[::1] x1_v = x1_a
    cdef int64_t[::1] w_v = w_a
    cdef int32_t[::1] fmg_v = fmg_a
    cdef int32_t[::1] ftg_v = ftg_a
    cdef int32_t[::1] ext_v = ext_a
    cdef int64_t[::1] size_v = size_a
    cdef uint8_t[::1] ho_v = ho_a
    cdef int64_t[:, ::1] counts_v = counts_a

    cdef uint64_t useed = <uint64_t>seed
    cdef int64_t r, i, n, w, fmg, x1, j, gq
    cdef bint has_target
    for r in range(count):
        arena.grow(replica_key(useed, <uint64_t>(first_replica + r)), cv, av, piv, n_active,
                   horizon, node_cap, stop_events)
        arena.flags(n_active)
        n = arena.n
        w = 0
        fmg = -1
        x1 = 0
        has_target = False
        arena.reserve_gens(arena.last_gen + 1)
        for i in range(arena.last_gen + 1):
            arena.skg[i] = 0
        for i in range(n):
            if arena.typ[i] == n_active:
                has_target = True
            if arena.typ[i] != 0:
                continue
            if arena.marked[i]:
                w += 1
                if fmg < 0 or arena.gen[i] < fmg:
                    fmg = arena.gen[i]
            if arena.sk[i]:
                arena.skg[arena.gen[i]] += 1
                if arena.parent[i] == 0:
                    x1 += 1
        status_v[r] = <int8_t>arena.status
        nonempty_v[r] = arena.sk[0]
        xi_v[r] = arena.marked[0]
        x1_v[r] = <int32_t>x1
        w_v[r] = w
        fmg_v[r] = <int32_t>fmg
        ftg_v[r] = <int32_t>arena.first_target_gen
        ext_v[r] = <int32_t>(arena.last_gen + 1 if arena.status == EXTINCT else -1)
        size_v[r] = n
        ho_v[r] = 1 if (arena.sk[0] and w == 0 and not has_target) else 0
        for j in range(ng):
            gq = cg[j]
            if arena.status != EXTINCT and gq > arena.last_gen:
                counts_v[r, j] = -1
            elif gq <= arena.last_gen and gq >= 0:
                counts_v[r, j] = arena.skg[gq]
            else:
                counts_v[r, j] = 0
    return {
        "status": status_a,
        "nonempty": nonempty_a,
        "xi": xi_a,
        "x1": x1_a,
        "total_marked": w_a,
        "first_mark_generation": fmg_a,
        "first_target_generation": ftg_a,
        "extinction_generation": ext_a,
        "size": size_a,
        "horizon_only": ho_a,
        "counts": counts_a,
    }


cdef int bd_run(uint64_t key, double lam, double rate, double t_end, int64_t cap, bint stop_tip,
                double* t_out, double* tip_out, int64_t* n_out, int64_t* ev_out,
                list times, list counts) except -1:
    cdef int64_t n = 1
    cdef double t = 0.0, dt, u, v
    cdef uint64_t ctr = 0
    cdef double first_tip = -1.0
    cdef int status
    cdef bint record = times is not None
    while True:
        u = unif(key, ctr)
        dt = -log1p(-u) / (<double>n * rate)
        if t + dt > t_end:
            status = BD_ALIVE
            break
        t += dt
        v = unif(key, ctr + 1)
        ctr += 2
        if v < lam:
            n += 1
        else:
            n -= 1
            if first_tip < 0.0:
                first_tip = t
        if record:
            times.append(t)
            counts.append(n)
        if n == 0:
            status = BD_EXTINCT
            break
        if n >= cap:
            status = BD_EXPLODED
            break
        if stop_tip and first_tip >= 0.0:
            status = BD_STOPPED
            break
    t_out[0] = t
    tip_out[0] = first_tip
    n_out[0] = n
    ev_out[0] = <int64_t>(ctr // 2)
    return status


def bd_path(key, double lam, double rate, double t_end, int64_t cap):
    cdef double t, tip
    cdef int64_t n, ev
    times = [0.0]
    counts = [1]
    status = bd_run(<uint64_t>key, lam, rate, t_end, cap, False, &t, &tip, &n, &ev, times, counts)
    return np.asarray(times, dtype=np.float64), np.asarray(counts, dtype=np.int64), status


def bd_batch(seed, int64_t first_replica, int64_t count, double lam, double rate, double t_end,
             int64_t cap, bint stop_tip):
    status_a = np.zeros(count, dtype=np.int8)
    time_a = np.zeros(count, dtype=np.float64)
    tip_a = np.zeros(count, dtype=np.float64)
    final_a = np.zeros(count, dtype=np.int64)
    ev_a = np.zeros(count, dtype=np.int64)
    cdef int8_t[::1] sv = status_a
    cdef double[::1] tv = time_a
    cdef double[::1] pv = tip_a
    cdef int64_t[::1] fv = final_a
    cdef int64_t[::1] ev = ev_a
    cdef uint64_t useed = <uint64_t>seed
    cdef int64_t r, n, e
    cdef double t, tip
    for r in range(count):
        sv[r] = <int8_t>bd_run(replica_key(useed, <uint64_t>(first_replica + r)), lam, rate, t_end,
                               cap, stop_tip, &t, &tip, &n, &e, None, None)
        tv[r] = t
        pv[r] = tip
        fv[r] = n
        ev[r] = e
    return {"status": status_a, "time": time_a, "first_tip": tip_a, "final_count": final_a,
            "events": ev_a}
