# Compiled slot loop. Must stay in lockstep with the Python object model:
# same branch order, same RNG draws, same libm calls.
import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport exp, floor, log, log1p
from libc.stdint cimport int64_t
from libc.stdlib cimport free, malloc
from numpy.random cimport bitgen_t

cnp.import_array()

cdef double E_CONST = 2.718281828459045

# scheduler codes follow engine.SCHEDULERS
cdef enum:
    S_DIST = 0
    S_CENTRAL = 1
    S_RR = 2
    S_LQF = 3
    S_OQ = 5

# ISA branch codes
cdef enum:
    C_B = 1
    C_C = 2
    C_D = 3
    C_E = 4
    C_F = 5
    C_G = 6


cdef struct Fifo:
    int64_t* buf
    Py_ssize_t cap
    Py_ssize_t head
    Py_ssize_t size


cdef int fifo_push(Fifo* q, int64_t v) noexcept:
    cdef Py_ssize_t k, newcap
    cdef int64_t* nb
    if q.size == q.cap:
        newcap = q.cap * 2 if q.cap > 0 else 4
        nb = <int64_t*>malloc(newcap * sizeof(int64_t))
        if nb == NULL:
            return -1
        for k in range(q.size):
            nb[k] = q.buf[(q.head + k) % q.cap]
        free(q.buf)
        q.buf = nb
        q.cap = newcap
        q.head = 0
    q.buf[(q.head + q.size) % q.cap] = v
    q.size += 1
    return 0


cdef inline int64_t fifo_pop(Fifo* q) noexcept:
    cdef int64_t v = q.buf[q.head]
    q.head = (q.head + 1) % q.cap
    q.size -= 1
    return v


cdef inline double f_scalar(double x) noexcept:
    cdef double lg = log1p(x)
    return lg / log(E_CONST + lg)


cdef double f_inverse(double y) noexcept:
    cdef double lo = 0.0, hi = 1.0, mid
    cdef int it
    if y <= 0.0:
        return 0.0
    while f_scalar(hi) < y:
        lo = hi
        hi = hi * 2.0
    for it in range(400):
        if hi - lo <= 1e-10 * hi:
            break
        mid = 0.5 * (lo + hi)
        if f_scalar(mid) < y:
            lo = mid
        else:
            hi = mid
    return hi


cdef inline double logistic(double w) noexcept:
    cdef double ew
    if w >= 0:
        return 1.0 / (1.0 + exp(-w))
    ew = exp(w)
    return ew / (1.0 + ew)


cdef inline Py_ssize_t search_right(double* cdf, Py_ssize_t m, double u) noexcept:
    # index of the first entry strictly greater than u
    cdef Py_ssize_t lo = 0, hi = m, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if cdf[mid] <= u:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef bitgen_t* _bitgen(gen) except NULL:
    return <bitgen_t*>PyCapsule_GetPointer(gen.bit_generator.capsule, "BitGenerator")


cdef class _Walk:
    """Plain-changes walk, identical to hamiltonian.HamiltonianWalk."""
    cdef int n
    cdef int64_t[::1] perm
    cdef int64_t[::1] c
    cdef int64_t[::1] o

    def __init__(self, int n):
        self.n = n
        self.reset()

    cdef void reset(self) noexcept:
        cdef int k
        self.perm = np.arange(self.n, dtype=np.int64)
        self.c = np.zeros(self.n + 1, dtype=np.int64)
        self.o = np.ones(self.n + 1, dtype=np.int64)

    cdef void advance(self) noexcept:
        cdef int64_t j = self.n, s = 0, q, x, y, t
        while True:
            q = self.c[j] + self.o[j]
            if q < 0:
                self.o[j] = -self.o[j]
                j -= 1
                continue
            if q == j:
                if j == 1:
                    self.reset()
                    return
                s += 1
                self.o[j] = -self.o[j]
                j -= 1
                continue
            x = j - self.c[j] + s - 1
            y = j - q + s - 1
            t = self.perm[x]
            self.perm[x] = self.perm[y]
            self.perm[y] = t
            self.c[j] = q
            return


cdef void draw_perm(int mode, _Walk walk, bitgen_t* rng, int n, int64_t* out) noexcept:
    cdef int k, r, t
    cdef int64_t tmp
    if mode == 0:
        for k in range(n):
            out[k] = walk.perm[k]
        walk.advance()
        return
    for k in range(n):
        out[k] = k
    t = 0
    for k in range(n - 1, 0, -1):
        r = <int>(rng.next_double(rng.state) * (k + 1))
        tmp = out[k]
        out[k] = out[r]
        out[r] = tmp
        t += 1


cdef inline int rr_scan(int64_t* ptr, int n, char* eligible) noexcept:
    cdef int step, k
    for step in range(n):
        k = (ptr[0] + step) % n
        if eligible[k]:
            ptr[0] = (k + 1) % n
            return k
    return -1


def run(int n, int cap, int sched, int arrival, double[:, ::1] rates,
        double[::1] pcdf, double[:, ::1] dcdf, double[::1] off_mean, int64_t l_max,
        int h_mode, int qmax_mode, double epsilon, int64_t slots, int64_t warmup,
        int batches, int windows, int64_t prefill, bint shadow, bint record,
        g_traffic, g_coins, g_h):
    cdef bitgen_t* rt = _bitgen(g_traffic)
    cdef bitgen_t* rc = _bitgen(g_coins)
    cdef bitgen_t* rh = _bitgen(g_h)
    cdef int nn = n * n
    cdef bint disquo = sched == S_DIST or sched == S_CENTRAL
    cdef bint is_oq = sched == S_OQ

    cdef int64_t[:, ::1] Q = np.zeros((n, n), dtype=np.int64)
    cdef int64_t[:, ::1] B = np.zeros((n, n), dtype=np.int64)
    cdef int64_t[::1] h = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] hn = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] hinv = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] hninv = np.zeros(n, dtype=np.int64)
    cdef double[::1] coins = np.zeros(n)
    cdef int64_t[::1] s_in = np.zeros(n, dtype=np.int64)    # input -> output or -1
    cdef int64_t[::1] s_out = np.zeros(n, dtype=np.int64)   # output -> input or -1
    cdef int64_t[::1] in_ptr = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] out_ptr = np.zeros(n, dtype=np.int64)
    cdef char[::1] elig = np.zeros(n, dtype=np.int8)
    # schedule: central chain or the distributed input/output views
    cdef int64_t[::1] row_on = np.full(n, -1, dtype=np.int64)
    cdef int64_t[::1] col_on = np.full(n, -1, dtype=np.int64)
    cdef int64_t[::1] sh_row = np.full(n, -1, dtype=np.int64)
    cdef int64_t[::1] sh_col = np.full(n, -1, dtype=np.int64)
    cdef char[::1] silent = np.zeros(n, dtype=np.int8)
    cdef char[::1] unprobed = np.zeros(n, dtype=np.int8)
    cdef char[::1] prev_rows = np.zeros(n, dtype=np.int8)
    cdef char[::1] prev_cols = np.zeros(n, dtype=np.int8)
    cdef char[::1] cur_rows = np.zeros(n, dtype=np.int8)
    cdef char[::1] cur_cols = np.zeros(n, dtype=np.int8)
    cdef double[::1] wrow = np.zeros(n)
    cdef int64_t[::1] last_rep = np.zeros(n, dtype=np.int64)
    # bursty sources
    cdef int64_t[::1] on_left = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] off_left = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] dest = np.zeros(n, dtype=np.int64)
    cdef char[::1] loaded = (np.asarray(rates).sum(axis=1) > 0).astype(np.int8)
    cdef Py_ssize_t pm = pcdf.shape[0]
    # statistics
    cdef int64_t[::1] delay_sum = np.zeros(batches, dtype=np.int64)
    cdef int64_t[::1] delay_count = np.zeros(batches, dtype=np.int64)
    cdef int64_t[::1] win_sum = np.zeros(windows, dtype=np.int64)
    cdef int64_t[::1] win_len = np.zeros(windows, dtype=np.int64)
    cdef int64_t[::1] div = np.zeros(3, dtype=np.int64)
    cdef int64_t[::1] tr_backlog, tr_arr, tr_dep
    tr_np = None
    if record:
        tr_np = {key: np.zeros(slots, dtype=np.int64) for key in ("backlog", "arrivals", "departures")}
        tr_backlog = tr_np["backlog"]
        tr_arr = tr_np["arrivals"]
        tr_dep = tr_np["departures"]

    cdef _Walk walk = _Walk(n)
    cdef Fifo* voq = <Fifo*>malloc(nn * sizeof(Fifo))
    cdef Fifo* xb = <Fifo*>malloc(nn * sizeof(Fifo))
    cdef Fifo* oqf = <Fifo*>malloc(n * sizeof(Fifo))
    if voq == NULL or xb == NULL or oqf == NULL:
        free(voq); free(xb); free(oqf)
        raise MemoryError()
    cdef int i, j, d, a, e, k, best, br
    cdef int64_t slot, t, stamp, cnt, backlog, n_arr, n_dep, dsum, qm, fkey = -1, bestq
    cdef int64_t arr_m = 0, dep_m = 0, arr_tot = 0, dep_tot = 0, unclassified = 0
    cdef int64_t mismatch_slots = 0, first_mismatch = -1
    cdef int64_t measured = slots - warmup
    qm = 0
    cdef double floor_w = 0.0, p, u, w, mean
    cdef bint xh, upd, new, on_h, mism
    for k in range(nn):
        voq[k].buf = NULL; voq[k].cap = 0; voq[k].head = 0; voq[k].size = 0
        xb[k].buf = NULL; xb[k].cap = 0; xb[k].head = 0; xb[k].size = 0
    for k in range(n):
        oqf[k].buf = NULL; oqf[k].cap = 0; oqf[k].head = 0; oqf[k].size = 0

    try:
        for i in range(n):
            for j in range(n):
                for t in range(prefill):
                    if is_oq:
                        if fifo_push(&oqf[j], -1) < 0:
                            raise MemoryError()
                    else:
                        if fifo_push(&voq[i * n + j], -1) < 0:
                            raise MemoryError()
                if not is_oq:
                    Q[i, j] = prefill
        if disquo:
            draw_perm(h_mode, walk, rh, n, &h[0])
            draw_perm(h_mode, walk, rh, n, &hn[0])

        for slot in range(slots):
            # phase I
            if disquo:
                for i in range(n):
                    hinv[h[i]] = i
                    hninv[hn[i]] = i
                for i in range(n):
                    coins[i] = rc.next_double(rc.state)
                if qmax_mode == 1:
                    qm = 0
                    for k in range(nn):
                        if Q[k // n, k % n] > qm:
                            qm = Q[k // n, k % n]
                elif qmax_mode == 2:
                    i = slot % n
                    bestq = Q[i, 0]
                    for j in range(1, n):
                        if Q[i, j] > bestq:
                            bestq = Q[i, j]
                    last_rep[i] = bestq
                    qm = 0
                    for k in range(n):
                        if last_rep[k] > qm:
                            qm = last_rep[k]
                if qmax_mode != 0 and qm != fkey:
                    fkey = qm
                    floor_w = f_inverse(epsilon / (2.0 * n * n) * f_scalar(<double>qm))
                for i in range(n):
                    u = <double>Q[i, h[i]]
                    wrow[i] = f_scalar(floor_w if floor_w > u else u)

            # phase II
            for i in range(n):
                s_in[i] = -1
            if sched == S_CENTRAL or (sched == S_DIST and shadow):
                if sched == S_CENTRAL:
                    _glauber(n, &h[0], &wrow[0], &coins[0], &row_on[0], &col_on[0])
                else:
                    _glauber(n, &h[0], &wrow[0], &coins[0], &sh_row[0], &sh_col[0])
            if sched == S_CENTRAL:
                for i in range(n):
                    a = row_on[i]
                    if a >= 0:
                        if Q[i, a] > 0 and B[i, a] < cap:
                            s_in[i] = a
                        continue
                    for j in range(n):
                        elig[j] = Q[i, j] > 0 and B[i, j] < cap
                    if elig[hn[i]]:
                        s_in[i] = hn[i]
                    else:
                        s_in[i] = rr_scan(&in_ptr[i], n, &elig[0])
            elif sched == S_DIST:
                for i in range(n):
                    d = h[i]
                    a = row_on[i]
                    p = logistic(wrow[i])
                    if a >= 0 and a != d:
                        br = C_D
                    elif a == d:
                        if coins[i] < p:
                            br = C_B
                        else:
                            br = C_C
                            a = -1
                    elif B[i, d] == 0:
                        if coins[i] < p:
                            br = C_E
                            a = d
                        else:
                            br = C_F
                    else:
                        br = C_G
                    if a >= 0:
                        if Q[i, a] > 0 and B[i, a] == 0:
                            s_in[i] = a
                    else:
                        e = hn[i]
                        if e != d and B[i, e] == 0 and Q[i, e] > 0:
                            s_in[i] = e
                        else:
                            for j in range(n):
                                elig[j] = j != d and Q[i, j] > 0 and B[i, j] == 0
                            s_in[i] = rr_scan(&in_ptr[i], n, &elig[0])
                    unprobed[i] = br == C_E and col_on[d] != -1 and col_on[d] != i
                    silent[i] = (br == C_B or br == C_E) and s_in[i] != d
                    row_on[i] = a
            elif sched == S_RR or sched == S_LQF:
                for i in range(n):
                    best = -1
                    bestq = -1
                    for j in range(n):
                        elig[j] = Q[i, j] > 0 and B[i, j] < cap
                        if elig[j] and Q[i, j] > bestq:
                            bestq = Q[i, j]
                            best = j
                    if best < 0:
                        continue
                    if sched == S_RR:
                        s_in[i] = rr_scan(&in_ptr[i], n, &elig[0])
                    else:
                        s_in[i] = best

            if not is_oq:
                for i in range(n):
                    j = s_in[i]
                    if j >= 0:
                        k = i * n + j
                        if fifo_push(&xb[k], fifo_pop(&voq[k])) < 0:
                            raise MemoryError()
                        Q[i, j] -= 1
                        B[i, j] += 1

            # phase III
            for j in range(n):
                s_out[j] = -1
            if sched == S_CENTRAL:
                for j in range(n):
                    a = col_on[j]
                    if a >= 0:
                        if B[a, j] > 0:
                            s_out[j] = a
                        continue
                    for i in range(n):
                        elig[i] = B[i, j] > 0
                    if elig[hninv[j]]:
                        s_out[j] = hninv[j]
                    else:
                        s_out[j] = rr_scan(&out_ptr[j], n, &elig[0])
            elif sched == S_DIST:
                for j in range(n):
                    e = hinv[j]
                    a = col_on[j]
                    if a >= 0 and a != e:
                        pass
                    elif a == e:
                        if s_in[e] != j:
                            a = -1
                    elif s_in[e] == j:
                        a = e
                    if a >= 0:
                        if B[a, j] > 0:
                            s_out[j] = a
                    else:
                        if B[hninv[j], j] > 0:
                            s_out[j] = hninv[j]
                        else:
                            for i in range(n):
                                elig[i] = B[i, j] > 0
                            s_out[j] = rr_scan(&out_ptr[j], n, &elig[0])
                    col_on[j] = a
                # consistency audit of the two views
                for k in range(n):
                    cur_rows[k] = 0
                    cur_cols[k] = 0
                for i in range(n):
                    j = row_on[i]
                    if j >= 0 and col_on[j] != i:
                        _classify(i, j, &h[0], &silent[0], &unprobed[0], &prev_rows[0],
                                  &prev_cols[0], &div[0], &unclassified)
                        cur_rows[i] = 1
                        cur_cols[j] = 1
                for j in range(n):
                    i = col_on[j]
                    if i >= 0 and row_on[i] != j:
                        _classify(i, j, &h[0], &silent[0], &unprobed[0], &prev_rows[0],
                                  &prev_cols[0], &div[0], &unclassified)
                        cur_rows[i] = 1
                        cur_cols[j] = 1
                for k in range(n):
                    prev_rows[k] = cur_rows[k]
                    prev_cols[k] = cur_cols[k]
                if shadow:
                    mism = False
                    for k in range(n):
                        if row_on[k] != sh_row[k] or col_on[k] != sh_col[k]:
                            mism = True
                    if mism:
                        mismatch_slots += 1
                        if first_mismatch < 0:
                            first_mismatch = slot
            elif sched == S_RR or sched == S_LQF:
                for j in range(n):
                    for i in range(n):
                        elig[i] = B[i, j] > 0
                    s_out[j] = rr_scan(&out_ptr[j], n, &elig[0])

            n_dep = 0
            dsum = 0
            if is_oq:
                for j in range(n):
                    if oqf[j].size > 0:
                        dsum += slot - fifo_pop(&oqf[j])
                        n_dep += 1
            else:
                for j in range(n):
                    i = s_out[j]
                    if i >= 0:
                        dsum += slot - fifo_pop(&xb[i * n + j])
                        B[i, j] -= 1
                        n_dep += 1

            # arrivals
            n_arr = 0
            if arrival == 0:
                for i in range(n):
                    for j in range(n):
                        if rt.next_double(rt.state) < rates[i, j]:
                            n_arr += 1
                            if _arrive(is_oq, i, j, n, slot, voq, oqf, Q) < 0:
                                raise MemoryError()
            else:
                for i in range(n):
                    if not loaded[i]:
                        continue
                    if on_left[i] == 0 and off_left[i] == 0:
                        u = rt.next_double(rt.state)
                        mean = off_mean[i]
                        if mean <= 0.0:
                            off_left[i] = 0
                        else:
                            off_left[i] = <int64_t>floor(log1p(-u) / log(mean / (1.0 + mean)))
                        u = rt.next_double(rt.state)
                        k = search_right(&pcdf[0], pm, u)
                        on_left[i] = (k if k < l_max - 1 else l_max - 1) + 1
                        u = rt.next_double(rt.state)
                        dest[i] = search_right(&dcdf[i, 0], n, u)
                    if off_left[i] > 0:
                        off_left[i] -= 1
                    else:
                        n_arr += 1
                        if _arrive(is_oq, i, dest[i], n, slot, voq, oqf, Q) < 0:
                            raise MemoryError()
                        on_left[i] -= 1

            backlog = 0
            if is_oq:
                for j in range(n):
                    backlog += oqf[j].size
            else:
                for k in range(nn):
                    backlog += Q[k // n, k % n] + B[k // n, k % n]
            arr_tot += n_arr
            dep_tot += n_dep
            if record:
                tr_backlog[slot] = backlog
                tr_arr[slot] = n_arr
                tr_dep[slot] = n_dep
            if slot >= warmup:
                t = slot - warmup
                arr_m += n_arr
                dep_m += n_dep
                k = t * batches // measured
                delay_sum[k] += dsum
                delay_count[k] += n_dep
                k = t * windows // measured
                win_sum[k] += backlog
                win_len[k] += 1

            if disquo:
                for i in range(n):
                    h[i] = hn[i]
                draw_perm(h_mode, walk, rh, n, &hn[0])

        final_x = np.zeros((n, n), dtype=np.int64)
        if disquo:
            for i in range(n):
                if row_on[i] >= 0:
                    final_x[i, row_on[i]] = 1
        final_backlog = 0
        if is_oq:
            for j in range(n):
                final_backlog += oqf[j].size
        else:
            final_backlog = int(np.asarray(Q).sum() + np.asarray(B).sum())
        return dict(
            arrivals=int(arr_m),
            departures=int(dep_m),
            delay_sum=np.asarray(delay_sum),
            delay_count=np.asarray(delay_count),
            window_backlog=np.asarray(win_sum) / np.asarray(win_len),
            total_arrivals=int(arr_tot),
            total_departures=int(dep_tot),
            prefilled=int(prefill * nn),
            final_backlog=int(final_backlog),
            final_queues=np.asarray(Q).copy(),
            final_xbuf=np.asarray(B).copy(),
            final_schedule=final_x,
            divergences=np.asarray(div).copy(),
            unclassified=int(unclassified),
            mismatch_slots=int(mismatch_slots),
            first_mismatch=int(first_mismatch),
            trace=tr_np,
        )
    finally:
        for k in range(nn):
            free(voq[k].buf)
            free(xb[k].buf)
        for k in range(n):
            free(oqf[k].buf)
        free(voq)
        free(xb)
        free(oqf)


cdef inline int _arrive(bint is_oq, int i, int j, int n, int64_t slot, Fifo* voq, Fifo* oqf,
                        int64_t[:, ::1] Q) noexcept:
    if is_oq:
        return fifo_push(&oqf[j], slot)
    Q[i, j] += 1
    return fifo_push(&voq[i * n + j], slot)


cdef void _glauber(int n, int64_t* h, double* w, double* coins, int64_t* row_on,
                   int64_t* col_on) noexcept:
    # pairs named by a permutation share no row or column, so updating them in
    # sequence equals the simultaneous update
    cdef int i, d
    cdef bint xh, upd, new
    for i in range(n):
        d = h[i]
        xh = row_on[i] == d
        upd = xh or (row_on[i] < 0 and col_on[d] < 0)
        new = upd and coins[i] < logistic(w[i])
        if xh and not new:
            row_on[i] = -1
            col_on[d] = -1
        elif new and not xh:
            row_on[i] = d
            col_on[d] = i


cdef void _classify(int i, int j, int64_t* h, char* silent, char* unprobed, char* prev_rows,
                    char* prev_cols, int64_t* div, int64_t* unclassified) noexcept:
    cdef bint on_h = h[i] == j
    if on_h and unprobed[i]:
        div[0] += 1
    elif on_h and silent[i]:
        div[1] += 1
    elif prev_rows[i] or prev_cols[j]:
        div[2] += 1
    else:
        unclassified[0] += 1
