# cython: language_level=3
"""Compiled round loop; a line-by-line port of ``_pyloop.run_loop``.

Every floating point expression is evaluated in the same order as the numpy
reference (sequential sums, no fused multiply-add), and random draws come from
the same SplitMix64 streams, so the two backends agree bitwise.
"""

import numpy as np

cimport cython
from libc.math cimport fabs, isfinite, sqrt, NAN
from libc.stdint cimport int64_t, uint64_t
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy

cdef enum:
    M_SM = 0
    M_EF21P = 1
    M_MARINAP = 2

cdef enum:
    C_IDENTITY = 0
    C_TOPK = 1
    C_SAME_RANDK = 2
    C_IND_RANDK = 3
    C_PERMK = 4

cdef enum:
    S_FIXED = 0
    S_DECREASING = 1
    S_POLYAK_EF = 2
    S_POLYAK_MARINA = 3

cdef enum:
    ST_OK = 0
    ST_DIVERGED = 1
    ST_DEGENERATE = 2
    ST_DESYNC = 3
    ST_NOMEM = 4
    ST_ROWS = 5

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double INV53 = 1.0 / 9007199254740992.0


ctypedef struct Params:
    int method
    int comp
    int64_t k
    int64_t n
    int64_t d
    double shift
    double f_star
    int sched
    double factor
    double gamma_base
    double polyak_B
    double polyak_ratio
    bint average_weighted
    double p_full
    int64_t max_rounds
    double budget
    double dense_bits
    double sparse_bits
    int64_t log_every
    bint log_lyapunov
    double lyapunov_weight
    bint track_average
    bint verify_sync
    int64_t max_rows


ctypedef struct Rows:
    int64_t* rnd
    double* gamma
    double* f_w
    double* f_x
    double* bits
    double* lyap
    signed char* full
    double* avg


# -- random streams ---------------------------------------------------------

cdef inline uint64_t sm_next(uint64_t* state) noexcept nogil:
    state[0] += GOLDEN
    cdef uint64_t z = state[0]
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double sm_uniform(uint64_t* state) noexcept nogil:
    return <double>(sm_next(state) >> 11) * INV53


cdef inline int64_t sm_bounded(uint64_t* state, int64_t m) noexcept nogil:
    cdef int64_t j = <int64_t>(sm_uniform(state) * <double>m)
    if j > m - 1:
        j = m - 1
    return j


# -- linear algebra -----------------------------------------------------------

@cython.boundscheck(False)
@cython.wraparound(False)
cdef inline void matvec(const double* x, double s, double c, int64_t d, double* y) noexcept nogil:
    cdef int64_t j
    cdef double t
    for j in range(d):
        t = 2.0 * x[j]
        if j > 0:
            t = t - x[j - 1]
        if j < d - 1:
            t = t - x[j + 1]
        y[j] = s * t + c * x[j]


cdef inline double abs_sum(const double* y, int64_t d) noexcept nogil:
    cdef double acc = fabs(y[0])
    cdef int64_t j
    for j in range(1, d):
        acc = acc + fabs(y[j])
    return acc


cdef inline double sq_sum(const double* y, int64_t d) noexcept nogil:
    cdef double acc = y[0] * y[0]
    cdef int64_t j
    for j in range(1, d):
        acc = acc + y[j] * y[j]
    return acc


cdef inline double sq_dist(const double* a, const double* b, int64_t d) noexcept nogil:
    cdef double v = a[0] - b[0]
    cdef double acc = v * v
    cdef int64_t j
    for j in range(1, d):
        v = a[j] - b[j]
        acc = acc + v * v
    return acc


cdef double f_mean(const double* scales, double shift, const double* P, int64_t stride,
                   int64_t n, int64_t d, double* y) noexcept nogil:
    """(1/n) sum_i ||A_i P_i||_1; rows of P are ``stride`` apart (0 broadcasts one vector)."""
    cdef int64_t i
    cdef double acc = 0.0, fi
    for i in range(n):
        matvec(P + i * stride, scales[i], shift, d, y)
        fi = abs_sum(y, d)
        if i == 0:
            acc = fi
        else:
            acc = acc + fi
    return acc / <double>n


# -- TopK selection -----------------------------------------------------------

cdef double kth_smallest(double* a, int64_t d, int64_t r) noexcept nogil:
    """Value of rank ``r`` (0-based) in ascending order; reorders ``a``."""
    cdef int64_t lo = 0, hi = d - 1, i, j, mid
    cdef double pivot, tmp
    while lo < hi:
        mid = lo + (hi - lo) // 2
        # median of three moved to a[mid]
        if a[mid] < a[lo]:
            tmp = a[mid]; a[mid] = a[lo]; a[lo] = tmp
        if a[hi] < a[lo]:
            tmp = a[hi]; a[hi] = a[lo]; a[lo] = tmp
        if a[hi] < a[mid]:
            tmp = a[hi]; a[hi] = a[mid]; a[mid] = tmp
        pivot = a[mid]
        i = lo
        j = hi
        while i <= j:
            while a[i] < pivot:
                i += 1
            while a[j] > pivot:
                j -= 1
            if i <= j:
                tmp = a[i]; a[i] = a[j]; a[j] = tmp
                i += 1
                j -= 1
        if r <= j:
            hi = j
        elif r >= i:
            lo = i
        else:
            return a[r]
    return a[r]


# -- the loop -----------------------------------------------------------------

@cython.boundscheck(False)
@cython.wraparound(False)
@cython.cdivision(True)
cdef int loop(Params* p, const double* scales, const double* x_star,
              double* x, double* w, double* W, uint64_t server, uint64_t* wseeds,
              Rows* rows, int64_t* n_rows, int64_t* t_out, int64_t* status_round) noexcept nogil:
    cdef int64_t n = p.n, d = p.d, k = p.k
    cdef int64_t i, j, t = 0, r = 0, above, need, q, jj
    cdef int status = ST_OK
    cdef double bits = 0.0, f_eval, gap, gamma, nsq, msq, denom, weight, sumw = 0.0
    cdef double f_x, lyap, drift, avg, tau, a, scale
    cdef bint prev_full = False, x_finite = True, diverged, terminal, full
    cdef int64_t stride = 0 if p.method == M_SM else d
    cdef double* P

    cdef double* Y = <double*>malloc(n * d * sizeof(double))
    cdef double* G = <double*>malloc(n * d * sizeof(double))
    cdef double* gbar = <double*>malloc(d * sizeof(double))
    cdef double* xn = <double*>malloc(d * sizeof(double))
    cdef double* diff = <double*>malloc(d * sizeof(double))
    cdef double* absbuf = <double*>malloc(d * sizeof(double))
    cdef double* tmp = <double*>malloc(d * sizeof(double))
    cdef double* S = NULL
    cdef int64_t* perm = <int64_t*>malloc(d * sizeof(int64_t))
    if p.track_average:
        S = <double*>malloc(n * d * sizeof(double))
    if (Y == NULL or G == NULL or gbar == NULL or xn == NULL or diff == NULL or absbuf == NULL
            or tmp == NULL or perm == NULL or (p.track_average and S == NULL)):
        status = ST_NOMEM
    else:
        if p.track_average:
            for j in range(n * d):
                S[j] = 0.0

    while status == ST_OK:
        P = x if p.method == M_SM else W
        # objective at the evaluation points
        f_eval = 0.0
        for i in range(n):
            matvec(P + i * stride, scales[i], p.shift, d, Y + i * d)
            a = abs_sum(Y + i * d, d)
            f_eval = a if i == 0 else f_eval + a
        f_eval = f_eval / <double>n
        gap = f_eval - p.f_star
        diverged = not (isfinite(f_eval) and x_finite)

        gamma = NAN
        if not diverged:
            for i in range(n):
                for j in range(d):
                    tmp[j] = 1.0 if Y[i * d + j] >= 0 else -1.0
                matvec(tmp, scales[i], p.shift, d, G + i * d)
            for j in range(d):
                gbar[j] = G[j]
            for i in range(1, n):
                for j in range(d):
                    gbar[j] = gbar[j] + G[i * d + j]
            for j in range(d):
                gbar[j] = gbar[j] / <double>n

            if p.sched == S_FIXED:
                gamma = p.factor * p.gamma_base
            elif p.sched == S_DECREASING:
                gamma = p.factor * p.gamma_base / sqrt(<double>(t + 1))
            elif p.sched == S_POLYAK_EF:
                nsq = sq_sum(gbar, d)
                if gap <= 0.0:
                    gamma = 0.0
                elif nsq == 0.0:
                    status = ST_DEGENERATE
                else:
                    gamma = p.factor * gap / (p.polyak_B * nsq)
            else:
                nsq = sq_sum(gbar, d)
                msq = 0.0
                for i in range(n):
                    a = sq_sum(G + i * d, d)
                    msq = a if i == 0 else msq + a
                msq = msq / <double>n
                if gap <= 0.0:
                    gamma = 0.0
                elif nsq == 0.0:
                    status = ST_DEGENERATE
                else:
                    denom = nsq + 2.0 * sqrt(nsq) * sqrt(msq) * p.polyak_ratio
                    gamma = p.factor * gap / denom
            if status == ST_DEGENERATE:
                status_round[0] = t
                break
            diverged = not isfinite(gamma)

        if p.track_average and not diverged:
            weight = gamma if p.average_weighted else 1.0
            for i in range(n):
                for j in range(d):
                    S[i * d + j] = S[i * d + j] + weight * P[i * stride + j]
            sumw = sumw + weight

        terminal = diverged or t == p.max_rounds or bits >= p.budget
        if terminal or t % p.log_every == 0:
            if r >= p.max_rows:
                status = ST_ROWS
                break
            if p.method == M_SM:
                f_x = f_eval
            else:
                f_x = f_mean(scales, p.shift, x, 0, n, d, tmp)
            lyap = NAN
            if p.log_lyapunov:
                lyap = sq_dist(x, x_star, d)
                if p.lyapunov_weight != 0.0:
                    if p.method == M_EF21P:
                        drift = sq_dist(w, x, d)
                    else:
                        drift = 0.0
                        for i in range(n):
                            a = sq_dist(W + i * d, x, d)
                            drift = a if i == 0 else drift + a
                        drift = drift / <double>n
                    lyap = lyap + p.lyapunov_weight * drift
            avg = NAN
            if p.track_average and sumw > 0.0:
                # reuse Y as scratch for the averaged points
                for j in range(n * d):
                    Y[j] = S[j] / sumw
                avg = f_mean(scales, p.shift, Y, d, n, d, tmp) - p.f_star
            rows.rnd[r] = t
            rows.gamma[r] = gamma
            rows.f_w[r] = gap
            rows.f_x[r] = f_x - p.f_star
            rows.bits[r] = bits
            rows.lyap[r] = lyap
            rows.full[r] = 1 if prev_full else 0
            rows.avg[r] = avg
            r += 1
        if diverged:
            status = ST_DIVERGED
            status_round[0] = t
            break
        if terminal:
            break

        # server step and broadcast
        for j in range(d):
            xn[j] = x[j] - gamma * gbar[j]
        if p.method == M_SM:
            bits += p.dense_bits
            prev_full = True
        elif p.method == M_EF21P:
            if p.comp == C_IDENTITY:
                memcpy(w, xn, d * sizeof(double))
                for i in range(n):
                    memcpy(W + i * d, xn, d * sizeof(double))
                bits += p.dense_bits
                prev_full = True
            else:
                for j in range(d):
                    diff[j] = xn[j] - w[j]
                    absbuf[j] = fabs(diff[j])
                if k >= d:
                    for j in range(d):
                        w[j] = w[j] + diff[j]
                        for i in range(n):
                            W[i * d + j] = W[i * d + j] + diff[j]
                else:
                    tau = kth_smallest(absbuf, d, d - k)
                    above = 0
                    for j in range(d):
                        if fabs(diff[j]) > tau:
                            above += 1
                    need = k - above
                    for j in range(d):
                        a = fabs(diff[j])
                        if a > tau or (a == tau and need > 0):
                            if not a > tau:
                                need -= 1
                            w[j] = w[j] + diff[j]
                            for i in range(n):
                                W[i * d + j] = W[i * d + j] + diff[j]
                bits += p.sparse_bits
                prev_full = False
            if p.verify_sync:
                for i in range(n):
                    for j in range(d):
                        if W[i * d + j] != w[j]:
                            status = ST_DESYNC
                if status == ST_DESYNC:
                    status_round[0] = t + 1
                    break
        else:
            full = sm_uniform(&server) < p.p_full
            if full or p.comp == C_IDENTITY:
                for i in range(n):
                    memcpy(W + i * d, xn, d * sizeof(double))
                bits += p.dense_bits
            else:
                for j in range(d):
                    diff[j] = xn[j] - x[j]
                if p.comp == C_SAME_RANDK or p.comp == C_IND_RANDK:
                    scale = <double>d / <double>k
                    for i in range(n if p.comp == C_IND_RANDK else 1):
                        for j in range(d):
                            perm[j] = j
                        for jj in range(k):
                            if p.comp == C_IND_RANDK:
                                j = jj + sm_bounded(&wseeds[i], d - jj)
                            else:
                                j = jj + sm_bounded(&server, d - jj)
                            q = perm[jj]; perm[jj] = perm[j]; perm[j] = q
                        if p.comp == C_IND_RANDK:
                            for jj in range(k):
                                j = perm[jj]
                                W[i * d + j] = W[i * d + j] + scale * diff[j]
                        else:
                            for jj in range(k):
                                j = perm[jj]
                                a = scale * diff[j]
                                for q in range(n):
                                    W[q * d + j] = W[q * d + j] + a
                else:
                    for j in range(d):
                        perm[j] = j
                    for jj in range(d - 1, 0, -1):
                        j = sm_bounded(&server, jj + 1)
                        q = perm[jj]; perm[jj] = perm[j]; perm[j] = q
                    q = d // n
                    scale = <double>n
                    for i in range(n):
                        for jj in range(q * i, q * (i + 1)):
                            j = perm[jj]
                            W[i * d + j] = W[i * d + j] + scale * diff[j]
                bits += p.sparse_bits
            prev_full = full
            if p.verify_sync and full:
                for i in range(n):
                    for j in range(d):
                        if W[i * d + j] != xn[j]:
                            status = ST_DESYNC
                if status == ST_DESYNC:
                    status_round[0] = t + 1
                    break
        memcpy(x, xn, d * sizeof(double))
        x_finite = True
        for j in range(d):
            if not isfinite(x[j]):
                x_finite = False
                break
        t += 1

    free(Y); free(G); free(gbar); free(xn); free(diff); free(absbuf); free(tmp); free(perm)
    if S != NULL:
        free(S)
    n_rows[0] = r
    t_out[0] = t
    return status


def run_loop(s):
    cdef Params p
    p.method = s.method
    p.comp = s.comp
    p.k = s.k
    p.n = s.n
    p.d = s.d
    p.shift = s.shift
    p.f_star = s.f_star
    p.sched = s.sched
    p.factor = s.factor
    p.gamma_base = s.gamma_base
    p.polyak_B = s.polyak_B
    p.polyak_ratio = s.polyak_ratio
    p.average_weighted = s.average_weighted
    p.p_full = s.p_full
    p.max_rounds = s.max_rounds
    p.budget = s.budget
    p.dense_bits = s.dense_bits
    p.sparse_bits = s.sparse_bits
    p.log_every = s.log_every
    p.log_lyapunov = s.log_lyapunov
    p.lyapunov_weight = s.lyapunov_weight
    p.track_average = s.track_average
    p.verify_sync = s.verify_sync
    p.max_rows = s.max_rows

    cdef const double[::1] scales = np.ascontiguousarray(s.scales, dtype=np.float64)
    cdef const double[::1] x_star = np.ascontiguousarray(s.x_star, dtype=np.float64)
    x_arr = np.array(s.x0, dtype=np.float64)
    w_arr = np.array(s.x0, dtype=np.float64)
    W_arr = np.ascontiguousarray(np.tile(s.x0, (s.n, 1)), dtype=np.float64)
    seeds_arr = np.array(s.worker_seeds, dtype=np.uint64)
    cdef double[::1] x = x_arr
    cdef double[::1] w = w_arr
    cdef double[:, ::1] W = W_arr
    cdef uint64_t[::1] seeds = seeds_arr

    m = int(s.max_rows)
    out = {
        "round": np.zeros(m, dtype=np.int64),
        "gamma": np.zeros(m),
        "f_w": np.zeros(m),
        "f_x": np.zeros(m),
        "bits": np.zeros(m),
        "lyap": np.zeros(m),
        "full": np.zeros(m, dtype=np.int8),
        "avg": np.zeros(m),
    }
    cdef int64_t[::1] r_rnd = out["round"]
    cdef double[::1] r_gamma = out["gamma"]
    cdef double[::1] r_fw = out["f_w"]
    cdef double[::1] r_fx = out["f_x"]
    cdef double[::1] r_bits = out["bits"]
    cdef double[::1] r_lyap = out["lyap"]
    cdef signed char[::1] r_full = out["full"]
    cdef double[::1] r_avg = out["avg"]
    cdef Rows rows
    rows.rnd = &r_rnd[0]
    rows.gamma = &r_gamma[0]
    rows.f_w = &r_fw[0]
    rows.f_x = &r_fx[0]
    rows.bits = &r_bits[0]
    rows.lyap = &r_lyap[0]
    rows.full = &r_full[0]
    rows.avg = &r_avg[0]

    cdef int64_t n_rows = 0, t = 0, status_round = -1
    cdef uint64_t server = <uint64_t>int(s.server_seed)
    cdef int status
    with nogil:
        status = loop(&p, &scales[0], &x_star[0], &x[0], &w[0], &W[0, 0], server, &seeds[0],
                      &rows, &n_rows, &t, &status_round)
    if status == ST_NOMEM:
        raise MemoryError("kernel could not allocate its work buffers")
    if status == ST_ROWS:
        raise RuntimeError("metrics buffer overflow; max_rows was underestimated")
    for key in out:
        out[key] = out[key][:n_rows]
    out.update(
        rows=n_rows,
        status=status,
        status_round=status_round,
        t=t,
        x=x_arr,
        w=w_arr if s.method == M_EF21P else None,
        W=W_arr,
    )
    return out
