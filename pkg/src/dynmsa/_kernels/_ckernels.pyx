# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel backend; mirrors the semantics of ``_pykernels``.

The community kernels reproduce the pure backend decision-for-decision
(same splitmix64 streams, same tie rules, exact integer-valued gain
arithmetic at unit resolution).  The numeric kernels follow the same
rotation/update schedule and agree to rounding error.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()

ctypedef unsigned long long u64


cdef inline u64 _next_u64(u64* state) noexcept nogil:
    cdef u64 z
    state[0] = state[0] + <u64>0x9E3779B97F4A7C15ULL
    z = state[0]
    z = (z ^ (z >> 30)) * <u64>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <u64>0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline long _next_below(u64* state, long n) noexcept nogil:
    return <long>(_next_u64(state) % <u64>n)


cdef void _shuffle(u64* state, cnp.int64_t* items, long n) noexcept nogil:
    cdef long i, j
    cdef cnp.int64_t tmp
    for i in range(n - 1, 0, -1):
        j = _next_below(state, i + 1)
        tmp = items[i]
        items[i] = items[j]
        items[j] = tmp


def jacobi_eigh(object a_in, object pairs_p_in, object pairs_q_in,
                object offsets_in, double rel_tol, long max_sweeps):
    """Cyclic Jacobi eigensolver; see the pure backend for semantics."""
    cdef cnp.ndarray a_arr = np.array(a_in, dtype=np.float64, order="C")
    cdef double[:, ::1] a = a_arr
    cdef long n = a.shape[0]
    cdef cnp.ndarray v_arr = np.eye(n, dtype=np.float64)
    cdef double[:, ::1] v = v_arr
    if n < 2:
        return np.diagonal(a_arr).copy(), v_arr, 0
    cdef const cnp.int64_t[::1] pairs_p = np.ascontiguousarray(pairs_p_in, dtype=np.int64)
    cdef const cnp.int64_t[::1] pairs_q = np.ascontiguousarray(pairs_q_in, dtype=np.int64)
    cdef const cnp.int64_t[::1] offsets = np.ascontiguousarray(offsets_in, dtype=np.int64)
    cdef long n_rounds = offsets.shape[0] - 1
    cdef long max_pairs = 0, r
    for r in range(n_rounds):
        if offsets[r + 1] - offsets[r] > max_pairs:
            max_pairs = offsets[r + 1] - offsets[r]
    cdef double[::1] cbuf = np.empty(max_pairs, dtype=np.float64)
    cdef double[::1] sbuf = np.empty(max_pairs, dtype=np.float64)

    cdef double fro2 = 0.0, off2, tol, apq, theta, tt, cc, ss, rp, rq
    cdef long i, j, e, lo, hi, p, q, sweeps = 0
    for i in range(n):
        for j in range(n):
            fro2 += a[i, j] * a[i, j]
    if fro2 == 0.0:
        return np.diagonal(a_arr).copy(), v_arr, 0
    tol = rel_tol * sqrt(fro2)

    cdef long sweep
    for sweep in range(max_sweeps):
        off2 = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off2 += a[i, j] * a[i, j]
        if sqrt(off2) <= tol:
            break
        for r in range(n_rounds):
            lo = offsets[r]
            hi = offsets[r + 1]
            for e in range(lo, hi):
                p = pairs_p[e]
                q = pairs_q[e]
                apq = a[p, q]
                if apq == 0.0:
                    cbuf[e - lo] = 1.0
                    sbuf[e - lo] = 0.0
                else:
                    theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                    tt = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        tt = -tt
                    cc = 1.0 / sqrt(tt * tt + 1.0)
                    cbuf[e - lo] = cc
                    sbuf[e - lo] = tt * cc
            for e in range(lo, hi):
                p = pairs_p[e]
                q = pairs_q[e]
                cc = cbuf[e - lo]
                ss = sbuf[e - lo]
                for j in range(n):
                    rp = a[p, j]
                    rq = a[q, j]
                    a[p, j] = cc * rp - ss * rq
                    a[q, j] = ss * rp + cc * rq
            for e in range(lo, hi):
                p = pairs_p[e]
                q = pairs_q[e]
                cc = cbuf[e - lo]
                ss = sbuf[e - lo]
                for i in range(n):
                    rp = a[i, p]
                    rq = a[i, q]
                    a[i, p] = cc * rp - ss * rq
                    a[i, q] = ss * rp + cc * rq
            for e in range(lo, hi):
                p = pairs_p[e]
                q = pairs_q[e]
                cc = cbuf[e - lo]
                ss = sbuf[e - lo]
                for i in range(n):
                    rp = v[i, p]
                    rq = v[i, q]
                    v[i, p] = cc * rp - ss * rq
                    v[i, q] = ss * rp + cc * rq
        sweeps += 1
    return np.diagonal(a_arr).copy(), v_arr, sweeps


def lloyd(object x_in, object c0, long max_iter):
    """Lloyd iterations; see the pure backend for semantics."""
    cdef cnp.ndarray x_arr = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef const double[:, ::1] x = x_arr
    cdef cnp.ndarray c_arr = np.array(c0, dtype=np.float64, order="C")
    cdef double[:, ::1] c = c_arr
    cdef long n = x.shape[0], f = x.shape[1], k = c.shape[0]
    cdef cnp.ndarray labels_arr = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] labels = labels_arr
    cdef cnp.int64_t[::1] new = np.empty(n, dtype=np.int64)
    cdef double[::1] assigned = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[::1] counts = np.zeros(k, dtype=np.int64)
    cdef double[:, ::1] csum = np.zeros((k, f), dtype=np.float64)
    hist = []

    cdef long it, i, j, e, best_i, dim
    cdef double d, dd, bestd, inertia
    cdef bint same
    for it in range(max_iter):
        for i in range(n):
            best_i = 0
            bestd = 0.0
            for j in range(k):
                d = 0.0
                for dim in range(f):
                    dd = x[i, dim] - c[j, dim]
                    d += dd * dd
                if j == 0 or d < bestd:
                    bestd = d
                    best_i = j
            new[i] = best_i
            assigned[i] = bestd
        for j in range(k):
            counts[j] = 0
        for i in range(n):
            counts[new[i]] += 1
        for e in range(k):
            if counts[e] != 0:
                continue
            best_i = -1
            bestd = -1.0
            for i in range(n):
                if counts[new[i]] <= 1:
                    continue
                if assigned[i] > bestd:
                    bestd = assigned[i]
                    best_i = i
            if best_i < 0:
                continue
            counts[new[best_i]] -= 1
            new[best_i] = e
            counts[e] = 1
            assigned[best_i] = 0.0
        for j in range(k):
            for dim in range(f):
                csum[j, dim] = 0.0
        for i in range(n):
            for dim in range(f):
                csum[new[i], dim] += x[i, dim]
        for j in range(k):
            if counts[j] > 0:
                for dim in range(f):
                    c[j, dim] = csum[j, dim] / counts[j]
        inertia = 0.0
        for i in range(n):
            for dim in range(f):
                dd = x[i, dim] - c[new[i], dim]
                inertia += dd * dd
        hist.append(inertia)
        same = True
        for i in range(n):
            if new[i] != labels[i]:
                same = False
                break
        if same:
            break
        for i in range(n):
            labels[i] = new[i]
    return labels_arr, np.array(hist, dtype=np.float64)


def local_move(object indptr_in, object indices_in, object weights_in,
               object sigma_in, object labels_in, double m, double gamma,
               object seed):
    """Queue-driven greedy modularity moves; mirrors the pure backend."""
    cdef const cnp.int64_t[::1] iptr = np.ascontiguousarray(indptr_in, dtype=np.int64)
    cdef const cnp.int64_t[::1] nbrs = np.ascontiguousarray(indices_in, dtype=np.int64)
    cdef const double[::1] w = np.ascontiguousarray(weights_in, dtype=np.float64)
    cdef const double[::1] sig = np.ascontiguousarray(sigma_in, dtype=np.float64)
    cdef cnp.ndarray lab_arr = np.array(labels_in, dtype=np.int64)
    cdef cnp.int64_t[::1] lab = lab_arr
    cdef long n = lab.shape[0]
    cdef double two_m = 2.0 * m

    cdef double[::1] comm_sigma = np.zeros(n + 1, dtype=np.float64)
    cdef cnp.int64_t[::1] comm_count = np.zeros(n + 1, dtype=np.int64)
    cdef long next_label = 0, v, c, e, u
    for v in range(n):
        c = lab[v]
        comm_sigma[c] += sig[v]
        comm_count[c] += 1
        if c >= next_label:
            next_label = c + 1
    cdef cnp.int64_t[::1] free_stack = np.empty(n + 1, dtype=np.int64)
    cdef long free_top = 0

    cdef u64 state = <u64>(<object>seed & 0xFFFFFFFFFFFFFFFF)
    cdef cnp.ndarray order_arr = np.arange(n, dtype=np.int64)
    cdef cnp.int64_t[::1] order = order_arr
    if n > 0:
        _shuffle(&state, &order[0], n)

    # FIFO ring buffer; a node is enqueued at most once at a time
    cdef cnp.int64_t[::1] queue = np.empty(n + 1, dtype=np.int64)
    cdef long q_head = 0, q_tail = 0, q_len = 0, q_cap = n + 1
    cdef cnp.uint8_t[::1] in_q = np.zeros(n, dtype=np.uint8)
    for v in range(n):
        queue[q_tail] = order[v]
        q_tail = (q_tail + 1) % q_cap
        q_len += 1
        in_q[order[v]] = 1

    cdef double[::1] nbr_w = np.zeros(n + 1, dtype=np.float64)
    cdef cnp.uint8_t[::1] seen = np.zeros(n + 1, dtype=np.uint8)
    cdef cnp.int64_t[::1] touched = np.empty(n + 1, dtype=np.int64)
    cdef long n_touched = 0, t, a, best_c
    cdef double sv, sa_rem, d_va, best_gain, gain
    cdef long moves = 0

    while q_len > 0:
        v = queue[q_head]
        q_head = (q_head + 1) % q_cap
        q_len -= 1
        in_q[v] = 0
        a = lab[v]
        sv = sig[v]
        for e in range(iptr[v], iptr[v + 1]):
            u = nbrs[e]
            if u == v:
                # aggregated graphs carry self-loops; they move with the
                # node and must not count as links to the old community
                continue
            c = lab[u]
            if seen[c] == 0:
                seen[c] = 1
                touched[n_touched] = c
                n_touched += 1
            nbr_w[c] += w[e]
        sa_rem = comm_sigma[a] - sv
        d_va = nbr_w[a]
        best_gain = 0.0
        best_c = a
        for t in range(n_touched):
            c = touched[t]
            if c == a:
                continue
            gain = two_m * (nbr_w[c] - d_va) - gamma * sv * (comm_sigma[c] - sa_rem)
            if gain > best_gain or (gain == best_gain and gain > 0.0 and c < best_c):
                best_gain = gain
                best_c = c
        if comm_count[a] > 1:
            gain = gamma * sv * sa_rem - two_m * d_va
            if gain > best_gain:
                best_gain = gain
                best_c = -1
        if best_gain > 0.0 and best_c != a:
            if best_c < 0:
                if free_top > 0:
                    free_top -= 1
                    best_c = free_stack[free_top]
                else:
                    best_c = next_label
                    next_label += 1
            comm_sigma[a] -= sv
            comm_count[a] -= 1
            if comm_count[a] == 0:
                free_stack[free_top] = a
                free_top += 1
            comm_sigma[best_c] += sv
            comm_count[best_c] += 1
            lab[v] = best_c
            moves += 1
            for e in range(iptr[v], iptr[v + 1]):
                u = nbrs[e]
                if lab[u] != best_c and in_q[u] == 0:
                    queue[q_tail] = u
                    q_tail = (q_tail + 1) % q_cap
                    q_len += 1
                    in_q[u] = 1
        for t in range(n_touched):
            c = touched[t]
            nbr_w[c] = 0.0
            seen[c] = 0
        n_touched = 0
    return lab_arr, moves


def refine(object indptr_in, object indices_in, object weights_in,
           object sigma_in, object coarse_in, double m, double gamma,
           object seed):
    """Singleton-merge refinement; mirrors the pure backend."""
    cdef const cnp.int64_t[::1] iptr = np.ascontiguousarray(indptr_in, dtype=np.int64)
    cdef const cnp.int64_t[::1] nbrs = np.ascontiguousarray(indices_in, dtype=np.int64)
    cdef const double[::1] w = np.ascontiguousarray(weights_in, dtype=np.float64)
    cdef const double[::1] sig = np.ascontiguousarray(sigma_in, dtype=np.float64)
    cdef const cnp.int64_t[::1] coar = np.ascontiguousarray(coarse_in, dtype=np.int64)
    cdef long n = coar.shape[0]
    cdef double two_m = 2.0 * m

    cdef cnp.ndarray ref_arr = np.arange(n, dtype=np.int64)
    cdef cnp.int64_t[::1] ref = ref_arr
    cdef double[::1] ref_sigma = np.array(sigma_in, dtype=np.float64)
    cdef cnp.int64_t[::1] ref_count = np.ones(n, dtype=np.int64)

    cdef u64 state = <u64>(<object>seed & 0xFFFFFFFFFFFFFFFF)
    cdef cnp.ndarray order_arr = np.arange(n, dtype=np.int64)
    cdef cnp.int64_t[::1] order = order_arr
    if n > 0:
        _shuffle(&state, &order[0], n)

    cdef double[::1] nbr_w = np.zeros(n, dtype=np.float64)
    cdef cnp.uint8_t[::1] seen = np.zeros(n, dtype=np.uint8)
    cdef cnp.int64_t[::1] touched = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] cands = np.empty(n, dtype=np.int64)
    cdef long n_touched = 0, n_cands = 0
    cdef long idx, v, e, u, r, t, cv, pick, old
    cdef double sv, gain

    for idx in range(n):
        v = order[idx]
        if ref_count[ref[v]] != 1:
            continue
        cv = coar[v]
        for e in range(iptr[v], iptr[v + 1]):
            u = nbrs[e]
            if coar[u] != cv:
                continue
            r = ref[u]
            if seen[r] == 0:
                seen[r] = 1
                touched[n_touched] = r
                n_touched += 1
            nbr_w[r] += w[e]
        sv = sig[v]
        for t in range(n_touched):
            r = touched[t]
            if r == ref[v]:
                continue
            gain = two_m * nbr_w[r] - gamma * sv * ref_sigma[r]
            if gain > 0.0:
                cands[n_cands] = r
                n_cands += 1
        if n_cands > 0:
            pick = cands[_next_below(&state, n_cands)]
            old = ref[v]
            ref_count[old] = 0
            ref[v] = pick
            ref_sigma[pick] += sv
            ref_count[pick] += 1
        for t in range(n_touched):
            r = touched[t]
            nbr_w[r] = 0.0
            seen[r] = 0
        n_touched = 0
        n_cands = 0
    return ref_arr
