"""Pure-Python kernel backend.

Mirror of the compiled backend in ``_ckernels.pyx``.  The community
detection kernels (`local_move`, `refine`) are written so that, with
unit resolution, every modularity gain is an exactly representable
integer-valued float; the two backends then make identical decisions
and return identical partitions.  The numeric kernels (`jacobi_eigh`,
`lloyd`) agree with the compiled backend to rounding error.
"""

from collections import deque

import numpy as np

from ..rng import SplitMix64


def jacobi_eigh(a, pairs_p, pairs_q, offsets, rel_tol, max_sweeps):
    """Cyclic Jacobi eigensolver for a symmetric matrix.

    Rotations are applied one tournament round at a time: the pairs in
    a round are disjoint, so the row pass reads only round-start values
    and the column pass only row-updated values.  Returns unsorted
    eigenvalues, the eigenvector matrix (columns) and the sweep count.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n, dtype=np.float64)
    if n < 2:
        return np.diagonal(a).copy(), v, 0
    fro = float(np.sqrt((a * a).sum()))
    if fro == 0.0:
        return np.diagonal(a).copy(), v, 0
    tol = rel_tol * fro
    n_rounds = len(offsets) - 1
    offdiag = ~np.eye(n, dtype=bool)
    sweeps = 0
    for _ in range(max_sweeps):
        off2 = float((a[offdiag] ** 2).sum())
        if np.sqrt(off2) <= tol:
            break
        for r in range(n_rounds):
            p = pairs_p[offsets[r]:offsets[r + 1]]
            q = pairs_q[offsets[r]:offsets[r + 1]]
            app = a[p, p]
            aqq = a[q, q]
            apq = a[p, q]
            nz = apq != 0.0
            # a huge ratio overflows to inf and yields a harmless
            # identity rotation, matching the compiled backend
            with np.errstate(over="ignore", divide="ignore"):
                theta = (aqq - app) / np.where(nz, 2.0 * apq, 1.0)
                t = 1.0 / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t = np.where(theta >= 0.0, t, -t)
            t = np.where(nz, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            rp = a[p, :].copy()
            rq = a[q, :].copy()
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            cp = a[:, p].copy()
            cq = a[:, q].copy()
            a[:, p] = cp * c - cq * s
            a[:, q] = cp * s + cq * c
            vp = v[:, p].copy()
            vq = v[:, q].copy()
            v[:, p] = vp * c - vq * s
            v[:, q] = vp * s + vq * c
        sweeps += 1
    return np.diagonal(a).copy(), v, sweeps


def lloyd(x, c0, max_iter):
    """Lloyd iterations from given initial centroids.

    Ties in the assignment go to the lowest centroid index.  An empty
    cluster is repaired by stealing the point farthest from its own
    centroid (never emptying a singleton; ties to the lowest point
    index).  Returns final labels and the per-iteration inertia trace,
    measured after each centroid update.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    c = np.array(c0, dtype=np.float64)
    n = x.shape[0]
    k = c.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    hist = []
    for _ in range(max_iter):
        d2 = ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)
        new = d2.argmin(axis=1).astype(np.int64)
        assigned = d2[np.arange(n), new]
        counts = np.bincount(new, minlength=k)
        for e in range(k):
            if counts[e] != 0:
                continue
            best = -1
            bestd = -1.0
            for i in range(n):
                if counts[new[i]] <= 1:
                    continue
                if assigned[i] > bestd:
                    bestd = float(assigned[i])
                    best = i
            if best < 0:
                continue
            counts[new[best]] -= 1
            new[best] = e
            counts[e] = 1
            assigned[best] = 0.0
        for j in range(k):
            members = np.nonzero(new == j)[0]
            if members.size:
                c[j] = x[members].sum(axis=0) / members.size
        hist.append(float(((x - c[new]) ** 2).sum()))
        if np.array_equal(new, labels):
            break
        labels = new
    return labels, np.array(hist, dtype=np.float64)


def local_move(indptr, indices, weights, sigma, labels, m, gamma, seed):
    """Queue-driven greedy modularity moves over a CSR graph.

    Nodes are visited in a seeded shuffled order; a moved node's
    neighbors outside its new community are re-queued.  A move happens
    only on a strictly positive gain; equal-gain candidates resolve to
    the lowest community id, and a fresh empty community is taken only
    when strictly better than every existing candidate.  Gains are kept
    as 2*m^2 multiples so unit-resolution arithmetic is exact.
    """
    n = len(labels)
    iptr = indptr.tolist()
    nbrs = indices.tolist()
    w = weights.tolist()
    sig = sigma.tolist()
    lab = labels.tolist()
    two_m = 2.0 * m

    comm_sigma = [0.0] * (n + 1)
    comm_count = [0] * (n + 1)
    next_label = 0
    for v in range(n):
        c = lab[v]
        comm_sigma[c] += sig[v]
        comm_count[c] += 1
        if c >= next_label:
            next_label = c + 1
    free = []

    rng = SplitMix64(seed)
    order = list(range(n))
    rng.shuffle(order)
    queue = deque(order)
    in_q = [True] * n

    nbr_w = [0.0] * (n + 1)
    seen = [False] * (n + 1)
    touched = []
    moves = 0
    while queue:
        v = queue.popleft()
        in_q[v] = False
        a = lab[v]
        sv = sig[v]
        for e in range(iptr[v], iptr[v + 1]):
            u = nbrs[e]
            if u == v:
                # aggregated graphs carry self-loops; they move with the
                # node and must not count as links to the old community
                continue
            c = lab[u]
            if not seen[c]:
                seen[c] = True
                touched.append(c)
            nbr_w[c] += w[e]
        sa_rem = comm_sigma[a] - sv
        d_va = nbr_w[a]
        best_gain = 0.0
        best_c = a
        for c in touched:
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
                best_c = free.pop() if free else next_label
                if best_c == next_label:
                    next_label += 1
            comm_sigma[a] -= sv
            comm_count[a] -= 1
            if comm_count[a] == 0:
                free.append(a)
            comm_sigma[best_c] += sv
            comm_count[best_c] += 1
            lab[v] = best_c
            moves += 1
            for e in range(iptr[v], iptr[v + 1]):
                u = nbrs[e]
                if lab[u] != best_c and not in_q[u]:
                    queue.append(u)
                    in_q[u] = True
        for c in touched:
            nbr_w[c] = 0.0
            seen[c] = False
        touched.clear()
    return np.array(lab, dtype=np.int64), moves


def refine(indptr, indices, weights, sigma, coarse, m, gamma, seed):
    """Split each coarse community into connected refined groups.

    Starting from singletons, nodes are visited in a seeded shuffled
    order; a node still alone joins one of its strictly-improving
    edge-adjacent groups inside its own coarse community, chosen
    uniformly at random.  Returns refined labels (representative node
    ids, not contiguous).
    """
    n = len(coarse)
    iptr = indptr.tolist()
    nbrs = indices.tolist()
    w = weights.tolist()
    sig = sigma.tolist()
    coar = coarse.tolist()
    two_m = 2.0 * m

    ref = list(range(n))
    ref_sigma = sig[:]
    ref_count = [1] * n

    rng = SplitMix64(seed)
    order = list(range(n))
    rng.shuffle(order)

    nbr_w = [0.0] * n
    seen = [False] * n
    touched = []
    cands = []
    for v in order:
        if ref_count[ref[v]] != 1:
            continue
        cv = coar[v]
        for e in range(iptr[v], iptr[v + 1]):
            u = nbrs[e]
            if coar[u] != cv:
                continue
            r = ref[u]
            if not seen[r]:
                seen[r] = True
                touched.append(r)
            nbr_w[r] += w[e]
        sv = sig[v]
        for r in touched:
            if r == ref[v]:
                continue
            gain = two_m * nbr_w[r] - gamma * sv * ref_sigma[r]
            if gain > 0.0:
                cands.append(r)
        if cands:
            pick = cands[rng.next_below(len(cands))]
            ref_count[ref[v]] = 0
            ref[v] = pick
            ref_sigma[pick] += sv
            ref_count[pick] += 1
        for r in touched:
            nbr_w[r] = 0.0
            seen[r] = False
        touched.clear()
        cands.clear()
    return np.array(ref, dtype=np.int64)
