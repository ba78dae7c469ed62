"""Graph construction and seeded Leiden community detection.

The Leiden loop alternates a queue-driven local move phase, a
refinement phase that splits communities into connected pieces, and
graph aggregation, until one full pass improves modularity by less
than a fixed tolerance.  Quality is always tracked on the original
graph, so the result can never fall below the seed partition.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DataError
from .ingest import GICS_SECTORS
from .rmtclean import ThresholdGraphMatrix
from .rng import SplitMix64

log = logging.getLogger(__name__)

LEIDEN_MAX_OUTER = 100


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Graph:
    """Undirected unweighted graph in CSR form, nodes named by ticker."""

    tickers: tuple[str, ...]
    indptr: np.ndarray
    indices: np.ndarray
    degrees: np.ndarray
    m: int  # edge count

    @property
    def n(self) -> int:
        return len(self.tickers)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]


@dataclass(frozen=True)
class Partition:
    """Assignment of named nodes to contiguous cluster ids 0..k-1."""

    nodes: tuple[str, ...]
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (len(self.nodes),):
            raise ValueError("labels length does not match nodes")
        if len(self.nodes) == 0:
            raise ValueError("partition over an empty node set")
        k = int(labels.max()) + 1
        counts = np.bincount(labels, minlength=k)
        if labels.min() < 0 or (counts == 0).any():
            raise ValueError("labels must be contiguous 0..k-1 with no empty cluster")
        object.__setattr__(self, "labels", _readonly(labels))

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_clusters)

    def clusters(self) -> list[tuple[str, ...]]:
        """Members per cluster id, in node order."""
        out: list[list[str]] = [[] for _ in range(self.n_clusters)]
        for node, lab in zip(self.nodes, self.labels):
            out[lab].append(node)
        return [tuple(c) for c in out]

    def to_dict(self) -> dict[str, int]:
        return {node: int(lab) for node, lab in zip(self.nodes, self.labels)}


def relabel(labels: np.ndarray) -> np.ndarray:
    """Map labels to contiguous ids ordered by first appearance."""
    labels = np.asarray(labels, dtype=np.int64)
    out = np.empty_like(labels)
    mapping: dict[int, int] = {}
    for i, lab in enumerate(labels.tolist()):
        out[i] = mapping.setdefault(lab, len(mapping))
    return out


def singleton_partition(nodes: tuple[str, ...]) -> Partition:
    return Partition(nodes=tuple(nodes), labels=np.arange(len(nodes), dtype=np.int64))


def build_graph(t: ThresholdGraphMatrix) -> Graph:
    """CSR graph from a binary adjacency matrix."""
    a = np.asarray(t.matrix)
    if (a != a.T).any():
        raise ValueError("adjacency must be symmetric")
    if np.diagonal(a).any():
        raise ValueError("adjacency must have a zero diagonal")
    n = a.shape[0]
    indptr = np.zeros(n + 1, dtype=np.int64)
    counts = (a != 0).sum(axis=1).astype(np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = np.nonzero(a)[1].astype(np.int64)
    degrees = counts
    return Graph(
        tickers=t.tickers,
        indptr=_readonly(indptr),
        indices=_readonly(indices),
        degrees=_readonly(degrees),
        m=int(degrees.sum() // 2),
    )


def sector_seed(tickers: tuple[str, ...], sectors: dict[str, str]) -> Partition:
    """One cluster per sector present, in canonical GICS order."""
    for ticker in tickers:
        if ticker not in sectors:
            raise DataError(f"ticker {ticker} has no sector mapping")
    present = [s for s in GICS_SECTORS if s in {sectors[t] for t in tickers}]
    sector_id = {s: i for i, s in enumerate(present)}
    labels = np.array([sector_id[sectors[t]] for t in tickers], dtype=np.int64)
    return Partition(nodes=tuple(tickers), labels=labels)


def _modularity_csr(indptr, indices, weights, sigma, labels, m, gamma=1.0) -> float:
    if m <= 0:
        return 0.0
    # canonical numbering: equal partitions must give bitwise-equal Q,
    # and the degree-term accumulation order depends on the labeling
    labels = relabel(labels)
    u = np.repeat(np.arange(len(sigma)), np.diff(indptr))
    intra = float(weights[labels[u] == labels[indices]].sum())
    deg = np.bincount(labels, weights=sigma)
    two_m = 2.0 * m
    return intra / two_m - gamma * float(((deg / two_m) ** 2).sum())


def modularity(g: Graph, p: Partition) -> float:
    """Newman-Girvan modularity of a partition on an unweighted graph."""
    if p.nodes != g.tickers:
        raise ValueError("partition nodes do not match graph nodes")
    if g.m == 0:
        log.warning("modularity of an edgeless graph is defined as 0")
        return 0.0
    weights = np.ones(len(g.indices), dtype=np.float64)
    sigma = g.degrees.astype(np.float64)
    return _modularity_csr(g.indptr, g.indices, weights, sigma, p.labels, float(g.m))


def _aggregate(indptr, indices, weights, sigma, ref_contig, n_ref):
    """Collapse refined communities into single nodes; drop intra edges."""
    u = np.repeat(np.arange(len(sigma)), np.diff(indptr))
    ru = ref_contig[u]
    rv = ref_contig[indices]
    mask = ru != rv
    ru, rv, wv = ru[mask], rv[mask], weights[mask]
    order = np.lexsort((rv, ru))
    ru, rv, wv = ru[order], rv[order], wv[order]
    if len(ru):
        edge_key = ru * np.int64(n_ref) + rv
        boundary = np.empty(len(ru), dtype=bool)
        boundary[0] = True
        boundary[1:] = edge_key[1:] != edge_key[:-1]
        starts = np.nonzero(boundary)[0]
        agg_u = ru[starts]
        agg_v = rv[starts]
        agg_w = np.add.reduceat(wv, starts)
    else:
        agg_u = np.empty(0, dtype=np.int64)
        agg_v = np.empty(0, dtype=np.int64)
        agg_w = np.empty(0, dtype=np.float64)
    counts = np.bincount(agg_u, minlength=n_ref)
    new_indptr = np.zeros(n_ref + 1, dtype=np.int64)
    np.cumsum(counts, out=new_indptr[1:])
    new_sigma = np.bincount(ref_contig, weights=sigma, minlength=n_ref)
    return new_indptr, agg_v.astype(np.int64), agg_w.astype(np.float64), new_sigma


def leiden(g: Graph, seed_partition: Partition, resolution: float = 1.0,
           rng_seed: int = 0, restarts: int = 1,
           trace: list | None = None) -> Partition:
    """Seeded Leiden community detection.

    Runs until a structural fixed point: no single-node move improves
    modularity and refinement cannot merge anything, so each outer
    iteration strictly shrinks the aggregated graph.  Modularity at the
    configured resolution never decreases across outer iterations, and
    the result is never worse than the seed.

    With restarts > 1 the whole optimization reruns from deterministic
    random initial partitions (restart 0 always uses the caller's seed
    partition) and the highest-modularity result wins; ties keep the
    earliest run, so restarts=1 reproduces the single-run output
    exactly and the result never falls below the seed's modularity.

    ``trace``, when a list is passed, receives one tuple per run: that
    run's modularity sequence, the initial value followed by one entry
    per outer pass.  Diagnostic only.
    """
    if seed_partition.nodes != g.tickers:
        raise ValueError("seed partition nodes do not match graph nodes")
    if resolution <= 0.0:
        raise ValueError("resolution must be positive")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    n = g.n
    if g.m == 0:
        return Partition(nodes=g.tickers, labels=relabel(seed_partition.labels))

    m = float(g.m)
    seed_labels = relabel(seed_partition.labels)
    orig = (g.indptr, g.indices, np.ones(len(g.indices), dtype=np.float64),
            g.degrees.astype(np.float64))

    def q_of(labels_orig: np.ndarray) -> float:
        return _modularity_csr(orig[0], orig[1], orig[2], orig[3], labels_orig, m,
                               gamma=resolution)

    def one_run(run_seed: int, init_labels: np.ndarray) -> tuple[np.ndarray, float]:
        rng = SplitMix64(run_seed)
        indptr, indices = g.indptr, g.indices
        weights = np.ones(len(indices), dtype=np.float64)
        sigma = g.degrees.astype(np.float64)
        level_labels = init_labels
        node_to_level = np.arange(n, dtype=np.int64)
        q_prev = q_of(level_labels[node_to_level])
        run_trace = [q_prev] if trace is not None else None
        best = level_labels[node_to_level]
        for _ in range(LEIDEN_MAX_OUTER):
            level_labels, _moves = _kernels.local_move(
                indptr, indices, weights, sigma, level_labels, m, resolution,
                rng.next_u64(),
            )
            labels_orig = level_labels[node_to_level]
            q_now = q_of(labels_orig)
            if run_trace is not None:
                run_trace.append(q_now)
            if q_now < q_prev - 1e-9:
                raise AssertionError(
                    f"modularity decreased during local move ({q_prev} -> {q_now})"
                )
            best = labels_orig
            n_comms = len(np.unique(level_labels))
            # a zero-gain pass is not convergence: refinement may still
            # split communities that single-node moves cannot escape
            if n_comms == len(level_labels):
                q_prev = q_now
                break
            refined = _kernels.refine(
                indptr, indices, weights, sigma, level_labels, m, resolution,
                rng.next_u64(),
            )
            ref_contig = relabel(refined)
            n_ref = int(ref_contig.max()) + 1
            if n_ref == len(level_labels):
                q_prev = q_now
                break
            # coarse label of each aggregated node: refinement never crosses
            # community lines, so any member's label works
            first_member = np.full(n_ref, -1, dtype=np.int64)
            for v in range(len(ref_contig) - 1, -1, -1):
                first_member[ref_contig[v]] = v
            new_level_labels = relabel(level_labels[first_member])
            indptr, indices, weights, sigma = _aggregate(
                indptr, indices, weights, sigma, ref_contig, n_ref
            )
            node_to_level = ref_contig[node_to_level]
            level_labels = new_level_labels
            q_prev = q_now
        if trace is not None:
            trace.append(tuple(run_trace))
        return best, q_prev

    best_labels, best_q = one_run(rng_seed, seed_labels)
    for r in range(1, restarts):
        run_seed = (rng_seed + r) & 0xFFFFFFFFFFFFFFFF
        init_rng = SplitMix64(run_seed ^ 0xD1B54A32D192ED03)
        raw = np.fromiter((init_rng.next_below(n) for _ in range(n)),
                          dtype=np.int64, count=n)
        labels_r, q_r = one_run(run_seed, relabel(raw))
        if q_r > best_q:
            best_labels, best_q = labels_r, q_r
    return Partition(nodes=g.tickers, labels=relabel(best_labels))
