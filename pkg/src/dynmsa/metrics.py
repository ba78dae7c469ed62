"""Cluster quality metrics, partition agreement, and co-clustering.

The central quantity is the separation objective: mean within-cluster
correlation minus mean between-cluster correlation, where each cluster
(or cluster pair) contributes the unweighted mean of its unique stock
pairs and clusters contribute equally regardless of size.
"""

import math
from dataclasses import dataclass

import numpy as np

from .community import Partition
from .ingest import GICS_SECTORS


@dataclass(frozen=True)
class ClusterQuality:
    """Per-window clustering summary."""

    rho_intra: float
    rho_inter: float
    objective: float
    modularity: float
    n_clusters: int


@dataclass(frozen=True)
class CrossSectorRecord:
    """Co-clustering strength of one stock split by sector agreement."""

    ticker: str
    sector: str
    s_cross: float
    s_same: float
    s_total: float
    s_most: float
    p_cross: float
    p_most: float
    most_connected_sector: str | None
    flagged: bool


@dataclass(frozen=True)
class CoClusterMatrix:
    """Pairwise same-cluster frequencies across windows.

    ``p[i, j]`` is the fraction of windows containing both tickers in
    which they shared a cluster; NaN when they were never co-present.
    """

    tickers: tuple[str, ...]
    p: np.ndarray
    present: np.ndarray
    window_count: int


def _aligned_labels(p: Partition, tickers: tuple[str, ...]) -> np.ndarray:
    mapping = p.to_dict()
    missing = [t for t in tickers if t not in mapping]
    if missing:
        raise ValueError(f"partition is missing tickers: {', '.join(missing[:5])}")
    return np.array([mapping[t] for t in tickers], dtype=np.int64)


def _pair_sums(matrix: np.ndarray, labels: np.ndarray):
    """Within- and between-cluster pair sums via the indicator matrix."""
    k = int(labels.max()) + 1
    ind = np.zeros((len(labels), k), dtype=np.float64)
    ind[np.arange(len(labels)), labels] = 1.0
    block = ind.T @ matrix @ ind
    sizes = ind.sum(axis=0)
    return block, sizes


def intra_corr(p: Partition, corr) -> float:
    """Mean within-cluster correlation (clusters weighted equally).

    Each cluster of size >= 2 contributes the mean over its unique
    stock pairs; singleton clusters are skipped.
    """
    labels = _aligned_labels(p, corr.tickers)
    block, sizes = _pair_sums(corr.matrix, labels)
    big = sizes >= 2
    if not big.any():
        raise ValueError("every cluster is a singleton; intra correlation undefined")
    diag = np.diagonal(block)[big]
    n = sizes[big]
    cluster_means = (diag - n) / (n * (n - 1.0))
    return float(cluster_means.mean())


def inter_corr(p: Partition, corr) -> float:
    """Mean between-cluster correlation over unique cluster pairs."""
    labels = _aligned_labels(p, corr.tickers)
    block, sizes = _pair_sums(corr.matrix, labels)
    k = len(sizes)
    if k < 2:
        raise ValueError("need at least two clusters for inter correlation")
    iu, ju = np.triu_indices(k, 1)
    pair_means = block[iu, ju] / (sizes[iu] * sizes[ju])
    return float(pair_means.mean())


def objective(p: Partition, corr) -> float:
    """Separation objective: intra_corr - inter_corr."""
    return intra_corr(p, corr) - inter_corr(p, corr)


def ari(p1: Partition, p2: Partition) -> float:
    """Adjusted Rand index between two partitions.

    Computed on the intersection of the node sets; fewer than two
    common nodes is an error.  Identical partitions score 1 even in
    the degenerate all-singleton / single-cluster cases.
    """
    in_p2 = set(p2.nodes)
    common = [t for t in p1.nodes if t in in_p2]
    if len(common) < 2:
        raise ValueError("partitions share fewer than two nodes")
    a = _aligned_labels(p1, tuple(common))
    b = _aligned_labels(p2, tuple(common))
    ka = int(a.max()) + 1
    kb = int(b.max()) + 1
    table = np.zeros((ka, kb), dtype=np.int64)
    np.add.at(table, (a, b), 1)

    def comb2(x):
        return x * (x - 1) // 2

    index = int(comb2(table).sum())
    sum_a = int(comb2(table.sum(axis=1)).sum())
    sum_b = int(comb2(table.sum(axis=0)).sum())
    total = comb2(len(common))
    expected = sum_a * sum_b / total
    maximum = (sum_a + sum_b) / 2.0
    if maximum == expected:
        return 1.0 if np.array_equal(relabel_like(a), relabel_like(b)) else 0.0
    return float((index - expected) / (maximum - expected))


def relabel_like(labels: np.ndarray) -> np.ndarray:
    """Canonical first-appearance relabeling (for partition equality)."""
    out = np.empty_like(labels)
    mapping: dict[int, int] = {}
    for i, lab in enumerate(labels.tolist()):
        out[i] = mapping.setdefault(lab, len(mapping))
    return out


def cocluster(partitions: list[Partition]) -> CoClusterMatrix:
    """Same-cluster frequency matrix over a sequence of window partitions."""
    if not partitions:
        raise ValueError("need at least one partition")
    tickers = tuple(sorted({t for p in partitions for t in p.nodes}))
    idx = {t: i for i, t in enumerate(tickers)}
    n = len(tickers)
    together = np.zeros((n, n), dtype=np.int64)
    present = np.zeros((n, n), dtype=np.int64)
    for p in partitions:
        ids = np.array([idx[t] for t in p.nodes], dtype=np.int64)
        sel = np.ix_(ids, ids)
        present[sel] += 1
        same = (p.labels[:, None] == p.labels[None, :]).astype(np.int64)
        together[sel] += same
    with np.errstate(invalid="ignore"):
        p_mat = np.where(present > 0, together / np.maximum(present, 1), np.nan)
    return CoClusterMatrix(
        tickers=tickers, p=p_mat, present=present, window_count=len(partitions)
    )


def cross_sector(cc: CoClusterMatrix, sectors: dict[str, str]) -> list[CrossSectorRecord]:
    """Split each stock's co-clustering strength by sector agreement.

    Strengths sum co-clustering frequencies against all other stocks
    (never-co-present pairs contribute nothing). A stock with zero
    total strength is flagged and its ratios are NaN.
    """
    records = []
    sec = [sectors.get(t) for t in cc.tickers]
    if any(s is None for s in sec):
        missing = [t for t, s in zip(cc.tickers, sec) if s is None]
        raise ValueError(f"tickers missing from sector map: {', '.join(missing[:5])}")
    n = len(cc.tickers)
    for i in range(n):
        s_same = 0.0
        by_sector: dict[str, float] = {}
        for j in range(n):
            if j == i or cc.present[i, j] == 0:
                continue
            val = float(cc.p[i, j])
            if sec[j] == sec[i]:
                s_same += val
            else:
                by_sector[sec[j]] = by_sector.get(sec[j], 0.0) + val
        s_cross = math.fsum(by_sector.values())
        s_total = s_cross + s_same
        if by_sector:
            s_most = max(by_sector.values())
            most = next(
                s for s in GICS_SECTORS if by_sector.get(s) == s_most
            )
        else:
            s_most = 0.0
            most = None
        flagged = s_total == 0.0
        records.append(
            CrossSectorRecord(
                ticker=cc.tickers[i],
                sector=sec[i],
                s_cross=s_cross,
                s_same=s_same,
                s_total=s_total,
                s_most=s_most,
                p_cross=(s_cross / s_total) if not flagged else float("nan"),
                p_most=(s_most / s_total) if not flagged else float("nan"),
                most_connected_sector=most if not flagged else None,
                flagged=flagged,
            )
        )
    return records
