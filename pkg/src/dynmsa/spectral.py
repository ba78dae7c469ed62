"""Spectral regrouping of small communities.

Communities at or below the size cutoff become units; average-linkage
similarity between units feeds a normalized-Laplacian spectral
clustering, searched over a bounded cluster-count range.  The
regrouped partition replaces the input only when it strictly improves
the separation objective, so refinement can never hurt.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import metrics, numerics
from .community import Partition, relabel

log = logging.getLogger(__name__)

MIN_CLUSTERS = 5
MAX_CLUSTERS_CAP = 10
DEFAULT_SMALL_N = 5


@dataclass(frozen=True)
class SimilarityMatrix:
    """Average-linkage correlation between units of stocks."""

    matrix: np.ndarray
    units: tuple[tuple[str, ...], ...]


@dataclass(frozen=True)
class RefinementOutcome:
    """Result of the keep-best comparison between input and regrouping."""

    final: Partition
    chosen: str  # "leiden" or "spectral"
    delta_leiden: float
    delta_spectral: float
    k_chosen: int | None


def similarity(units: tuple[tuple[str, ...], ...], corr) -> SimilarityMatrix:
    """Mean pairwise correlation between (and within) units.

    Entry (i, j) for i != j averages corr over all cross pairs; the
    diagonal averages each unit's internal pairs and is 1 for
    singleton units.
    """
    if not units:
        raise ValueError("no units given")
    index = {t: i for i, t in enumerate(corr.tickers)}
    members = []
    for unit in units:
        missing = [t for t in unit if t not in index]
        if missing:
            raise ValueError(f"unit tickers not in correlation matrix: {missing}")
        members.append(np.array([index[t] for t in unit], dtype=np.int64))
    u = len(units)
    s = np.empty((u, u), dtype=np.float64)
    for i in range(u):
        for j in range(i, u):
            block = corr.matrix[np.ix_(members[i], members[j])]
            if i == j:
                n = len(members[i])
                if n == 1:
                    s[i, i] = 1.0
                else:
                    s[i, i] = (block.sum() - n) / (n * (n - 1.0))
            else:
                s[i, j] = s[j, i] = block.mean()
    return SimilarityMatrix(matrix=s, units=tuple(tuple(t) for t in units))


def spectral_cluster(sim: SimilarityMatrix, k: int, seed: int) -> Partition:
    """Normalized-Laplacian spectral clustering of units into k groups.

    The similarity is shifted nonnegative with a zero diagonal, the
    embedding uses the k smallest eigenvectors of I - D^{-1/2} S D^{-1/2}
    with unit-normalized rows, and k-means does the grouping.
    """
    s = np.array(sim.matrix, dtype=np.float64)
    u = s.shape[0]
    if not 1 <= k <= u:
        raise ValueError(f"k must be in [1, {u}], got {k}")
    s = s - s.min()
    np.fill_diagonal(s, 0.0)
    d = s.sum(axis=1)
    inv_sqrt = np.where(d > 0.0, 1.0 / np.sqrt(np.where(d > 0.0, d, 1.0)), 0.0)
    lap = np.eye(u) - s * inv_sqrt[:, None] * inv_sqrt[None, :]
    dec = numerics.eig_sym(lap)
    # eigenvalues are descending; the embedding wants the k smallest
    emb = dec.eigenvectors[:, ::-1][:, :k].copy()
    norms = np.sqrt((emb * emb).sum(axis=1))
    emb = np.where(norms[:, None] > 0.0, emb / np.where(norms[:, None] > 0.0, norms[:, None], 1.0), 0.0)
    labels = numerics.kmeans(emb, k, seed)
    names = tuple(f"unit{i}" for i in range(u))
    return Partition(nodes=names, labels=relabel(labels))


def _induced_partition(unit_labels: np.ndarray, units, fixed) -> Partition:
    """Stock-level partition from grouped units plus untouched clusters."""
    nodes: list[str] = []
    labels: list[int] = []
    k_units = int(unit_labels.max()) + 1
    for i, unit in enumerate(units):
        for t in unit:
            nodes.append(t)
            labels.append(int(unit_labels[i]))
    for j, cluster in enumerate(fixed):
        for t in cluster:
            nodes.append(t)
            labels.append(k_units + j)
    return Partition(nodes=tuple(nodes), labels=relabel(np.array(labels, dtype=np.int64)))


def search_k(sim: SimilarityMatrix, leiden_small_count: int, corr, seed: int,
             fixed: tuple[tuple[str, ...], ...] = ()) -> tuple[Partition, int]:
    """Pick the unit grouping whose induced stock partition separates best.

    k runs from min(5, u) to u when u <= 10 and to 10 otherwise, with
    u = leiden_small_count. ``fixed`` carries untouched clusters so the
    objective is evaluated on the full stock-level partition. Ties go
    to the smallest k; k values whose objective is undefined are
    skipped.
    """
    u = leiden_small_count
    if u < 2:
        raise ValueError("need at least two units to search")
    k_lo = min(MIN_CLUSTERS, u)
    k_hi = MAX_CLUSTERS_CAP if u > MAX_CLUSTERS_CAP else u
    best: tuple[Partition, int] | None = None
    best_delta = -np.inf
    fallback: tuple[Partition, int] | None = None
    for k in range(k_lo, k_hi + 1):
        unit_part = spectral_cluster(sim, k, seed)
        induced = _induced_partition(unit_part.labels, sim.units, fixed)
        if fallback is None:
            fallback = (induced, k)
        try:
            delta = metrics.objective(induced, corr)
        except ValueError:
            continue
        if delta > best_delta:
            best_delta = delta
            best = (induced, k)
    if best is None:
        log.warning("objective undefined for every k; keeping the smallest k")
        return fallback
    return best


def refine(leiden_partition: Partition, corr, small_n: int = DEFAULT_SMALL_N,
           seed: int = 0) -> RefinementOutcome:
    """Regroup small communities spectrally, keeping the better result.

    Communities of size <= small_n become units; fewer than two of
    them leaves the input unchanged. The spectral candidate replaces
    the input only when its separation objective is strictly larger.
    """
    if small_n < 1:
        raise ValueError("small_n must be positive")
    clusters = leiden_partition.clusters()
    small = [c for c in clusters if len(c) <= small_n]
    large = [c for c in clusters if len(c) > small_n]
    try:
        delta_leiden = metrics.objective(leiden_partition, corr)
    except ValueError:
        delta_leiden = -np.inf
    if len(small) < 2:
        return RefinementOutcome(
            final=leiden_partition,
            chosen="leiden",
            delta_leiden=delta_leiden,
            delta_spectral=delta_leiden,
            k_chosen=None,
        )
    sim = similarity(tuple(small), corr)
    candidate, k = search_k(sim, len(small), corr, seed, fixed=tuple(large))
    try:
        delta_spectral = metrics.objective(candidate, corr)
    except ValueError:
        delta_spectral = -np.inf
    if delta_spectral > delta_leiden:
        return RefinementOutcome(
            final=candidate,
            chosen="spectral",
            delta_leiden=delta_leiden,
            delta_spectral=delta_spectral,
            k_chosen=k,
        )
    return RefinementOutcome(
        final=leiden_partition,
        chosen="leiden",
        delta_leiden=delta_leiden,
        delta_spectral=delta_spectral,
        k_chosen=k,
    )
