"""Dense symmetric eigensolver and k-means, on top of the kernel backends.

Both routines are deterministic: the eigensolver is a fixed-schedule
cyclic Jacobi iteration, and k-means draws every random choice from a
splitmix64 stream seeded by the caller.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .rng import SplitMix64

JACOBI_REL_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
KMEANS_MAX_ITER = 300
KMEANS_RESTARTS = 10

_SYM_TOL = 1e-12


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues in descending order; eigenvectors as matching columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def eig_sym(a: np.ndarray) -> EigenDecomposition:
    """Full eigendecomposition of a symmetric matrix.

    The input must be symmetric within 1e-12 entrywise; it is
    symmetrized exactly before iterating so both triangles agree.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] == 0:
        raise ValueError("matrix is empty")
    asym = np.abs(a - a.T).max() if a.shape[0] > 1 else 0.0
    if asym > _SYM_TOL:
        raise ValueError(f"matrix is not symmetric (max |A - A.T| = {asym:.3e})")
    a = (a + a.T) / 2.0
    pp, qq, off = _kernels.jacobi_schedule(a.shape[0])
    w, v, sweeps = _kernels.jacobi_eigh(a, pp, qq, off, JACOBI_REL_TOL, JACOBI_MAX_SWEEPS)
    order = np.argsort(-w, kind="stable")
    return EigenDecomposition(
        eigenvalues=np.ascontiguousarray(w[order]),
        eigenvectors=np.ascontiguousarray(v[:, order]),
        sweeps=int(sweeps),
    )


def _plusplus_seed(x: np.ndarray, k: int, rng: SplitMix64) -> np.ndarray:
    """Distance-weighted ("++"-style) initial centroids."""
    n = x.shape[0]
    chosen = [rng.next_below(n)]
    d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        total = float(d2.sum())
        if total <= 0.0:
            taken = set(chosen)
            idx = next(i for i in range(n) if i not in taken)
        else:
            r = rng.next_double() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
        chosen.append(idx)
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return x[chosen].copy()


def kmeans(points: np.ndarray, k: int, seed: int, restarts: int = KMEANS_RESTARTS) -> np.ndarray:
    """Best-of-restarts k-means assignment.

    Every label 0..k-1 is used (empty clusters are repaired during the
    iteration), and the result is bit-identical for a fixed seed.
    """
    x = np.ascontiguousarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("points must be a 2-d array")
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if restarts < 1:
        raise ValueError("restarts must be positive")
    rng = SplitMix64(seed)
    best_labels = None
    best_inertia = np.inf
    for _ in range(restarts):
        c0 = _plusplus_seed(x, k, rng)
        labels, _hist = _kernels.lloyd(x, c0, KMEANS_MAX_ITER)
        labels = np.asarray(labels)
        # score outside the kernel so restart choice cannot depend on
        # backend-specific accumulation order
        centroids = np.zeros((k, x.shape[1]))
        counts = np.bincount(labels, minlength=k).astype(np.float64)
        np.add.at(centroids, labels, x)
        centroids /= counts[:, None]
        inertia = float(((x - centroids[labels]) ** 2).sum())
        if inertia < best_inertia:
            best_inertia = inertia
            best_labels = labels
    return best_labels
