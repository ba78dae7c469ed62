"""Random-matrix denoising of correlation matrices.

Eigenvalues inside the Marchenko-Pastur noise band are collapsed to
their mean; eigenvalues outside the band (signal above, structure
below) are kept.  The reconstruction is rescaled to a unit diagonal so
it remains a correlation matrix.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import DataError
from .ingest import CorrelationMatrix

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MpBounds:
    """Noise eigenvalue band for an N-asset, T-day sample."""

    lambda_minus: float
    lambda_plus: float
    q: float
    sigma2: float


@dataclass(frozen=True)
class CleanedCorrelation:
    """Denoised correlation matrix with cleaning diagnostics.

    ``kept_count`` is the number of eigenvalues retained outside the
    noise band; ``noise_mean`` is the value the in-band eigenvalues
    were collapsed to (NaN when none were in band).
    """

    matrix: np.ndarray
    tickers: tuple[str, ...]
    kept_count: int
    noise_mean: float


@dataclass(frozen=True)
class ThresholdGraphMatrix:
    """Binary adjacency from thresholding a cleaned correlation."""

    matrix: np.ndarray  # uint8, symmetric, zero diagonal
    theta: float
    tickers: tuple[str, ...]


def mp_bounds(n_assets: int, n_days: int, sigma2: float = 1.0) -> MpBounds:
    """Band edges sigma^2 (1 +/- sqrt(q))^2 with q = N/T."""
    if n_assets < 1 or n_days < 1:
        raise ValueError("n_assets and n_days must be positive")
    if sigma2 <= 0.0:
        raise ValueError("sigma2 must be positive")
    q = n_assets / n_days
    if q >= 1.0:
        log.warning(
            "aspect ratio q = %d/%d = %.3f >= 1; the noise band is degenerate "
            "but the filter still applies", n_assets, n_days, q,
        )
    root = math.sqrt(q)
    return MpBounds(
        lambda_minus=sigma2 * (1.0 - root) ** 2,
        lambda_plus=sigma2 * (1.0 + root) ** 2,
        q=q,
        sigma2=sigma2,
    )


def mp_density(x, bounds: MpBounds):
    """Marchenko-Pastur eigenvalue density at x (0 outside the band).

    Only defined for aspect ratios q in (0, 1).
    """
    if not 0.0 < bounds.q < 1.0:
        raise ValueError(f"density requires q in (0, 1), got {bounds.q}")
    x = np.asarray(x, dtype=np.float64)
    lo, hi = bounds.lambda_minus, bounds.lambda_plus
    inside = (x > lo) & (x < hi) & (x > 0.0)
    out = np.zeros_like(x)
    xs = x[inside]
    out[inside] = np.sqrt((xs - lo) * (hi - xs)) / (
        2.0 * math.pi * bounds.sigma2 * bounds.q * xs
    )
    return out if out.ndim else float(out)


def clean(corr: CorrelationMatrix, bounds: MpBounds) -> CleanedCorrelation:
    """Collapse noise-band eigenvalues to their mean and rescale.

    The eigenbasis is kept; eigenvalues in [lambda_minus, lambda_plus]
    are replaced by their mean, so the reconstruction trace matches the
    input trace before rescaling.  If no eigenvalue falls in the band
    the input is returned unchanged.
    """
    dec = numerics.eig_sym(corr.matrix)
    w = dec.eigenvalues
    inband = (w >= bounds.lambda_minus) & (w <= bounds.lambda_plus)
    n_in = int(inband.sum())
    n = w.shape[0]
    if n_in == 0:
        return CleanedCorrelation(
            matrix=corr.matrix,
            tickers=corr.tickers,
            kept_count=n,
            noise_mean=float("nan"),
        )
    noise_mean = float(w[inband].mean())
    w_clean = np.where(inband, noise_mean, w)
    rec = (dec.eigenvectors * w_clean) @ dec.eigenvectors.T
    trace_drift = abs(float(np.trace(rec)) - float(np.trace(corr.matrix)))
    if trace_drift > 1e-8 * n:
        raise DataError(f"trace not conserved by cleaning (drift {trace_drift:.3e})")
    d = np.diagonal(rec).copy()
    if (d <= 0.0).any():
        raise DataError("cleaned matrix has a nonpositive diagonal entry")
    scale = 1.0 / np.sqrt(d)
    out = rec * scale[:, None] * scale[None, :]
    out = np.clip(out, -1.0, 1.0)
    out = np.triu(out, 1)
    out = out + out.T
    np.fill_diagonal(out, 1.0)
    out.flags.writeable = False
    return CleanedCorrelation(
        matrix=out,
        tickers=corr.tickers,
        kept_count=n - n_in,
        noise_mean=noise_mean,
    )


def threshold(cleaned: CleanedCorrelation, theta: float) -> ThresholdGraphMatrix:
    """Adjacency T_ij = 1 iff C_ij > theta for i != j."""
    if theta < 0.0:
        raise ValueError("theta must be nonnegative")
    t = (cleaned.matrix > theta).astype(np.uint8)
    np.fill_diagonal(t, 0)
    t.flags.writeable = False
    return ThresholdGraphMatrix(matrix=t, theta=float(theta), tickers=cleaned.tickers)
