"""Correlation-network clustering of stock panels with RMT denoising,
seeded community detection, spectral refinement of small communities,
and diversification portfolio backtests."""

from ._kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
