"""Synthetic price panels with planted block structure.

Generates weekday price series for a configurable number of months,
stocks and correlation blocks, writes the standard price/sector CSV
pair plus the ground-truth block labels, and supports two controlled
perturbations: shuffling a fraction of sector labels and injecting a
one-month market-wide correlation shock.
"""

import calendar
import csv
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

from .ingest import GICS_SECTORS

RHO_IN = 0.7
RHO_OUT = 0.05
DAILY_VOL = 0.01
DAILY_DRIFT = 0.0004
BASE_PRICE = 100.0


@dataclass(frozen=True)
class SynthPanel:
    dates: tuple[date, ...]
    tickers: tuple[str, ...]
    close: np.ndarray
    sectors: dict[str, str]
    blocks: dict[str, int]


def _weekdays(start: date, months: int) -> list[date]:
    days = []
    year, month = start.year, start.month
    for _ in range(months):
        n_days = calendar.monthrange(year, month)[1]
        for d in range(1, n_days + 1):
            day = date(year, month, d)
            if day.weekday() < 5:
                days.append(day)
        month += 1
        if month > 12:
            month = 1
            year += 1
    return days


def _block_chol(n: int, blocks: np.ndarray, rho_in: float, rho_out: float) -> np.ndarray:
    same = blocks[:, None] == blocks[None, :]
    corr = np.where(same, rho_in, rho_out)
    np.fill_diagonal(corr, 1.0)
    return np.linalg.cholesky(corr)


def generate(months: int, stocks: int, blocks: int, seed: int = 0,
             start: date = date(2018, 1, 1), shuffle_sectors: float = 0.0,
             shock_month: int | None = None, shock_rho: float = 0.9,
             shock_vol: float = 3.0, rho_in: float = RHO_IN,
             rho_out: float = RHO_OUT, blocks_per_sector: int = 1) -> SynthPanel:
    """Build a planted-block price panel.

    ``shock_month`` (0-based month index into the panel) replaces that
    month's correlation with an all-pairs ``shock_rho`` matrix and
    scales that month's daily volatility by ``shock_vol``; crisis
    months pair extreme correlation with elevated volatility, which is
    what lets a single month dominate a multi-month rolling estimate.
    ``shuffle_sectors`` reassigns that fraction of tickers to a random
    other sector, leaving the planted return blocks untouched.
    """
    if months < 2 or stocks < 2 or blocks < 1:
        raise ValueError("need months >= 2, stocks >= 2, blocks >= 1")
    if blocks > stocks:
        raise ValueError("more blocks than stocks")
    if not 0.0 <= shuffle_sectors <= 1.0:
        raise ValueError("shuffle_sectors must be in [0, 1]")
    if shock_month is not None and not 0 <= shock_month < months:
        raise ValueError("shock_month out of range")
    if shock_vol <= 0.0:
        raise ValueError("shock_vol must be positive")
    if not -1.0 < rho_out <= rho_in < 1.0:
        raise ValueError("need -1 < rho_out <= rho_in < 1")
    if blocks_per_sector < 1:
        raise ValueError("blocks_per_sector must be >= 1")
    rng = np.random.default_rng(seed)
    tickers = tuple(f"S{i:03d}" for i in range(stocks))
    block_of = np.arange(stocks) % blocks
    block_of.sort()
    days = _weekdays(start, months)
    n_days = len(days)

    chol = _block_chol(stocks, block_of, rho_in, rho_out)
    z = rng.standard_normal((n_days - 1, stocks))
    rets = DAILY_DRIFT + DAILY_VOL * (z @ chol.T)
    if shock_month is not None:
        shock_key = (start.year * 12 + start.month - 1) + shock_month
        day_month = np.array([d.year * 12 + d.month - 1 for d in days[1:]])
        mask = day_month == shock_key
        if mask.any():
            shock_blocks = np.zeros(stocks, dtype=np.int64)
            chol_shock = _block_chol(stocks, shock_blocks, shock_rho, shock_rho)
            rets[mask] = DAILY_DRIFT + shock_vol * DAILY_VOL * (z[mask] @ chol_shock.T)

    close = np.empty((n_days, stocks), dtype=np.float64)
    close[0] = BASE_PRICE
    close[1:] = BASE_PRICE * np.cumprod(1.0 + rets, axis=0)

    sectors = {t: GICS_SECTORS[(b // blocks_per_sector) % len(GICS_SECTORS)]
               for t, b in zip(tickers, block_of)}
    if shuffle_sectors > 0.0:
        n_shuffle = int(round(shuffle_sectors * stocks))
        victims = rng.choice(stocks, size=n_shuffle, replace=False)
        for v in victims:
            t = tickers[v]
            others = [s for s in GICS_SECTORS if s != sectors[t]]
            sectors[t] = others[rng.integers(len(others))]

    return SynthPanel(
        dates=tuple(days),
        tickers=tickers,
        close=close,
        sectors=sectors,
        blocks={t: int(b) for t, b in zip(tickers, block_of)},
    )


def write_panel(panel: SynthPanel, out_dir) -> dict[str, Path]:
    """Write prices.csv, sectors.csv and truth.csv into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "prices": out / "prices.csv",
        "sectors": out / "sectors.csv",
        "truth": out / "truth.csv",
    }
    with open(paths["prices"], "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["date", "ticker", "close"])
        for i, day in enumerate(panel.dates):
            iso = day.isoformat()
            for j, ticker in enumerate(panel.tickers):
                writer.writerow([iso, ticker, repr(float(panel.close[i, j]))])
    with open(paths["sectors"], "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["ticker", "sector"])
        for ticker in panel.tickers:
            writer.writerow([ticker, panel.sectors[ticker]])
    with open(paths["truth"], "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["ticker", "block"])
        for ticker in panel.tickers:
            writer.writerow([ticker, panel.blocks[ticker]])
    return paths
