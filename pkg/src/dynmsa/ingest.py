"""Input data handling: price/sector files, returns, windows, correlations.

Price files are long-form CSV with columns ``date,ticker,close`` and
ISO-8601 dates; sector files map ``ticker,sector`` onto the closed set
of eleven GICS sector names.  The trading calendar is the union of
dates observed in the price file; tickers below the coverage threshold
are dropped and remaining gaps forward-filled before returns are
computed.
"""

import csv
import logging
from dataclasses import dataclass, field
from datetime import date

import numpy as np

from .errors import DataError, ParseError

log = logging.getLogger(__name__)

GICS_SECTORS = (
    "Energy",
    "Materials",
    "Industrials",
    "Consumer Discretionary",
    "Consumer Staples",
    "Health Care",
    "Financials",
    "Information Technology",
    "Communication Services",
    "Utilities",
    "Real Estate",
)

LOOKBACKS = (3, 6, 12, 24)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PricePanel:
    """Dense close-price panel: one row per date, one column per ticker."""

    dates: tuple[date, ...]
    tickers: tuple[str, ...]
    close: np.ndarray  # (n_dates, n_tickers) float64, all > 0

    def __post_init__(self):
        if self.close.shape != (len(self.dates), len(self.tickers)):
            raise ValueError("close shape does not match dates/tickers")
        if len(set(self.tickers)) != len(self.tickers):
            raise ValueError("duplicate tickers in panel")
        if any(self.dates[i] >= self.dates[i + 1] for i in range(len(self.dates) - 1)):
            raise ValueError("dates must be strictly increasing")


@dataclass(frozen=True)
class ReturnPanel:
    """Simple daily returns; one row per return date."""

    dates: tuple[date, ...]
    tickers: tuple[str, ...]
    returns: np.ndarray  # (n_dates, n_tickers) float64, all > -1


@dataclass(frozen=True)
class Window:
    """A rolling estimation window anchored at a month-end.

    ``start``/``stop`` index the rows of the ReturnPanel the window was
    built from (stop exclusive); the window spans ``lookback_months``
    calendar months ending with the anchor month.
    """

    anchor: date
    lookback_months: int
    start: int
    stop: int

    def __post_init__(self):
        if self.lookback_months not in LOOKBACKS:
            raise ValueError(f"lookback_months must be one of {LOOKBACKS}")
        if not 0 <= self.start < self.stop:
            raise ValueError("window index range is empty or negative")

    @property
    def n_days(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True)
class DroppedTicker:
    ticker: str
    coverage: float
    reason: str


@dataclass(frozen=True)
class CorrelationMatrix:
    """Pearson correlation over one window, after exclusions."""

    matrix: np.ndarray
    tickers: tuple[str, ...]
    n_days: int
    window: Window | None = None
    excluded: tuple[str, ...] = field(default=())


def load_prices(path, min_coverage: float = 0.95) -> tuple[PricePanel, tuple[DroppedTicker, ...]]:
    """Read a price CSV into a dense panel.

    Tickers present on fewer than ``min_coverage`` of all observed
    dates are dropped; remaining interior gaps are forward-filled.  A
    ticker with no price on the earliest dates cannot be filled and is
    dropped as well.  Returns the panel and the drop report.
    """
    if not 0.0 <= min_coverage <= 1.0:
        raise ValueError("min_coverage must be in [0, 1]")
    by_ticker: dict[str, dict[date, float]] = {}
    all_dates: set[date] = set()
    try:
        handle = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read price file {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise ParseError("price file is empty", line=1)
        if [h.strip().lower() for h in header] != ["date", "ticker", "close"]:
            raise ParseError(f"expected header date,ticker,close, got {header}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", line=lineno)
            raw_date, ticker, raw_close = (f.strip() for f in row)
            try:
                day = date.fromisoformat(raw_date)
            except ValueError:
                raise ParseError(f"bad date {raw_date!r}", line=lineno) from None
            if not ticker:
                raise ParseError("empty ticker", line=lineno)
            try:
                close = float(raw_close)
            except ValueError:
                raise ParseError(f"bad price {raw_close!r}", line=lineno) from None
            if not np.isfinite(close) or close <= 0.0:
                raise ParseError(f"nonpositive price {raw_close!r} for {ticker}", line=lineno)
            series = by_ticker.setdefault(ticker, {})
            if day in series:
                raise ParseError(f"duplicate row for ({raw_date}, {ticker})", line=lineno)
            series[day] = close
            all_dates.add(day)
    if not by_ticker:
        raise DataError(f"no price rows in {path}")

    dates = tuple(sorted(all_dates))
    n = len(dates)
    kept: list[str] = []
    dropped: list[DroppedTicker] = []
    for ticker in sorted(by_ticker):
        coverage = len(by_ticker[ticker]) / n
        if coverage < min_coverage:
            dropped.append(DroppedTicker(ticker, coverage, "below_min_coverage"))
        elif dates[0] not in by_ticker[ticker]:
            dropped.append(DroppedTicker(ticker, coverage, "missing_first_date"))
        else:
            kept.append(ticker)
    if not kept:
        raise DataError("every ticker fell below the coverage threshold")

    close = np.empty((n, len(kept)), dtype=np.float64)
    for j, ticker in enumerate(kept):
        series = by_ticker[ticker]
        last = np.nan
        for i, day in enumerate(dates):
            last = series.get(day, last)
            close[i, j] = last
    panel = PricePanel(dates=dates, tickers=tuple(kept), close=_readonly(close))
    if dropped:
        log.info("dropped %d ticker(s) during load", len(dropped))
    return panel, tuple(dropped)


def load_sectors(path, tickers: tuple[str, ...] | None = None) -> dict[str, str]:
    """Read a ticker -> GICS sector map.

    Sector names must come from the closed eleven-name set.  When
    ``tickers`` is given, every one of them must be mapped.
    """
    valid = set(GICS_SECTORS)
    sectors: dict[str, str] = {}
    try:
        handle = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read sector file {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise ParseError("sector file is empty", line=1)
        if [h.strip().lower() for h in header] != ["ticker", "sector"]:
            raise ParseError(f"expected header ticker,sector, got {header}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 fields, got {len(row)}", line=lineno)
            ticker, sector = row[0].strip(), row[1].strip()
            if not ticker:
                raise ParseError("empty ticker", line=lineno)
            if sector not in valid:
                raise ParseError(f"unknown sector {sector!r} for {ticker}", line=lineno)
            if ticker in sectors:
                raise ParseError(f"duplicate ticker {ticker}", line=lineno)
            sectors[ticker] = sector
    if not sectors:
        raise DataError(f"sector file {path} has no rows")
    if tickers is not None:
        missing = [t for t in tickers if t not in sectors]
        if missing:
            raise DataError(f"tickers missing from sector file: {', '.join(missing[:10])}")
    return sectors


def compute_returns(panel: PricePanel) -> ReturnPanel:
    """Daily simple returns r_t = (P_t - P_{t-1}) / P_{t-1}."""
    if len(panel.dates) < 2:
        raise DataError("need at least two price dates to compute returns")
    close = panel.close
    bad = np.argwhere(close <= 0.0)
    if bad.size:
        i, j = bad[0]
        raise DataError(
            f"nonpositive price for {panel.tickers[j]} on {panel.dates[i].isoformat()}"
        )
    rets = (close[1:] - close[:-1]) / close[:-1]
    return ReturnPanel(
        dates=panel.dates[1:], tickers=panel.tickers, returns=_readonly(rets)
    )


def month_end_windows(rp: ReturnPanel, lookback_months: int) -> list[Window]:
    """Rolling month-end windows of n calendar months over the panel.

    A window anchored at the last trading day of month i covers the
    return days of months i-n+1..i; anchors start at the (n+1)-th
    month of the panel, giving M - n windows for M panel months.  The
    panel's first month only ever serves as history.
    """
    if lookback_months not in LOOKBACKS:
        raise ValueError(f"lookback_months must be one of {LOOKBACKS}")
    n = lookback_months
    month_of = np.array([d.year * 12 + d.month for d in rp.dates], dtype=np.int64)
    months = sorted(set(month_of.tolist()))
    if len(months) < n + 1:
        log.warning(
            "panel spans %d month(s); need at least %d for one %d-month window",
            len(months), n + 1, n,
        )
        return []
    first_idx = {m: int(np.argmax(month_of == m)) for m in months}
    last_idx = {m: int(len(month_of) - 1 - np.argmax(month_of[::-1] == m)) for m in months}
    windows = []
    for i in range(n, len(months)):
        start = first_idx[months[i - n + 1]]
        stop = last_idx[months[i]] + 1
        windows.append(
            Window(
                anchor=rp.dates[stop - 1],
                lookback_months=n,
                start=start,
                stop=stop,
            )
        )
    return windows


def pearson_correlation(rp: ReturnPanel, window: Window) -> CorrelationMatrix:
    """Pairwise Pearson correlation of returns inside one window.

    Tickers with zero return variance in the window are excluded and
    reported. The result is exactly symmetric with a unit diagonal and
    entries clipped to [-1, 1].
    """
    if window.stop > len(rp.dates):
        raise ValueError("window exceeds the return panel")
    x = rp.returns[window.start:window.stop]
    if x.shape[0] < 2:
        raise DataError("window has fewer than two return days")
    spread = x.max(axis=0) - x.min(axis=0)
    keep = np.nonzero(spread > 0.0)[0]
    excluded = tuple(rp.tickers[j] for j in np.nonzero(spread == 0.0)[0])
    if keep.size < 2:
        raise DataError(
            f"window ending {window.anchor.isoformat()} has fewer than two "
            "tickers with nonzero return variance"
        )
    c = np.corrcoef(x[:, keep], rowvar=False)
    c = np.clip(c, -1.0, 1.0)
    c = np.triu(c, 1)
    c = c + c.T
    np.fill_diagonal(c, 1.0)
    return CorrelationMatrix(
        matrix=_readonly(c),
        tickers=tuple(rp.tickers[j] for j in keep),
        n_days=int(x.shape[0]),
        window=window,
        excluded=excluded,
    )
