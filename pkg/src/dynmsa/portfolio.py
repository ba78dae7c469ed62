"""Diversification portfolios from cluster structure, and KPI backtesting.

Selection keeps every stock from small clusters and fills the rest of
the portfolio proportionally from large clusters, taking each cluster's
least (or most) intra-connected members.  Backtests hold equal-weight
positions between month-end rebalances against an equal-weight
benchmark of the full universe.
"""

import math
from dataclasses import dataclass
from datetime import date

import numpy as np

from .community import Partition
from .errors import DataError
from .ingest import ReturnPanel

TRADING_DAYS = 252


@dataclass(frozen=True)
class StockScore:
    """Mean correlation of a stock with its cluster co-members."""

    ticker: str
    cluster: int
    intra: float


@dataclass(frozen=True)
class SelectionConfig:
    k: int
    small_n: int
    mode: str  # "bottom" or "top"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        if self.small_n < 1:
            raise ValueError("small_n must be positive")
        if self.mode not in ("bottom", "top"):
            raise ValueError(f"mode must be 'bottom' or 'top', got {self.mode!r}")


@dataclass(frozen=True)
class KpiRecord:
    """Annualized performance measures of one daily return series."""

    strategy: str
    ann_ret: float
    ann_vola: float
    sharpe: float
    sortino: float
    max_dd: float
    down_vola: float
    beta: float
    r_squared: float
    alpha: float
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class BacktestResult:
    """Daily returns and equity for a portfolio and its benchmark."""

    dates: tuple[date, ...]
    portfolio_returns: np.ndarray
    portfolio_equity: np.ndarray
    benchmark_returns: np.ndarray
    benchmark_equity: np.ndarray


def stock_scores(p: Partition, corr) -> dict[str, StockScore]:
    """Intra-cluster connectivity per stock, for clusters of size >= 2."""
    index = {t: i for i, t in enumerate(corr.tickers)}
    missing = [t for t in p.nodes if t not in index]
    if missing:
        raise ValueError(f"partition tickers missing from corr: {missing[:5]}")
    scores: dict[str, StockScore] = {}
    for cid, members in enumerate(p.clusters()):
        if len(members) < 2:
            continue
        ids = np.array([index[t] for t in members], dtype=np.int64)
        block = corr.matrix[np.ix_(ids, ids)]
        means = (block.sum(axis=1) - 1.0) / (len(members) - 1.0)
        for t, mu in zip(members, means):
            scores[t] = StockScore(ticker=t, cluster=cid, intra=float(mu))
    return scores


def select(p: Partition, scores: dict[str, StockScore], cfg: SelectionConfig) -> tuple[str, ...]:
    """Pick cfg.k tickers: all of the small clusters, the rest pro rata.

    Large clusters get floor(|C| / m * remaining) slots (m = stocks in
    large clusters), filled in ascending (mode "bottom") or descending
    (mode "top") intra-connectivity order.  Leftover slots go to the
    largest fractional remainders, ties to the larger cluster and then
    the lower cluster id.  Returns a sorted ticker tuple.
    """
    clusters = p.clusters()
    if sum(len(c) for c in clusters) < cfg.k:
        raise DataError(f"universe smaller than portfolio size {cfg.k}")
    small = [c for c in clusters if len(c) <= cfg.small_n]
    large = [(cid, c) for cid, c in enumerate(clusters) if len(c) > cfg.small_n]
    chosen: list[str] = [t for c in small for t in c]
    if len(chosen) > cfg.k:
        raise DataError(
            f"small clusters alone hold {len(chosen)} stocks, more than k={cfg.k}"
        )
    remaining = cfg.k - len(chosen)
    if remaining > 0 and not large:
        raise DataError("no large clusters left to fill the portfolio")
    if remaining > 0:
        m = sum(len(c) for _, c in large)
        quota = [len(c) / m * remaining for _, c in large]
        counts = [math.floor(qu) for qu in quota]
        leftover = remaining - sum(counts)
        order = sorted(
            range(len(large)),
            key=lambda i: (-(quota[i] - counts[i]), -len(large[i][1]), large[i][0]),
        )
        for i in order[:leftover]:
            counts[i] += 1
        for (cid, members), take in zip(large, counts):
            if take == 0:
                continue
            missing = [t for t in members if t not in scores]
            if missing:
                raise DataError(f"no intra score for {missing[0]} in cluster {cid}")
            ranked = sorted(
                members,
                key=lambda t: (scores[t].intra, t),
                reverse=(cfg.mode == "top"),
            )
            chosen.extend(ranked[:take])
    return tuple(sorted(chosen))


def portfolio_risk(weights: np.ndarray, vols: np.ndarray, corr: np.ndarray) -> float:
    """Portfolio return variance from weights, volatilities and correlations."""
    weights = np.asarray(weights, dtype=np.float64)
    vols = np.asarray(vols, dtype=np.float64)
    n = len(weights)
    if vols.shape != (n,) or corr.shape != (n, n):
        raise ValueError("weights, vols and corr shapes do not agree")
    cov = corr * vols[:, None] * vols[None, :]
    return float(weights @ cov @ weights)


def backtest(rp: ReturnPanel, selections: list[tuple[date, tuple[str, ...]]],
             benchmark: tuple[str, ...]) -> BacktestResult:
    """Monthly-rebalanced equal-weight backtest against a benchmark.

    Each selection is held on the return days after its anchor up to and
    including the next anchor (the last one runs to the end of the
    panel).  Equal weighting is applied daily: the portfolio return is
    the mean of member returns.
    """
    if not selections:
        raise DataError("no selections to backtest")
    index = {t: i for i, t in enumerate(rp.tickers)}
    for anchor, tickers in selections:
        missing = [t for t in tickers if t not in index]
        if missing:
            raise DataError(f"selection at {anchor} has unknown tickers: {missing[:5]}")
    bench_missing = [t for t in benchmark if t not in index]
    if bench_missing:
        raise DataError(f"benchmark tickers not in panel: {bench_missing[:5]}")
    anchors = [a for a, _ in selections]
    if any(anchors[i] >= anchors[i + 1] for i in range(len(anchors) - 1)):
        raise DataError("selection anchors must be strictly increasing")
    bench_ids = np.array([index[t] for t in benchmark], dtype=np.int64)

    dates: list[date] = []
    port_rets: list[float] = []
    bench_rets: list[float] = []
    n_days = len(rp.dates)
    date_axis = np.array(rp.dates, dtype="datetime64[D]")
    for i, (anchor, tickers) in enumerate(selections):
        start = np.searchsorted(date_axis, np.datetime64(anchor, "D"), side="right")
        if i + 1 < len(selections):
            stop = np.searchsorted(date_axis, np.datetime64(anchors[i + 1], "D"),
                                   side="right")
        else:
            stop = n_days
        if start >= stop:
            continue
        ids = np.array([index[t] for t in tickers], dtype=np.int64)
        seg = rp.returns[start:stop]
        port_rets.extend(seg[:, ids].mean(axis=1).tolist())
        bench_rets.extend(seg[:, bench_ids].mean(axis=1).tolist())
        dates.extend(rp.dates[start:stop])
    if not dates:
        raise DataError("no held days in the backtest range")
    pr = np.asarray(port_rets, dtype=np.float64)
    br = np.asarray(bench_rets, dtype=np.float64)
    return BacktestResult(
        dates=tuple(dates),
        portfolio_returns=pr,
        portfolio_equity=np.cumprod(1.0 + pr),
        benchmark_returns=br,
        benchmark_equity=np.cumprod(1.0 + br),
    )


def kpis(strategy: str, daily: np.ndarray, benchmark_daily: np.ndarray) -> KpiRecord:
    """Annualized KPI record for one daily return series.

    Annualized return is the compounded growth rate; downside
    volatility uses the zero-threshold shortfall; beta/alpha come from
    a least-squares regression on the benchmark and alpha is the
    annualized intercept.
    """
    r = np.asarray(daily, dtype=np.float64)
    b = np.asarray(benchmark_daily, dtype=np.float64)
    if r.shape != b.shape or r.ndim != 1:
        raise ValueError("daily and benchmark series must be 1-d and aligned")
    t = len(r)
    if t < 2:
        raise DataError("need at least two observations for KPIs")
    flags: list[str] = []
    growth = float(np.prod(1.0 + r))
    if growth <= 0.0:
        raise DataError("equity went nonpositive; annualized return undefined")
    ann_ret = growth ** (TRADING_DAYS / t) - 1.0
    ann_vola = float(r.std(ddof=1)) * math.sqrt(TRADING_DAYS)
    if ann_vola > 0.0:
        sharpe = ann_ret / ann_vola
    else:
        sharpe = float("nan")
        flags.append("zero_volatility")
    downside = math.sqrt(float((np.minimum(r, 0.0) ** 2).mean())) * math.sqrt(TRADING_DAYS)
    if downside > 0.0:
        sortino = ann_ret / downside
    else:
        sortino = float("nan")
        flags.append("zero_downside")
    equity = np.cumprod(1.0 + r)
    peak = np.maximum.accumulate(np.concatenate(([1.0], equity)))[1:]
    max_dd = float(np.minimum(equity / peak - 1.0, 0.0).min())
    bc = b - b.mean()
    rc = r - r.mean()
    var_b = float((bc * bc).sum())
    if var_b > 0.0:
        beta = float((bc * rc).sum()) / var_b
        alpha = (float(r.mean()) - beta * float(b.mean())) * TRADING_DAYS
    else:
        beta = float("nan")
        alpha = float("nan")
        flags.append("degenerate_benchmark")
    var_r = float((rc * rc).sum())
    if var_b > 0.0 and var_r > 0.0:
        cov = float((bc * rc).sum())
        r_squared = (cov * cov) / (var_b * var_r)
    else:
        r_squared = float("nan")
        if "degenerate_benchmark" not in flags and var_r == 0.0:
            flags.append("zero_volatility_r2")
    return KpiRecord(
        strategy=strategy,
        ann_ret=float(ann_ret),
        ann_vola=ann_vola,
        sharpe=float(sharpe),
        sortino=float(sortino),
        max_dd=max_dd,
        down_vola=downside,
        beta=beta,
        r_squared=float(r_squared),
        alpha=float(alpha),
        flags=tuple(flags),
    )
