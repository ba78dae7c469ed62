"""End-to-end run orchestration and output writing.

A run loads prices and sectors, slices rolling month-end windows,
processes each window (correlate, denoise, grid-search the threshold
with seeded community detection, spectrally refine small communities),
then assembles cross-window series, portfolio selections, backtests and
KPI tables.  All outputs are plain CSV/JSON with deterministic
formatting; a manifest with content digests is written last.
"""

import dataclasses
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

from . import spectral
from .community import (
    Graph,
    Partition,
    build_graph,
    leiden,
    modularity,
    relabel,
    sector_seed,
)
from .errors import DataError, DynmsaError
from .ingest import (
    CorrelationMatrix,
    LOOKBACKS,
    ReturnPanel,
    Window,
    compute_returns,
    load_prices,
    load_sectors,
    month_end_windows,
    pearson_correlation,
)
from .metrics import ClusterQuality, ari, cocluster, cross_sector, inter_corr, intra_corr
from .portfolio import SelectionConfig, StockScore, backtest, kpis, select, stock_scores
from .rmtclean import CleanedCorrelation, clean, mp_bounds, threshold

log = logging.getLogger(__name__)

KPI_COLUMNS = (
    "strategy", "ann_ret", "ann_vola", "sharpe", "sortino", "max_dd",
    "down_vola", "beta", "r_squared", "alpha",
)


@dataclass(frozen=True)
class RunConfig:
    """Validated knobs of one pipeline run."""

    lookback_months: int = 3
    theta_grid_size: int = 41
    small_n: int = 5
    portfolio_k: int = 75
    selection_modes: tuple[str, ...] = ("bottom", "top")
    rng_seed: int = 0
    min_coverage: float = 0.95
    out_dir: str = "dynmsa-out"
    workers: int = 1
    resolution: float = 1.0

    def __post_init__(self):
        if self.lookback_months not in LOOKBACKS:
            raise ValueError(f"lookback_months must be one of {LOOKBACKS}")
        if self.theta_grid_size < 2:
            raise ValueError("theta_grid_size must be at least 2")
        if self.small_n < 1:
            raise ValueError("small_n must be positive")
        if self.portfolio_k < 1:
            raise ValueError("portfolio_k must be positive")
        if not self.selection_modes:
            raise ValueError("need at least one selection mode")
        for mode in self.selection_modes:
            if mode not in ("bottom", "top"):
                raise ValueError(f"unknown selection mode {mode!r}")
        if not 0.0 <= self.min_coverage <= 1.0:
            raise ValueError("min_coverage must be in [0, 1]")
        if self.workers < 1:
            raise ValueError("workers must be positive")
        if self.resolution <= 0.0:
            raise ValueError("resolution must be positive")
        # accept Path out_dirs; the manifest serializes the config to JSON
        object.__setattr__(self, "out_dir", str(self.out_dir))


@dataclass(frozen=True)
class WindowResult:
    """Everything the cross-window stages need from one window."""

    anchor: date
    theta_star: float
    quality_before: ClusterQuality
    quality_after: ClusterQuality
    quality_sector: ClusterQuality
    final: Partition
    provenance: str  # "leiden" or "spectral"
    k_chosen: int | None
    scores: dict[str, StockScore]
    n_tickers: int
    excluded: tuple[str, ...]


def _align(p: Partition, tickers: tuple[str, ...]) -> Partition:
    """Reorder a partition's nodes to a reference ticker order."""
    if p.nodes == tickers:
        return p
    mapping = p.to_dict()
    labels = np.array([mapping[t] for t in tickers], dtype=np.int64)
    return Partition(nodes=tickers, labels=relabel(labels))


def _quality(p: Partition, cleaned: CleanedCorrelation, g: Graph) -> ClusterQuality:
    try:
        ri = intra_corr(p, cleaned)
    except ValueError:
        ri = float("nan")
    try:
        re_ = inter_corr(p, cleaned)
    except ValueError:
        re_ = float("nan")
    return ClusterQuality(
        rho_intra=ri,
        rho_inter=re_,
        objective=ri - re_,
        modularity=modularity(g, _align(p, g.tickers)),
        n_clusters=p.n_clusters,
    )


def optimize_theta(cleaned: CleanedCorrelation, sectors: dict[str, str],
                   grid_size: int = 41, rng_seed: int = 0,
                   resolution: float = 1.0) -> tuple[float, Partition, ClusterQuality]:
    """Grid-search the graph threshold for the best separation objective.

    Thetas run evenly from 0 to the largest off-diagonal cleaned
    correlation (never negative).  Each theta gets the same
    sector-seeded community detection; ties go to the smallest theta.
    When no theta yields a defined objective (single cluster or all
    singletons everywhere), the densest graph with at least two
    clusters is chosen and a warning logged.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    n = len(cleaned.tickers)
    offdiag = cleaned.matrix[~np.eye(n, dtype=bool)]
    upper = max(0.0, float(offdiag.max())) if n > 1 else 0.0
    grid = np.linspace(0.0, upper, grid_size) if upper > 0.0 else np.array([0.0])
    seed_part = sector_seed(cleaned.tickers, sectors)

    best = None  # (q_o, theta, partition, graph)
    fallback_two = None  # densest graph with >= 2 clusters
    fallback_any = None  # densest graph overall
    for theta in grid.tolist():
        g = build_graph(threshold(cleaned, theta))
        part = leiden(g, seed_part, resolution=resolution, rng_seed=rng_seed)
        if fallback_any is None or g.m > fallback_any[3].m:
            fallback_any = (None, theta, part, g)
        if part.n_clusters >= 2 and (fallback_two is None or g.m > fallback_two[3].m):
            fallback_two = (None, theta, part, g)
        try:
            q_o = intra_corr(part, cleaned) - inter_corr(part, cleaned)
        except ValueError:
            continue
        if best is None or q_o > best[0]:
            best = (q_o, theta, part, g)
    if best is None:
        log.warning(
            "objective undefined at every theta; falling back to the densest "
            "graph with a non-trivial partition"
        )
        best = fallback_two if fallback_two is not None else fallback_any
    _, theta_star, part, g = best
    return float(theta_star), part, _quality(part, cleaned, g)


def run_window(corr: CorrelationMatrix, sectors: dict[str, str],
               cfg: RunConfig) -> WindowResult:
    """Process one correlation window end to end."""
    bounds = mp_bounds(len(corr.tickers), corr.n_days)
    cleaned = clean(corr, bounds)
    theta_star, leiden_part, q_before = optimize_theta(
        cleaned, sectors, cfg.theta_grid_size, cfg.rng_seed, cfg.resolution
    )
    outcome = spectral.refine(leiden_part, cleaned, cfg.small_n, seed=cfg.rng_seed)
    final = _align(outcome.final, cleaned.tickers)
    g_star = build_graph(threshold(cleaned, theta_star))
    q_after = _quality(final, cleaned, g_star)
    q_sector = _quality(sector_seed(cleaned.tickers, sectors), cleaned, g_star)
    anchor = corr.window.anchor if corr.window is not None else date.min
    return WindowResult(
        anchor=anchor,
        theta_star=theta_star,
        quality_before=q_before,
        quality_after=q_after,
        quality_sector=q_sector,
        final=final,
        provenance=outcome.chosen,
        k_chosen=outcome.k_chosen,
        scores=stock_scores(final, cleaned),
        n_tickers=len(cleaned.tickers),
        excluded=corr.excluded,
    )


def _window_task(args):
    rp, window, sectors, cfg = args
    try:
        corr = pearson_correlation(rp, window)
        return ("ok", window.anchor.isoformat(), run_window(corr, sectors, cfg))
    except (DynmsaError, ValueError, AssertionError) as exc:
        return ("err", window.anchor.isoformat(), f"{type(exc).__name__}: {exc}")


def _fmt(value) -> str:
    """Deterministic text for CSV cells."""
    if isinstance(value, float):
        if math.isnan(value):
            return "NaN"
        return repr(value)
    if isinstance(value, date):
        return value.isoformat()
    if value is None:
        return ""
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as handle:
        handle.write(",".join(header) + "\n")
        for row in rows:
            handle.write(",".join(_fmt(v) for v in row) + "\n")


def _json_safe(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def _write_window_json(path: Path, result: WindowResult) -> None:
    q = result.quality_after
    clusters = [sorted(members) for members in result.final.clusters()]
    payload = {
        "anchor": result.anchor.isoformat(),
        "theta_star": result.theta_star,
        "clusters": clusters,
        "rho_intra": _json_safe(q.rho_intra),
        "rho_inter": _json_safe(q.rho_inter),
        "objective": _json_safe(q.objective),
        "modularity": _json_safe(q.modularity),
        "provenance": result.provenance,
    }
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")


def _paired_ttest(before: list[float], after: list[float]):
    """Two-sided paired t-test; returns (t, p, n) with NaN when undefined."""
    from scipy import stats

    pairs = [
        (b, a)
        for b, a in zip(before, after)
        if not (math.isnan(b) or math.isnan(a))
    ]
    if len(pairs) < 2:
        return float("nan"), float("nan"), len(pairs)
    b = np.array([x for x, _ in pairs])
    a = np.array([y for _, y in pairs])
    with np.errstate(invalid="ignore", divide="ignore"):
        t_stat, p_val = stats.ttest_rel(a, b)
    return float(t_stat), float(p_val), len(pairs)


def run_pipeline(prices_path, sectors_path, cfg: RunConfig) -> tuple[Path, list[tuple[str, str]]]:
    """Run the full pipeline; returns (out_dir, per-window failures).

    Fatal input problems raise; window-level failures are recorded in
    the manifest and the run continues with the remaining windows.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "windows").mkdir(exist_ok=True)

    panel, dropped = load_prices(prices_path, cfg.min_coverage)
    sectors = load_sectors(sectors_path, tickers=panel.tickers)
    rp = compute_returns(panel)
    windows = month_end_windows(rp, cfg.lookback_months)
    if not windows:
        raise DataError("panel too short for even one window")

    tasks = [(rp, w, sectors, cfg) for w in windows]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(_window_task, tasks))
    else:
        outcomes = [_window_task(t) for t in tasks]

    results: list[WindowResult] = []
    failures: list[tuple[str, str]] = []
    for status, anchor_iso, payload in outcomes:
        if status == "ok":
            results.append(payload)
        else:
            failures.append((anchor_iso, payload))
            log.error("window %s failed: %s", anchor_iso, payload)
    results.sort(key=lambda r: r.anchor)

    files: list[Path] = []

    for result in results:
        path = out / "windows" / f"{result.anchor.isoformat()}.json"
        _write_window_json(path, result)
        files.append(path)

    metric_rows = []
    for r in results:
        metric_rows.append([
            r.anchor, r.theta_star, r.n_tickers, len(r.excluded),
            r.quality_before.n_clusters, r.quality_after.n_clusters,
            r.quality_before.rho_intra, r.quality_after.rho_intra,
            r.quality_before.rho_inter, r.quality_after.rho_inter,
            r.quality_before.objective, r.quality_after.objective,
            r.quality_before.modularity, r.quality_after.modularity,
            r.quality_sector.rho_intra, r.quality_sector.rho_inter,
            r.quality_sector.objective, r.quality_sector.n_clusters,
            r.provenance, r.k_chosen,
        ])
    metrics_path = out / "metrics.csv"
    _write_csv(
        metrics_path,
        ["anchor", "theta_star", "n_tickers", "n_excluded",
         "n_clusters_before", "n_clusters_after",
         "rho_intra_before", "rho_intra_after",
         "rho_inter_before", "rho_inter_after",
         "objective_before", "objective_after",
         "modularity_before", "modularity_after",
         "rho_intra_sector", "rho_inter_sector", "objective_sector",
         "n_clusters_sector", "provenance", "k_chosen"],
        metric_rows,
    )
    files.append(metrics_path)

    ttest_rows = []
    for name, pick in (
        ("rho_intra", lambda q: q.rho_intra),
        ("rho_inter", lambda q: q.rho_inter),
        ("objective", lambda q: q.objective),
        ("modularity", lambda q: q.modularity),
    ):
        before = [pick(r.quality_before) for r in results]
        after = [pick(r.quality_after) for r in results]
        t_stat, p_val, n_pairs = _paired_ttest(before, after)
        valid = [
            (b, a) for b, a in zip(before, after)
            if not (math.isnan(b) or math.isnan(a))
        ]
        mean_b = sum(b for b, _ in valid) / len(valid) if valid else float("nan")
        mean_a = sum(a for _, a in valid) / len(valid) if valid else float("nan")
        ttest_rows.append([name, mean_b, mean_a, mean_a - mean_b, t_stat, p_val, n_pairs])
    ttest_path = out / "refinement_ttests.csv"
    _write_csv(
        ttest_path,
        ["metric", "mean_before", "mean_after", "mean_diff", "t_stat", "p_value", "n"],
        ttest_rows,
    )
    files.append(ttest_path)

    ari_rows = []
    if len(results) >= 2:
        series = []
        for prev, cur in zip(results, results[1:]):
            try:
                value = ari(prev.final, cur.final)
            except ValueError:
                value = float("nan")
            series.append((cur.anchor, value))
        values = np.array([v for _, v in series if not math.isnan(v)])
        mean = float(values.mean()) if values.size else float("nan")
        std = float(values.std()) if values.size else float("nan")
        for anchor, value in series:
            if math.isnan(value) or not values.size or std == 0.0:
                z = float("nan")
            else:
                z = (value - mean) / std
            ari_rows.append([anchor, value, z])
    ari_path = out / "ari.csv"
    _write_csv(ari_path, ["anchor", "ari_vs_prev", "zscore"], ari_rows)
    files.append(ari_path)

    counts_path = out / "cluster_counts.csv"
    _write_csv(
        counts_path,
        ["anchor", "n_clusters"],
        [[r.anchor, r.quality_after.n_clusters] for r in results],
    )
    files.append(counts_path)

    cocluster_rows = []
    cross_rows = []
    if results:
        cc = cocluster([r.final for r in results])
        for i in range(len(cc.tickers)):
            for j in range(i + 1, len(cc.tickers)):
                if cc.present[i, j] == 0:
                    continue
                cocluster_rows.append([
                    cc.tickers[i], cc.tickers[j],
                    float(cc.p[i, j]), int(cc.present[i, j]),
                ])
        for rec in cross_sector(cc, sectors):
            cross_rows.append([
                rec.ticker, rec.sector, rec.s_cross, rec.s_same, rec.s_total,
                rec.s_most, rec.p_cross, rec.p_most,
                rec.most_connected_sector, rec.flagged,
            ])
    cocluster_path = out / "cocluster.csv"
    _write_csv(
        cocluster_path,
        ["ticker_a", "ticker_b", "p_same_cluster", "n_windows_present"],
        cocluster_rows,
    )
    files.append(cocluster_path)
    cross_path = out / "cross_sector.csv"
    _write_csv(
        cross_path,
        ["ticker", "sector", "s_cross", "s_same", "s_total", "s_most",
         "p_cross", "p_most", "most_connected_sector", "flagged"],
        cross_rows,
    )
    files.append(cross_path)

    selection_rows = []
    kpi_rows = []
    equity_rows = []
    equity_header = ["date"]
    if results:
        mode_selections: dict[str, list[tuple[date, tuple[str, ...]]]] = {}
        for mode in cfg.selection_modes:
            sel_cfg = SelectionConfig(k=cfg.portfolio_k, small_n=cfg.small_n, mode=mode)
            sels = []
            for r in results:
                try:
                    picked = select(r.final, r.scores, sel_cfg)
                except DynmsaError as exc:
                    failures.append(
                        (r.anchor.isoformat(), f"selection[{mode}]: {exc}")
                    )
                    continue
                sels.append((r.anchor, picked))
                for ticker in picked:
                    selection_rows.append([r.anchor, mode, ticker])
            mode_selections[mode] = sels

        backtests = {}
        for mode, sels in mode_selections.items():
            if not sels:
                continue
            try:
                backtests[mode] = backtest(rp, sels, benchmark=panel.tickers)
            except DynmsaError as exc:
                failures.append(("backtest", f"{mode}: {exc}"))
        if backtests:
            reference = next(iter(backtests.values()))
            for mode in list(backtests):
                if backtests[mode].dates != reference.dates:
                    failures.append(("backtest", f"{mode}: holding days misaligned"))
                    del backtests[mode]
        if backtests:
            kpi_rows.append(dataclasses.astuple(
                kpis("benchmark", reference.benchmark_returns,
                     reference.benchmark_returns))[:10])
            for mode in cfg.selection_modes:
                if mode in backtests:
                    bt = backtests[mode]
                    kpi_rows.append(dataclasses.astuple(
                        kpis(mode, bt.portfolio_returns, bt.benchmark_returns))[:10])
            equity_header += ["benchmark_return", "benchmark_equity"]
            for mode in cfg.selection_modes:
                if mode in backtests:
                    equity_header += [f"{mode}_return", f"{mode}_equity"]
            for i, day in enumerate(reference.dates):
                row = [day, float(reference.benchmark_returns[i]),
                       float(reference.benchmark_equity[i])]
                for mode in cfg.selection_modes:
                    if mode in backtests:
                        bt = backtests[mode]
                        row += [float(bt.portfolio_returns[i]),
                                float(bt.portfolio_equity[i])]
                equity_rows.append(row)
    selections_path = out / "selections.csv"
    _write_csv(selections_path, ["anchor", "mode", "ticker"], selection_rows)
    files.append(selections_path)
    kpi_path = out / "kpis.csv"
    _write_csv(kpi_path, list(KPI_COLUMNS), [list(row) for row in kpi_rows])
    files.append(kpi_path)
    equity_path = out / "equity.csv"
    _write_csv(equity_path, equity_header, equity_rows)
    files.append(equity_path)

    manifest = {
        "status": "failed" if failures else "ok",
        "config": dataclasses.asdict(cfg),
        "n_windows": len(windows),
        "n_succeeded": len(results),
        "dropped_tickers": [
            {"ticker": d.ticker, "coverage": d.coverage, "reason": d.reason}
            for d in dropped
        ],
        "failures": [{"where": a, "error": e} for a, e in failures],
        "files": [],
    }
    for path in sorted(files):
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        manifest["files"].append({
            "path": str(path.relative_to(out)),
            "sha256": digest,
            "bytes": path.stat().st_size,
        })
    with open(out / "manifest.json", "w") as handle:
        json.dump(manifest, handle, indent=2)
        handle.write("\n")
    return out, failures
