"""Acceptance suite: one test per published criterion.

Run with ``pytest tests/test_acceptance.py -v`` to get one pass/fail
line per criterion. Each test states its tolerance inline; the heavy
pipeline runs come from session fixtures so the suite shares them with
the unit tests.
"""

import itertools
import math
import statistics
import time
from datetime import date
from pathlib import Path

import numpy as np
import pytest

from conftest import partition_from, read_csv_rows, read_window_files
from dynmsa import numerics
from dynmsa.community import Partition, build_graph, leiden, modularity
from dynmsa.ingest import (
    CorrelationMatrix,
    compute_returns,
    load_prices,
    month_end_windows,
)
from dynmsa.metrics import ari, inter_corr, intra_corr
from dynmsa.pipeline import RunConfig, run_pipeline
from dynmsa.portfolio import (
    SelectionConfig,
    kpis,
    portfolio_risk,
    select,
    stock_scores,
)
from dynmsa.rmtclean import ThresholdGraphMatrix, clean, mp_bounds
from dynmsa.spectral import similarity


class FakeCorr:
    def __init__(self, matrix, tickers):
        self.matrix = np.asarray(matrix, dtype=np.float64)
        self.tickers = tuple(tickers)


def contiguous_partition(nodes, raw_labels):
    uniq = {}
    lab = np.array([uniq.setdefault(int(x), len(uniq)) for x in raw_labels],
                   dtype=np.int64)
    return Partition(nodes=tuple(nodes), labels=lab)


def corr_from_data(n, t, rng):
    data = rng.normal(size=(t, n))
    c = np.corrcoef(data, rowvar=False)
    c = np.clip((c + c.T) / 2, -1.0, 1.0)
    np.fill_diagonal(c, 1.0)
    return c


# 1 ------------------------------------------------------------------


def test_criterion_01_window_counts(planted_panel):
    panel, _ = load_prices(planted_panel["prices"], 0.95)
    rp = compute_returns(panel)
    expected = {3: 82, 6: 79, 12: 73, 24: 61}
    t0 = time.perf_counter()
    got = {n: len(month_end_windows(rp, n)) for n in (3, 6, 12, 24)}
    elapsed = time.perf_counter() - t0
    assert got == expected
    assert elapsed < 1.0


# 2 ------------------------------------------------------------------


def test_criterion_02_mp_noise_filter():
    n_assets, n_days, n_seeds = 200, 800, 20
    bounds = mp_bounds(n_assets, n_days)
    t0 = time.perf_counter()
    fractions = []
    for seed in range(n_seeds):
        rng = np.random.default_rng(seed)
        c = np.corrcoef(rng.normal(size=(n_days, n_assets)), rowvar=False)
        ev = numerics.eig_sym(c).eigenvalues
        inside = (ev >= bounds.lambda_minus) & (ev <= bounds.lambda_plus)
        fractions.append(inside.mean())
    elapsed = time.perf_counter() - t0
    assert sum(fractions) / n_seeds >= 0.95
    assert elapsed < 30.0


# 3 ------------------------------------------------------------------


def test_criterion_03_trace_conservation():
    rng = np.random.default_rng(2024)
    for trial in range(50):
        n = int(rng.integers(10, 60))
        t = int(rng.integers(n + 5, 4 * n))
        c = corr_from_data(n, t, rng)
        corr = CorrelationMatrix(matrix=c, tickers=tuple(f"S{i}" for i in range(n)),
                                 n_days=t, window=None, excluded=())
        cleaned = clean(corr, mp_bounds(n, t))
        sum_before = float(np.linalg.eigvalsh(c).sum())
        sum_after = float(np.linalg.eigvalsh(cleaned.matrix).sum())
        assert abs(sum_after - sum_before) <= 1e-8 * abs(sum_before), trial


# 4 ------------------------------------------------------------------


def test_criterion_04_planted_recovery(planted_run):
    truth_rows = read_csv_rows(planted_run["paths"]["truth"])
    truth = {r["ticker"]: r["block"] for r in truth_rows}
    windows = read_window_files(planted_run["dir"])
    assert windows, "pipeline produced no windows"
    hits = 0
    for payload in windows.values():
        members = {}
        for cid, cluster in enumerate(payload["clusters"]):
            for t in cluster:
                members[t] = cid
        tickers = sorted(members)
        got = partition_from(tickers, members)
        want = partition_from(tickers, {t: truth[t] for t in tickers})
        if ari(got, want) >= 0.9:
            hits += 1
    assert hits / len(windows) >= 0.9
    assert planted_run["elapsed"] < 300.0


# 5 ------------------------------------------------------------------


def test_criterion_05_keep_best(planted_run, shuffled_run, shock_run):
    for run in (planted_run, shuffled_run, shock_run):
        rows = read_csv_rows(run["dir"] / "metrics.csv")
        assert rows
        for row in rows:
            after = float(row["objective_after"])
            before = float(row["objective_before"])
            assert after >= before, row["anchor"]


# 6 ------------------------------------------------------------------


def test_criterion_06_sector_dominance(shuffled_run):
    rows = read_csv_rows(shuffled_run["dir"] / "metrics.csv")
    ours = [float(r["objective_after"]) for r in rows]
    sector = [float(r["objective_sector"]) for r in rows]
    assert len(ours) == len(sector) and ours
    margin = sum(ours) / len(ours) - sum(sector) / len(sector)
    assert margin > 0.05


# 7 ------------------------------------------------------------------


def test_criterion_07_modularity_monotone():
    rng = np.random.default_rng(404)
    for trial in range(100):
        n = int(rng.integers(6, 30))
        p = float(rng.uniform(0.1, 0.6))
        a = (rng.random((n, n)) < p).astype(np.uint8)
        a = np.triu(a, 1)
        a = a + a.T
        tickers = tuple(f"N{i}" for i in range(n))
        g = build_graph(ThresholdGraphMatrix(matrix=a, theta=0.0, tickers=tickers))
        seed = contiguous_partition(tickers, rng.integers(0, min(5, n), size=n))
        trace: list = []
        final = leiden(g, seed, rng_seed=trial, trace=trace)
        for run_trace in trace:
            for q0, q1 in zip(run_trace, run_trace[1:]):
                assert q1 >= q0, (trial, run_trace)
        assert modularity(g, final) >= modularity(g, seed), trial


# 8 ------------------------------------------------------------------


def test_criterion_08_brute_force_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(88)

    # intra / inter means on every 2-partition of 8 names
    n = 8
    c = corr_from_data(n, 40, rng)
    corr = FakeCorr(c, [f"S{i}" for i in range(n)])
    for mask in range(1, 2 ** (n - 1)):
        labels = [(mask >> i) & 1 for i in range(n)]
        if len(set(labels)) < 2:
            continue
        p = contiguous_partition(corr.tickers, labels)
        groups = [[i for i in range(n) if labels[i] == g] for g in (0, 1)]
        intra_means = []
        for members in groups:
            if len(members) < 2:
                continue
            vals = [c[i, j] for i, j in itertools.combinations(members, 2)]
            intra_means.append(sum(vals) / len(vals))
        cross = [c[i, j] for i in groups[0] for j in groups[1]]
        if intra_means:
            want_intra = sum(intra_means) / len(intra_means)
            assert abs(intra_corr(p, corr) - want_intra) <= 1e-12
        want_inter = sum(cross) / len(cross)
        assert abs(inter_corr(p, corr) - want_inter) <= 1e-12

    # similarity of a unit grouping against raw pair means
    units = (("S0", "S1", "S2"), ("S3", "S4"), ("S5",), ("S6", "S7"))
    sim = similarity(units, corr)
    for ui, uj in itertools.combinations_with_replacement(range(len(units)), 2):
        if ui == uj:
            members = units[ui]
            if len(members) == 1:
                want = 1.0
            else:
                vals = [c[corr.tickers.index(a)][corr.tickers.index(b)]
                        for a, b in itertools.combinations(members, 2)]
                want = sum(vals) / len(vals)
        else:
            vals = [c[corr.tickers.index(a)][corr.tickers.index(b)]
                    for a in units[ui] for b in units[uj]]
            want = sum(vals) / len(vals)
        assert abs(sim.matrix[ui, uj] - want) <= 1e-12

    # ARI against explicit pair counting
    nodes = tuple(f"X{i}" for i in range(10))
    for _ in range(20):
        la = rng.integers(0, 3, size=10)
        lb = rng.integers(0, 3, size=10)
        pa = contiguous_partition(nodes, la)
        pb = contiguous_partition(nodes, lb)
        both = same_a = same_b = 0
        total = 0
        for i, j in itertools.combinations(range(10), 2):
            total += 1
            sa = la[i] == la[j]
            sb = lb[i] == lb[j]
            both += sa and sb
            same_a += sa
            same_b += sb
        expected = same_a * same_b / total
        max_index = (same_a + same_b) / 2
        if max_index == expected:
            want = 1.0
        else:
            want = (both - expected) / (max_index - expected)
        assert abs(ari(pa, pb) - want) <= 1e-12

    # portfolio variance from the definition
    for n_assets in (3, 7, 10):
        w = rng.dirichlet(np.ones(n_assets))
        v = rng.uniform(0.05, 0.6, n_assets)
        cc = corr_from_data(n_assets, 50, rng)
        want = sum(
            w[i] * w[j] * v[i] * v[j] * cc[i, j]
            for i in range(n_assets) for j in range(n_assets)
        )
        assert abs(portfolio_risk(w, v, cc) - want) <= 1e-12

    assert time.perf_counter() - t0 < 10.0


# 9 ------------------------------------------------------------------


def _partitions_of(n):
    """All set partitions of range(n) as restricted growth strings."""
    out = []

    def grow(prefix, k):
        if len(prefix) == n:
            out.append(prefix)
            return
        for v in range(k + 1):
            grow(prefix + [v], max(k, v + 1))

    grow([0], 1)
    return np.asarray(out, dtype=np.int64)


def _q_all(labels_all, a, deg, m):
    same = labels_all[:, :, None] == labels_all[:, None, :]
    intra = np.einsum("pij,ij->p", same, a.astype(np.float64)) / (2.0 * m)
    onehot = labels_all[:, :, None] == np.arange(labels_all.shape[1])[None, None, :]
    d = np.einsum("pnc,n->pc", onehot, deg.astype(np.float64))
    return intra - ((d / (2.0 * m)) ** 2).sum(axis=1)


def test_criterion_09_small_graph_optimality():
    n = 8
    all_parts = _partitions_of(n)  # 4140 candidate partitions
    rng = np.random.default_rng(12345)
    tickers = tuple(f"N{i}" for i in range(n))
    singleton = Partition(nodes=tickers, labels=np.arange(n, dtype=np.int64))
    wins = 0
    for trial in range(100):
        a = (rng.random((n, n)) < 0.5).astype(np.uint8)
        a = np.triu(a, 1)
        a = a + a.T
        m = int(a.sum() // 2)
        if m == 0:
            wins += 1
            continue
        deg = a.sum(axis=1)
        q_opt = float(_q_all(all_parts, a, deg, m).max())
        g = build_graph(ThresholdGraphMatrix(matrix=a, theta=0.0, tickers=tickers))
        final = leiden(g, singleton, rng_seed=trial, restarts=12)
        labels = np.asarray(final.labels, dtype=np.int64)[None, :]
        q_leiden = float(_q_all(labels, a, deg, m)[0])
        if q_leiden >= q_opt - 1e-12:
            wins += 1
    assert wins >= 95


# 10 -----------------------------------------------------------------


def test_criterion_10_ari_axioms():
    nodes = tuple(f"X{i}" for i in range(60))
    rng = np.random.default_rng(55)
    labels = rng.integers(0, 4, size=60)
    p = contiguous_partition(nodes, labels)
    q = contiguous_partition(nodes, (labels + 2) % 4)
    assert ari(p, q) == 1.0
    values = []
    for _ in range(100):
        la = rng.integers(0, 4, size=60)
        lb = rng.integers(0, 4, size=60)
        values.append(ari(contiguous_partition(nodes, la),
                          contiguous_partition(nodes, lb)))
    assert abs(sum(values) / len(values)) < 0.05


# 11 -----------------------------------------------------------------


def _selection_fixture():
    sizes = [3, 10, 12]
    tickers, labels = [], []
    for cid, s in enumerate(sizes):
        for j in range(s):
            tickers.append(f"C{cid}_{j:02d}")
            labels.append(cid)
    n = len(tickers)
    c = np.full((n, n), 0.1)
    start = 0
    for s in sizes:
        c[start:start + s, start:start + s] = 0.5
        for j in range(s):
            c[start + j, start:start + s] += 0.01 * j
        start += s
    c = (c + c.T) / 2
    np.fill_diagonal(c, 1.0)
    uniq = {}
    lab = np.array([uniq.setdefault(x, len(uniq)) for x in labels], dtype=np.int64)
    return Partition(nodes=tuple(tickers), labels=lab), FakeCorr(c, tickers)


def test_criterion_11_selection_contract():
    p, corr = _selection_fixture()
    cfg = SelectionConfig(k=8, small_n=5, mode="bottom")
    first = select(p, stock_scores(p, corr), cfg)
    second = select(p, stock_scores(p, corr), cfg)
    assert first == second
    assert len(first) == 8
    assert all(f"C0_{j:02d}" in first for j in range(3))
    assert sum(t.startswith("C1_") for t in first) == 2
    assert sum(t.startswith("C2_") for t in first) == 3


# 12 -----------------------------------------------------------------

# 24-observation fixture generated once from a seeded RNG; expected
# figures recomputed from the formula definitions in plain Python and
# frozen here
KPI_RP = [0.0089, -0.0026, -0.0018, 0.0183, -0.0264, -0.0091, 0.0009,
          0.003, 0.0079, 0.0029, -0.0204, -0.0039, -0.029, -0.0073,
          0.0024, 0.0149, 0.0032, -0.0, -0.013, 0.0013, 0.0209,
          -0.0115, 0.0056, 0.0025]
KPI_RB = [0.0042, -0.0039, -0.0023, 0.0124, -0.0191, 0.002, 0.0024,
          -0.0035, 0.0042, 0.0118, -0.0091, 0.0013, -0.0111, -0.0053,
          0.0008, 0.0044, -0.0066, -0.0089, -0.0095, 0.003, 0.007,
          0.0052, 0.0043, 0.0114]
KPI_EXPECTED = {
    "sharpe": -1.5201144860171427,
    "sortino": -1.8904919364986223,
    "max_dd": -0.07919840954746926,
    "beta": 1.1629718640960647,
    "alpha": -0.2793150975922575,
}


def test_criterion_12_kpi_oracle():
    rec = kpis("x", np.array(KPI_RP), np.array(KPI_RB))
    for field, want in KPI_EXPECTED.items():
        assert abs(getattr(rec, field) - want) <= 1e-9, field
    ident = kpis("bench", np.array(KPI_RB), np.array(KPI_RB))
    assert abs(ident.beta - 1.0) <= 1e-12
    assert abs(ident.r_squared - 1.0) <= 1e-12
    assert abs(ident.alpha) <= 1e-12


# 13 -----------------------------------------------------------------


def test_criterion_13_regime_shock(shock_run):
    prefix = shock_run["shock_anchor_prefix"]  # first shocked anchor month
    year, month = map(int, prefix.split("-"))
    affected = {prefix}
    for _ in range(2):  # a 3-month lookback keeps the shock in view
        month += 1
        if month > 12:
            month, year = 1, year + 1
        affected.add(f"{year:04d}-{month:02d}")

    counts = read_csv_rows(shock_run["dir"] / "cluster_counts.csv")
    shock_counts = [int(r["n_clusters"]) for r in counts
                    if r["anchor"][:7] == prefix]
    normal_counts = [int(r["n_clusters"]) for r in counts
                     if r["anchor"][:7] not in affected]
    assert len(shock_counts) == 1
    assert normal_counts
    median_normal = statistics.median(normal_counts)
    assert shock_counts[0] <= 0.5 * median_normal

    ari_rows = read_csv_rows(shock_run["dir"] / "ari.csv")
    z_shock = [float(r["zscore"]) for r in ari_rows
               if r["anchor"][:7] in affected and r["zscore"] != "NaN"]
    assert z_shock
    assert min(z_shock) <= -2.0


# 14 -----------------------------------------------------------------


def test_criterion_14_determinism(small_panel, tmp_path):
    out_dir = tmp_path / "rerun"

    def run_once():
        run_pipeline(small_panel["prices"], small_panel["sectors"],
                     RunConfig(lookback_months=3, out_dir=out_dir,
                               portfolio_k=8, rng_seed=11))
        return {
            p.relative_to(out_dir): p.read_bytes()
            for p in sorted(out_dir.rglob("*")) if p.is_file()
        }

    first = run_once()
    second = run_once()
    assert first.keys() == second.keys()
    for rel in first:
        assert first[rel] == second[rel], rel
