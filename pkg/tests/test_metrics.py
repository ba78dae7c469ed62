"""Cluster quality metrics against brute-force references."""

import itertools

import numpy as np
import pytest

from dynmsa.community import Partition
from dynmsa.metrics import (
    ari,
    cocluster,
    cross_sector,
    inter_corr,
    intra_corr,
    objective,
)


class FakeCorr:
    def __init__(self, matrix, tickers):
        self.matrix = np.asarray(matrix, dtype=np.float64)
        self.tickers = tuple(tickers)


def part(nodes, labels):
    uniq = {}
    lab = np.array([uniq.setdefault(x, len(uniq)) for x in labels], dtype=np.int64)
    return Partition(nodes=tuple(nodes), labels=lab)


def random_case(seed, n):
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1, 1, (n, n))
    a = (a + a.T) / 2
    np.fill_diagonal(a, 1.0)
    tickers = tuple(f"S{i}" for i in range(n))
    labels = rng.integers(0, max(2, n // 2), n)
    # ensure at least two clusters and one of size >= 2
    labels[0] = labels[1] = 0
    labels[2] = 1
    return FakeCorr(a, tickers), part(tickers, labels.tolist())


def intra_brute(corr, p):
    vals = []
    labs = {t: l for t, l in zip(p.nodes, p.labels)}
    idx = {t: i for i, t in enumerate(corr.tickers)}
    for c in range(p.n_clusters):
        members = [t for t in p.nodes if labs[t] == c]
        if len(members) < 2:
            continue
        pair_vals = [corr.matrix[idx[u], idx[v]]
                     for u, v in itertools.combinations(members, 2)]
        vals.append(sum(pair_vals) / len(pair_vals))
    return sum(vals) / len(vals)


def inter_brute(corr, p):
    labs = {t: l for t, l in zip(p.nodes, p.labels)}
    idx = {t: i for i, t in enumerate(corr.tickers)}
    means = []
    for c1, c2 in itertools.combinations(range(p.n_clusters), 2):
        m1 = [t for t in p.nodes if labs[t] == c1]
        m2 = [t for t in p.nodes if labs[t] == c2]
        vals = [corr.matrix[idx[u], idx[v]] for u in m1 for v in m2]
        means.append(sum(vals) / len(vals))
    return sum(means) / len(means)


@pytest.mark.parametrize("seed", range(8))
def test_intra_inter_match_brute_force(seed):
    corr, p = random_case(seed, 9)
    assert intra_corr(p, corr) == pytest.approx(intra_brute(corr, p), abs=1e-12)
    assert inter_corr(p, corr) == pytest.approx(inter_brute(corr, p), abs=1e-12)
    assert objective(p, corr) == pytest.approx(
        intra_brute(corr, p) - inter_brute(corr, p), abs=1e-12)


def test_intra_requires_a_pair():
    corr = FakeCorr(np.eye(3), ("A", "B", "C"))
    singletons = part(corr.tickers, [0, 1, 2])
    with pytest.raises(ValueError):
        intra_corr(singletons, corr)


def test_inter_requires_two_clusters():
    corr = FakeCorr(np.eye(3), ("A", "B", "C"))
    single = part(corr.tickers, [0, 0, 0])
    with pytest.raises(ValueError):
        inter_corr(single, corr)


def test_ari_identical_is_one():
    rng = np.random.default_rng(0)
    nodes = tuple(f"N{i}" for i in range(30))
    labels = rng.integers(0, 5, 30).tolist()
    assert ari(part(nodes, labels), part(nodes, labels)) == 1.0


def test_ari_invariant_to_label_names():
    nodes = ("a", "b", "c", "d", "e")
    p1 = part(nodes, [0, 0, 1, 1, 2])
    p2 = part(nodes, ["x", "x", "y", "y", "z"])
    assert ari(p1, p2) == 1.0


def test_ari_crossed_pairs_hand_value():
    nodes = ("a", "b", "c", "d")
    p1 = part(nodes, [0, 0, 1, 1])
    p2 = part(nodes, [0, 1, 0, 1])
    assert ari(p1, p2) == pytest.approx(-0.5, abs=1e-12)


def test_ari_independent_near_zero():
    rng = np.random.default_rng(11)
    nodes = tuple(f"N{i}" for i in range(120))
    vals = []
    for _ in range(100):
        vals.append(ari(part(nodes, rng.integers(0, 6, 120).tolist()),
                        part(nodes, rng.integers(0, 6, 120).tolist())))
    assert abs(np.mean(vals)) < 0.05


def test_ari_uses_common_nodes_only():
    p1 = part(("a", "b", "c", "x"), [0, 0, 1, 1])
    p2 = part(("a", "b", "c", "y"), [1, 1, 0, 0])
    assert ari(p1, p2) == 1.0


def test_ari_degenerate_all_singletons():
    nodes = ("a", "b", "c")
    p = part(nodes, [0, 1, 2])
    assert ari(p, p) == 1.0


def test_cocluster_frequencies():
    nodes = ("A", "B", "C")
    seq = [part(nodes, [0, 0, 1]), part(nodes, [0, 1, 1]), part(nodes, [0, 0, 0])]
    cc = cocluster(seq)
    i = {t: k for k, t in enumerate(cc.tickers)}
    assert cc.p[i["A"], i["B"]] == pytest.approx(2 / 3)
    assert cc.p[i["A"], i["C"]] == pytest.approx(1 / 3)
    assert cc.p[i["B"], i["C"]] == pytest.approx(2 / 3)
    assert cc.window_count == 3


def test_cocluster_handles_changing_universe():
    seq = [part(("A", "B"), [0, 0]), part(("A", "C"), [0, 0])]
    cc = cocluster(seq)
    i = {t: k for k, t in enumerate(cc.tickers)}
    assert cc.present[i["B"], i["C"]] == 0
    assert np.isnan(cc.p[i["B"], i["C"]])
    assert cc.p[i["A"], i["B"]] == 1.0


def test_cross_sector_splits_by_agreement():
    nodes = ("A", "B", "C", "D")
    seq = [part(nodes, [0, 0, 0, 1]), part(nodes, [0, 0, 1, 1])]
    sectors = {"A": "Energy", "B": "Energy", "C": "Utilities", "D": "Utilities"}
    recs = {r.ticker: r for r in cross_sector(cocluster(seq), sectors)}
    # A co-clusters with B every window (same sector) and C half the time
    assert recs["A"].s_same == pytest.approx(1.0)
    assert recs["A"].s_cross == pytest.approx(0.5)
    assert recs["A"].most_connected_sector == "Utilities"
    assert recs["A"].p_cross == pytest.approx(0.5 / 1.5)
    assert not recs["A"].flagged
