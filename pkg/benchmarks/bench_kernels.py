"""Compiled-vs-pure kernel timings.

Runs each hot kernel on both backends in one process and prints a
table with speedups, plus a full community-detection pass through the
public API under each backend. Usage::

    python benchmarks/bench_kernels.py [--repeat 3]

The compiled column is skipped (with a note) when the extension is not
importable in this environment.
"""

import argparse
import os
import time

import numpy as np

from dynmsa._kernels import get_backend, jacobi_schedule
from dynmsa.community import Partition, build_graph, leiden
from dynmsa.rmtclean import ThresholdGraphMatrix

JACOBI_REL_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


def time_call(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def random_corr(n, seed):
    rng = np.random.default_rng(seed)
    c = np.corrcoef(rng.normal(size=(4 * n, n)), rowvar=False)
    np.fill_diagonal(c, 1.0)
    return c


def random_graph_csr(n, p, seed):
    rng = np.random.default_rng(seed)
    a = (rng.random((n, n)) < p).astype(np.uint8)
    a = np.triu(a, 1)
    a = a + a.T
    tickers = tuple(f"N{i}" for i in range(n))
    g = build_graph(ThresholdGraphMatrix(matrix=a, theta=0.0, tickers=tickers))
    return g


def bench_jacobi(backend, n, repeat):
    c = random_corr(n, 7)
    pp, qq, off = jacobi_schedule(n)

    def run():
        backend.jacobi_eigh(c, pp, qq, off, JACOBI_REL_TOL, JACOBI_MAX_SWEEPS)

    return time_call(run, repeat)


def bench_lloyd(backend, repeat):
    rng = np.random.default_rng(11)
    x = rng.normal(size=(600, 8))
    c0 = x[rng.choice(600, size=6, replace=False)].copy()

    def run():
        backend.lloyd(x, c0, 100)

    return time_call(run, repeat)


def bench_local_move(backend, repeat):
    g = random_graph_csr(400, 0.05, 3)
    labels = np.arange(g.n, dtype=np.int64)
    weights = np.ones(len(g.indices), dtype=np.float64)
    sigma = g.degrees.astype(np.float64)

    def run():
        backend.local_move(g.indptr, g.indices, weights, sigma,
                           labels.copy(), float(g.m), 1.0, 12345)

    return time_call(run, repeat)


def bench_refine(backend, repeat):
    g = random_graph_csr(400, 0.05, 3)
    coarse = (np.arange(g.n, dtype=np.int64) // 40)
    weights = np.ones(len(g.indices), dtype=np.float64)
    sigma = g.degrees.astype(np.float64)

    def run():
        backend.refine(g.indptr, g.indices, weights, sigma, coarse,
                       float(g.m), 1.0, 98765)

    return time_call(run, repeat)


def bench_full_leiden(repeat):
    """Whole community detection via the public API, per backend."""
    g = random_graph_csr(300, 0.04, 21)
    seed = Partition(nodes=g.tickers,
                     labels=(np.arange(g.n, dtype=np.int64) % 6))
    out = {}
    import importlib

    import dynmsa._kernels as kmod
    import dynmsa.community as cmod

    for name, flag in (("pure", "1"), ("compiled", "0")):
        if name == "compiled" and get_backend("compiled") is None:
            out[name] = None
            continue
        os.environ["DYNMSA_PURE_PYTHON"] = flag
        importlib.reload(kmod)
        importlib.reload(cmod)
        g2 = cmod.build_graph(ThresholdGraphMatrix(
            matrix=_dense_from(g), theta=0.0, tickers=g.tickers))
        seed2 = cmod.Partition(nodes=g2.tickers, labels=seed.labels.copy())

        def run():
            cmod.leiden(g2, seed2, rng_seed=5, restarts=4)

        out[name] = time_call(run, repeat)
    os.environ.pop("DYNMSA_PURE_PYTHON", None)
    importlib.reload(kmod)
    importlib.reload(cmod)
    return out


def _dense_from(g):
    a = np.zeros((g.n, g.n), dtype=np.uint8)
    for u in range(g.n):
        for v in g.indices[g.indptr[u]:g.indptr[u + 1]]:
            a[u, v] = 1
    return a


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=3,
                        help="timing repetitions; best of N is reported")
    args = parser.parse_args()

    pure = get_backend("pure")
    compiled = get_backend("compiled")
    if compiled is None:
        print("note: compiled extension not importable; pure timings only\n")

    rows = []
    cases = [
        ("jacobi_eigh n=120", lambda b: bench_jacobi(b, 120, args.repeat)),
        ("jacobi_eigh n=200", lambda b: bench_jacobi(b, 200, args.repeat)),
        ("lloyd 600x8 k=6", lambda b: bench_lloyd(b, args.repeat)),
        ("local_move n=400", lambda b: bench_local_move(b, args.repeat)),
        ("refine n=400", lambda b: bench_refine(b, args.repeat)),
    ]
    for label, fn in cases:
        t_pure = fn(pure)
        t_comp = fn(compiled) if compiled is not None else None
        rows.append((label, t_pure, t_comp))

    full = bench_full_leiden(args.repeat)
    rows.append(("leiden n=300 (public API)", full["pure"], full["compiled"]))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'pure':>10}  {'compiled':>10}  {'speedup':>8}")
    for label, t_pure, t_comp in rows:
        if t_comp is None:
            print(f"{label:<{width}}  {t_pure * 1e3:>8.2f}ms  {'n/a':>10}  {'n/a':>8}")
        else:
            print(f"{label:<{width}}  {t_pure * 1e3:>8.2f}ms  "
                  f"{t_comp * 1e3:>8.2f}ms  {t_pure / t_comp:>7.1f}x")


if __name__ == "__main__":
    main()
