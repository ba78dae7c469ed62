"""Shared fixtures: synthetic panels and full pipeline runs.

The heavy runs are session-scoped so the acceptance checks and the
unit tests can share them instead of regenerating panels per test.
"""

import csv
import json
import logging
import time
from pathlib import Path

import numpy as np
import pytest

from dynmsa import synth
from dynmsa.community import Partition
from dynmsa.pipeline import RunConfig, run_pipeline

logging.getLogger("dynmsa").setLevel(logging.ERROR)


def partition_from(tickers, mapping):
    uniq = {}
    labels = np.array([uniq.setdefault(mapping[t], len(uniq)) for t in tickers],
                      dtype=np.int64)
    return Partition(nodes=tuple(tickers), labels=labels)


def read_csv_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def read_window_files(run_dir):
    out = {}
    for f in sorted(Path(run_dir, "windows").glob("*.json")):
        with open(f) as fh:
            out[f.stem] = json.load(fh)
    return out


@pytest.fixture(scope="session")
def planted_panel(tmp_path_factory):
    """85 months, 120 stocks, 6 equal blocks, sectors matching blocks."""
    panel = synth.generate(months=85, stocks=120, blocks=6, seed=7)
    paths = synth.write_panel(panel, tmp_path_factory.mktemp("planted"))
    return paths


@pytest.fixture(scope="session")
def planted_run(planted_panel, tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("planted_run")
    t0 = time.perf_counter()
    out, failures = run_pipeline(
        planted_panel["prices"], planted_panel["sectors"],
        RunConfig(lookback_months=3, out_dir=out_dir, portfolio_k=20),
    )
    elapsed = time.perf_counter() - t0
    return {"dir": Path(out), "failures": failures, "paths": planted_panel,
            "elapsed": elapsed}


@pytest.fixture(scope="session")
def shuffled_run(tmp_path_factory):
    """Same geometry with 30% of the sector labels reassigned."""
    panel = synth.generate(months=85, stocks=120, blocks=6, seed=7,
                           shuffle_sectors=0.3)
    paths = synth.write_panel(panel, tmp_path_factory.mktemp("shuffled"))
    out_dir = tmp_path_factory.mktemp("shuffled_run")
    out, failures = run_pipeline(
        paths["prices"], paths["sectors"],
        RunConfig(lookback_months=3, out_dir=out_dir, portfolio_k=20),
    )
    return {"dir": Path(out), "failures": failures, "paths": paths}


@pytest.fixture(scope="session")
def shock_run(tmp_path_factory):
    """Panel with a one-month market-wide correlation and volatility shock.

    Ten return blocks share two sector labels, so the sector prior is
    much coarser than the block structure the normal windows resolve.
    """
    panel = synth.generate(months=85, stocks=60, blocks=10, seed=13,
                           shock_month=40, shock_rho=0.9, shock_vol=3.5,
                           rho_in=0.8, rho_out=0.05, blocks_per_sector=5)
    paths = synth.write_panel(panel, tmp_path_factory.mktemp("shock"))
    out_dir = tmp_path_factory.mktemp("shock_run")
    out, failures = run_pipeline(
        paths["prices"], paths["sectors"],
        RunConfig(lookback_months=3, out_dir=out_dir, portfolio_k=20),
    )
    return {"dir": Path(out), "failures": failures, "paths": paths,
            "shock_anchor_prefix": "2021-05"}


@pytest.fixture(scope="session")
def small_panel(tmp_path_factory):
    """Quick 10-month panel for CLI and determinism checks."""
    panel = synth.generate(months=10, stocks=24, blocks=4, seed=3)
    return synth.write_panel(panel, tmp_path_factory.mktemp("small"))
