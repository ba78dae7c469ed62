"""Command line interface.

Two subcommands: ``run`` executes the full pipeline on a price/sector
CSV pair, ``synth`` generates a planted-structure panel to run it on.
Flags override config-file values, which override defaults.
"""

import argparse
import dataclasses
import json
import logging
import sys
from datetime import date

from . import synth
from .errors import DynmsaError
from .pipeline import RunConfig, run_pipeline


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynmsa",
        description="Correlation-network clustering and diversification backtests",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the pipeline on price and sector files")
    run_p.add_argument("--prices", required=True, help="price CSV (date,ticker,close)")
    run_p.add_argument("--sectors", required=True, help="sector CSV (ticker,sector)")
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.add_argument("--config", help="JSON file with config fields")
    run_p.add_argument("--lookback", type=int, choices=(3, 6, 12, 24),
                       help="window length in months")
    run_p.add_argument("--seed", type=int, help="seed for all stochastic steps")
    run_p.add_argument("--mode", choices=("bottom", "top"),
                       help="restrict portfolio selection to one mode")
    run_p.add_argument("--grid", type=int, help="threshold grid size")
    run_p.add_argument("--small-n", type=int, help="small-community size cutoff")
    run_p.add_argument("--k", type=int, help="portfolio size")
    run_p.add_argument("--min-coverage", type=float, help="ticker coverage threshold")
    run_p.add_argument("--workers", type=int, help="parallel window workers")
    run_p.add_argument("--resolution", type=float, help="community detection resolution")

    synth_p = sub.add_parser("synth", help="generate a synthetic planted panel")
    synth_p.add_argument("--months", type=int, required=True)
    synth_p.add_argument("--stocks", type=int, required=True)
    synth_p.add_argument("--blocks", type=int, required=True)
    synth_p.add_argument("--out", required=True, help="output directory")
    synth_p.add_argument("--seed", type=int, default=0)
    synth_p.add_argument("--start", default="2018-01-01", help="first month (ISO date)")
    synth_p.add_argument("--shuffle-sectors", type=float, default=0.0,
                         help="fraction of tickers given a wrong sector")
    synth_p.add_argument("--shock-month", type=int, default=None,
                         help="0-based month index for a market-wide shock")
    synth_p.add_argument("--shock-rho", type=float, default=0.9,
                         help="pairwise correlation during the shock month")
    synth_p.add_argument("--shock-vol", type=float, default=3.0,
                         help="volatility multiplier during the shock month")
    synth_p.add_argument("--rho-in", type=float, default=synth.RHO_IN,
                         help="within-block correlation")
    synth_p.add_argument("--rho-out", type=float, default=synth.RHO_OUT,
                         help="across-block correlation")
    synth_p.add_argument("--blocks-per-sector", type=int, default=1,
                         help="how many return blocks share one sector label")
    return parser


_FLAG_FIELDS = {
    "lookback": "lookback_months",
    "grid": "theta_grid_size",
    "small_n": "small_n",
    "k": "portfolio_k",
    "seed": "rng_seed",
    "min_coverage": "min_coverage",
    "workers": "workers",
    "resolution": "resolution",
}


def _load_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if args.config:
        with open(args.config) as handle:
            raw = json.load(handle)
        if not isinstance(raw, dict):
            raise DynmsaError("config file must hold a JSON object")
        known = {f.name for f in dataclasses.fields(RunConfig)}
        unknown = set(raw) - known
        if unknown:
            raise DynmsaError(f"unknown config keys: {', '.join(sorted(unknown))}")
        values.update(raw)
    for flag, field in _FLAG_FIELDS.items():
        flag_value = getattr(args, flag)
        if flag_value is not None:
            values[field] = flag_value
    if args.mode is not None:
        values["selection_modes"] = (args.mode,)
    elif "selection_modes" in values:
        values["selection_modes"] = tuple(values["selection_modes"])
    values["out_dir"] = args.out
    try:
        return RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise DynmsaError(f"bad configuration: {exc}") from exc


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = _load_config(args)
            out, failures = run_pipeline(args.prices, args.sectors, cfg)
            if failures:
                print(f"completed with {len(failures)} failure(s); see "
                      f"{out / 'manifest.json'}", file=sys.stderr)
                return 1
            print(f"wrote {out}")
            return 0
        if args.command == "synth":
            panel = synth.generate(
                months=args.months,
                stocks=args.stocks,
                blocks=args.blocks,
                seed=args.seed,
                start=date.fromisoformat(args.start),
                shuffle_sectors=args.shuffle_sectors,
                shock_month=args.shock_month,
                shock_rho=args.shock_rho,
                shock_vol=args.shock_vol,
                rho_in=args.rho_in,
                rho_out=args.rho_out,
                blocks_per_sector=args.blocks_per_sector,
            )
            paths = synth.write_panel(panel, args.out)
            print(f"wrote {paths['prices'].parent}")
            return 0
    except DynmsaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def entrypoint() -> None:
    sys.exit(main())
