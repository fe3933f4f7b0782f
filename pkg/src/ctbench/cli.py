"""Command-line entry points.

    ctbench run   --config bench.json [--out DIR] [--jobs N] [--seed S]
    ctbench stats --data <candle dir> [--start ISO] [--end ISO] [--json PATH]
    ctbench rank  --in <finished run dir>

`run` exits 0 only if every cell succeeded.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .config import parse_config
from .errors import CtbenchError
from .market_data import descriptive_stats, load_ohlc, log_returns
from .runner import rerank, run_benchmark


def _cmd_run(args) -> int:
    config = parse_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    out_dir = args.out or config.out_dir
    if out_dir is None:
        print("error: no output directory (--out or config out_dir)", file=sys.stderr)
        return 2
    summary = run_benchmark(config, out_dir, jobs=args.jobs)
    print(f"cells ok={summary.ok_cells} failed={len(summary.failed)} "
          f"skipped={len(summary.skipped)} -> {summary.out_dir}")
    for failure in summary.failed:
        print(f"  failed: {failure['task']}/{failure['model']} tau={failure['tau']}: "
              f"{failure['detail']}", file=sys.stderr)
    return 0 if summary.all_ok else 1


def _cmd_stats(args) -> int:
    prices = load_ohlc(args.data, args.start, args.end)
    returns = log_returns(prices)
    stats = descriptive_stats(returns)
    print(f"{returns.n_assets} assets, {returns.n_hours} hourly returns "
          f"({returns.timestamps[0]} .. {returns.timestamps[-1]})")
    print(f"{'asset':<12} {'mean %/h':>10} {'vol %/h':>10}")
    for asset in returns.assets:
        print(f"{asset:<12} {stats.asset_mean_pct[asset]:>10.5f} "
              f"{stats.asset_vol_pct[asset]:>10.5f}")
    print(f"\n{'UTC hour':<9} {'mean %/h':>10} {'vol %/h':>10} {'samples':>9}")
    for hour in range(24):
        print(f"{hour:<9} {stats.hour_mean_pct[hour]:>10.5f} "
              f"{stats.hour_vol_pct[hour]:>10.5f} {stats.hour_counts[hour]:>9}")
    if args.json:
        payload = {
            "asset_mean_pct": stats.asset_mean_pct,
            "asset_vol_pct": stats.asset_vol_pct,
            "hour_mean_pct": stats.hour_mean_pct,
            "hour_vol_pct": stats.hour_vol_pct,
            "hour_counts": stats.hour_counts,
        }
        Path(args.json).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
        print(f"\nwrote {args.json}")
    return 0


def _cmd_rank(args) -> int:
    written = rerank(args.run_dir)
    for path in written:
        print(f"wrote {Path(args.run_dir) / path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctbench", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a benchmark config")
    run.add_argument("--config", required=True, help="JSON config path")
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--jobs", type=int, default=1, help="parallel cells")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.set_defaults(fn=_cmd_run)

    stats = sub.add_parser("stats", help="descriptive statistics of a candle dataset")
    stats.add_argument("--data", required=True, help="candle file or directory")
    stats.add_argument("--start", default=None)
    stats.add_argument("--end", default=None)
    stats.add_argument("--json", default=None, help="also dump the summary as JSON")
    stats.set_defaults(fn=_cmd_stats)

    rank = sub.add_parser("rank", help="re-aggregate rank tables from a finished run")
    rank.add_argument("--in", dest="run_dir", required=True, help="run output directory")
    rank.set_defaults(fn=_cmd_rank)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CtbenchError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
