"""Command line interface.

    replicacs <predict|simulate|sweep-region|tune|spectrum>
        --config PATH [--out PATH] [--format csv|json] [--seed U64]
        [--threads K] [--strict] [--plot]

Exit codes: 0 success, 2 config error, 3 all points failed, 4 partial
failures (promoted to 3 under --strict).  --threads affects wall time only,
never results; --seed overrides the config's master seed.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, ExperimentConfig, read_config
from .records import column_order, write_records
from .runs import run_experiment

_SUBCOMMANDS = {
    "predict": "predict",
    "simulate": "simulate",
    "sweep-region": "sweep_region",
    "tune": "tune",
    "spectrum": "spectrum",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="replicacs",
        description="Asymptotic distortion predictions for RLS-based sparse "
                    "recovery, with finite-size validation")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", default=None, help="output table path")
        p.add_argument("--format", default=None, choices=("csv", "json"))
        p.add_argument("--seed", default=None, type=int,
                       help="override the config master seed")
        p.add_argument("--threads", default=1, type=int,
                       help="worker threads (wall time only, never results)")
        p.add_argument("--strict", action="store_true",
                       help="treat partial failures as fatal")
        p.add_argument("--plot", action="store_true",
                       help="render figures next to the output table")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    mode = _SUBCOMMANDS[args.command]
    try:
        cfg = read_config(args.config)
        if args.seed is not None:
            items = dict(cfg.items)
            items["seed"] = str(args.seed)
            cfg = ExperimentConfig(items, source=cfg.source)
        if cfg.mode != mode:
            raise ConfigError(
                f"config declares mode={cfg.mode!r} but the {args.command} "
                "subcommand was invoked")
        out_path = args.out or cfg.output_path
        fmt = args.format or cfg.output_format
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    records = run_experiment(cfg, threads=max(1, args.threads))

    statuses = [r.get("status") for r in records]
    n_failed = sum(1 for s in statuses if s == "failed")
    n_points = sum(1 for s in statuses if s in ("ok", "failed"))

    if out_path:
        write_records(records, out_path, fmt)
        print(f"wrote {len(records)} records to {out_path}")
        if args.plot:
            from .plots import render_figures
            for fig in render_figures(mode, records, out_path):
                print(f"wrote figure {fig}")
    else:
        cols = column_order(k for r in records for k in r)
        print(",".join(cols))
        for r in records:
            print(",".join("" if r.get(c) is None else str(r.get(c))
                           for c in cols))

    if n_points and n_failed == n_points:
        print(f"all {n_failed} points failed", file=sys.stderr)
        return 3
    if n_failed:
        print(f"{n_failed}/{n_points} points failed", file=sys.stderr)
        return 3 if args.strict else 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
