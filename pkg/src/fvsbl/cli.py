"""Command-line entry point for the Monte Carlo sweep."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from .experiment import ExperimentConfig, emit_outputs, run_sweep

OUT_DIR_ENV = "FVSBL_OUT_DIR"


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fvsbl-sweep",
        description=(
            "Monte Carlo sweep over calibration-weight deviation levels, "
            "comparing channel estimation with and without antenna "
            "self-calibration."
        ),
    )
    parser.add_argument("--config", type=Path, help="YAML experiment config")
    parser.add_argument(
        "--sigma",
        type=float,
        action="append",
        help="weight std deviation; repeat to override the sigma grid",
    )
    parser.add_argument("--trials", type=int, help="trials per sigma value")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument(
        "--out-dir",
        type=Path,
        default=None,
        help=f"output directory (default: ${OUT_DIR_ENV} or ./results)",
    )
    parser.add_argument("--parallelism", type=int, help="worker process count")
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument(
        "--cal-only", action="store_true", help="run only the calibrated mode"
    )
    mode.add_argument(
        "--no-cal-only",
        action="store_true",
        help="run only the uncalibrated mode",
    )
    return parser


def config_from_args(args) -> ExperimentConfig:
    if args.config is not None:
        config = ExperimentConfig.from_yaml(args.config)
    else:
        config = ExperimentConfig.default()
    overrides = {}
    if args.sigma:
        overrides["sigma_grid"] = tuple(args.sigma)
    if args.trials is not None:
        overrides["trials_per_sigma"] = args.trials
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.parallelism is not None:
        overrides["parallelism"] = args.parallelism
    if args.cal_only:
        overrides["modes"] = ("cal",)
    elif args.no_cal_only:
        overrides["modes"] = ("nocal",)
    out_dir = args.out_dir or os.environ.get(OUT_DIR_ENV) or config.out_dir
    overrides["out_dir"] = Path(out_dir)
    return replace(config, **overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
    except (OSError, ValueError, TypeError, KeyError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return 2
    try:
        config.out_dir.mkdir(parents=True, exist_ok=True)
        if not os.access(config.out_dir, os.W_OK):
            raise OSError(f"output directory {config.out_dir} is not writable")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    records, rows = run_sweep(config)
    try:
        written = emit_outputs(records, config.out_dir)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    n_failed = sum(r.failed for r in records)
    print(f"completed {len(records)} runs ({n_failed} failed)")
    for row in rows:
        print(
            f"sigma={row['sigma']:.4g}: "
            f"OSPA_tau cal={_fmt(row['ospa_tau_d_cal'])} "
            f"nocal={_fmt(row['ospa_tau_d_nocal'])}, "
            f"OSPA_phi cal={_fmt(row['ospa_phi_cal'])} "
            f"nocal={_fmt(row['ospa_phi_nocal'])}"
        )
    for path in written:
        print(f"wrote {path}")
    return 0


def _fmt(value):
    return "-" if value is None else f"{value:.4g}"


if __name__ == "__main__":
    sys.exit(main())
