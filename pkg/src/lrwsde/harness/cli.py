"""``lrwsde`` command line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import sys
from pathlib import Path

from .. import __version__
from . import experiments as ex
from .config import EXPERIMENTS, PRECISIONS, ConfigError, ExperimentConfig, default_config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lrwsde", description="Lattice random walk SDE experiments")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", type=Path, help="JSON config; omitted keys take the full-scale defaults")
    parser.add_argument("--seed", type=int, help="override base_seed")
    parser.add_argument("--scale", type=float, default=1.0, help="multiply step, seed and replica counts")
    parser.add_argument("--out", type=Path, help="CSV output path (a .json sidecar is written next to it)")
    parser.add_argument("--precision", choices=PRECISIONS, help="run at a single precision")
    parser.add_argument("--workers", type=int, help="worker processes")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else default_config(args.experiment)
    if cfg.experiment != args.experiment:
        raise ConfigError(f"config is for {cfg.experiment!r}, not {args.experiment!r}")
    changes = {}
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if args.precision is not None:
        changes["precisions"] = [args.precision]
    if args.out is not None:
        changes["out"] = str(args.out)
    if args.workers is not None:
        changes["workers"] = args.workers
    cfg = dataclasses.replace(cfg, **changes).scaled(args.scale)
    cfg.validate()
    return cfg


def run(cfg: ExperimentConfig) -> tuple[list[str], list[dict], dict]:
    summary = {}
    if cfg.experiment == "ou-grid":
        rows = ex.run_ou_grid(cfg)
    elif cfg.experiment == "ou-quant":
        rows = ex.run_ou_quantisation(cfg)
    elif cfg.experiment == "poisson":
        rows = ex.run_poisson(cfg)
    elif cfg.experiment == "converge":
        rows, slopes = ex.run_convergence(cfg)
        summary["slopes"] = slopes
    else:
        columns, rows = ex.run_simulate(cfg)
        return columns, rows, summary
    return ex.COLUMNS[cfg.experiment], rows, summary


def render_csv(columns: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([ex.fmt_value(row[c]) for c in columns])
    return buf.getvalue()


def sidecar(cfg: ExperimentConfig, summary: dict) -> str:
    doc = {"version": __version__, "config": cfg.to_dict(), "summary": summary}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"lrwsde: config error: {exc}", file=sys.stderr)
        return 2
    try:
        columns, rows, summary = run(cfg)
    except Exception as exc:  # noqa: BLE001 - reported through the exit code
        print(f"lrwsde: {cfg.experiment} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    text = render_csv(columns, rows)
    if cfg.out:
        out = Path(cfg.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        out.with_suffix(".json").write_text(sidecar(cfg, summary))
    else:
        sys.stdout.write(text)
    for name, slope in summary.get("slopes", {}).items():
        print(f"{name}: fitted weak order {slope:.3f}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
