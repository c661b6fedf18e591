"""Shared helpers for the experiment scripts: run a CLI subcommand, then summarise its CSV."""

import argparse
import csv
import math
import statistics
import sys
from collections import defaultdict
from pathlib import Path

from lrwsde.harness.cli import main


def parser(description, default_scale):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--scale", type=float, default=default_scale, help="fraction of the full-scale run")
    p.add_argument("--out-dir", type=Path, default=Path("results"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--config", type=Path, help="JSON config overriding the defaults")
    return p


def run(experiment, args, extra=()):
    args.out_dir.mkdir(parents=True, exist_ok=True)
    out = args.out_dir / f"{experiment}.csv"
    argv = [experiment, "--scale", str(args.scale), "--seed", str(args.seed), "--workers", str(args.workers),
            "--out", str(out), *extra]
    if args.config:
        argv += ["--config", str(args.config)]
    code = main(argv)
    if code:
        sys.exit(code)
    with out.open() as fh:
        return list(csv.DictReader(fh))


def as_float(v):
    return math.inf if v in ("exploded", "inf") else float(v)


def median_table(rows, keys, value):
    groups = defaultdict(list)
    for r in rows:
        groups[tuple(r[k] for k in keys)].append(as_float(r[value]))
    width = max(len(k) for k in keys) + 6
    print("  ".join(k.ljust(width) for k in keys) + f"  median {value}  (n)")
    for key in sorted(groups, key=lambda k: tuple(_sort_key(v) for v in k)):
        vals = groups[key]
        cells = [_show(v).ljust(width) for v in key]
        print("  ".join(cells) + f"  {statistics.median(vals):<12.4g}  ({len(vals)})")


def _show(v):
    try:
        return f"{float(v):.4g}"
    except ValueError:
        return v


def _sort_key(v):
    try:
        return (0, float(v), "")
    except ValueError:
        return (1, 0.0, v)
