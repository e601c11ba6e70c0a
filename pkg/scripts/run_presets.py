"""Run every built-in preset (or a chosen subset) and print one status line each."""

import argparse
import sys
from pathlib import Path

from nldiff import config
from nldiff.experiment import run_sweep

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("names", nargs="*", help="preset names (default: all)")
ap.add_argument("--out", default="results/presets")
ap.add_argument("--jobs", type=int, default=1)
args = ap.parse_args()

names = args.names or sorted(config.PRESETS)
cfgs = [config.preset(n) for n in names]
results = run_sweep(cfgs, [Path(args.out) / n for n in names], jobs=args.jobs)
for name, res in zip(names, results):
    worst = min((r["margin"] for r in res.summary if r["margin"] is not None), default=float("nan"))
    print(f"{name:28s} status {res.status}  checks {len(res.summary)}  worst margin {worst:.4g}")
sys.exit(max(r.status for r in results))
