"""Acceptance suite with a JSON record, equivalent to ``nldiff suite --out``."""

import argparse
import json
import sys

from nldiff.suite import run_suite

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--quick", action="store_true")
ap.add_argument("--only", action="append", default=[])
ap.add_argument("--out", default="suite.json")
args = ap.parse_args()

results = run_suite(args.only or None, quick=args.quick)
with open(args.out, "w") as fh:
    json.dump([r.to_dict() for r in results], fh, indent=2, default=str)
sys.exit(0 if all(r.passed for r in results) else 1)
