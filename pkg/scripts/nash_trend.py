"""Nash quotient over shrinking Gaussian bumps.

The fractional Laplacian keeps the quotient bounded; the geometric stable
operator, whose symbol grows only logarithmically, lets it creep upward at
every halving of the bump width.
"""

import argparse
import json

from nldiff.grid import Grid
from nldiff.inequalities import quotient_scan
from nldiff.operators import FractionalLaplacian, GeometricStable

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--n", type=int, default=256)
ap.add_argument("--L", type=float, default=16.0)
ap.add_argument("--dim", type=int, default=2)
ap.add_argument("--factor", type=float, default=1.05, help="per-halving growth flagged as unbounded")
ap.add_argument("--out", default="nash_trend.json")
args = ap.parse_args()

grid = Grid(args.dim, args.n, args.L)
report = {}
for name, spec in (("fractional", FractionalLaplacian(1.0)), ("geometric stable", GeometricStable(1.0))):
    rep = quotient_scan(spec, grid, "nash", "gaussians", samples=40, alpha=1.0, trend_factor=args.factor)
    report[name] = rep.to_dict()
    t = rep.trend or {}
    print(f"{name:18s} sup {rep.sup_quotient:.5f}  ratios {[round(r, 4) for r in t.get('ratios', [])]}  "
          f"unbounded {t.get('unbounded_trend')}")

with open(args.out, "w") as fh:
    json.dump(report, fh, indent=2)
