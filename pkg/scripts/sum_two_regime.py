"""Radial exponents of the Green function of ``-Delta + (-Delta)^{a/2}`` in 3-D.

Near the origin the Laplacian dominates (slope ``-(N-2)``), far away the
fractional part does (slope ``-(N-a)``). One grid cannot resolve both, so a
small box and a large box are used.
"""

import argparse

from nldiff.kernels import two_regime_exponents
from nldiff.operators import FractionalLaplacian, Laplacian, Sum

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--alpha", type=float, default=1.0)
ap.add_argument("--n", type=int, default=128)
ap.add_argument("--near", type=float, default=2.0)
ap.add_argument("--far", type=float, default=128.0)
args = ap.parse_args()

res = two_regime_exponents(Sum(Laplacian(), FractionalLaplacian(args.alpha)), 3, args.n, args.near, args.far)
print(f"near slope {res['near']['slope']:+.3f}  (expect {-1:+.3f}) on r in {res['near_window']}")
print(f"far slope  {res['far']['slope']:+.3f}  (expect {-(3 - args.alpha):+.3f}) on r in {res['far_window']}")
