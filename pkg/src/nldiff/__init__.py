"""Spectral laboratory for generalized porous medium equations with Levy-type operators."""

__version__ = "0.1.0"

from .grid import Field, Grid, convolve, dft, idft, lp_norm, power
from .operators import (AnisotropicFractionalSum, BesselResolvent, Convolution0Order, FractionalLaplacian,
                        GeometricStable, Identity, Laplacian, RelativisticSchrodinger, Shifted, Sum, apply,
                        quadratic_form, symbol)

__all__ = [
    "Field", "Grid", "convolve", "dft", "idft", "lp_norm", "power",
    "AnisotropicFractionalSum", "BesselResolvent", "Convolution0Order", "FractionalLaplacian",
    "GeometricStable", "Identity", "Laplacian", "RelativisticSchrodinger", "Shifted", "Sum",
    "apply", "quadratic_form", "symbol",
]
