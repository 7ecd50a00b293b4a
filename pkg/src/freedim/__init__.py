"""Numerical laboratory for norm-microstates and topological free dimensions.

Submodules
----------
ncpoly
    Noncommutative polynomials, parsing and batteries.
matrixcore
    Hermitian tuples, Haar/GUE sampling, unitary-orbit distance, matrix units.
microstates
    Presentations, membership defects, samplers and compositions.
covering
    Packing and covering counts, brute-force grids.
dimension
    Tangent-rank and orbit-count dimension estimators.
mfcheck
    Matrix-model checks and the two-projection norm oracle.
"""

from ._kernels import BACKEND
from .matrixcore import MatrixTuple, OrbitOptions, orbit_distance
from .microstates import (
    Amplification,
    DirectSum,
    FreeProduct,
    MatrixModel,
    NormTable,
    Spectrum,
)
from .ncpoly import NcPolynomial, PolyBattery, parse_poly

__all__ = [
    "BACKEND",
    "Amplification",
    "DirectSum",
    "FreeProduct",
    "MatrixModel",
    "MatrixTuple",
    "NcPolynomial",
    "NormTable",
    "OrbitOptions",
    "PolyBattery",
    "Spectrum",
    "orbit_distance",
    "parse_poly",
]
