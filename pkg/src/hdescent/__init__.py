"""Gradient-type methods for convex problems on discretized Hilbert spaces."""

from .hilbert import HVector, LinOp, adjoint_defect, inner, norm, operator_norm_sq
from .oracle import (
    Oracle,
    OracleResponse,
    OracleSpec,
    finite_diff_defect,
    least_squares_oracle,
    perturb,
    regularize,
)

__all__ = [
    "HVector",
    "LinOp",
    "adjoint_defect",
    "inner",
    "norm",
    "operator_norm_sq",
    "Oracle",
    "OracleResponse",
    "OracleSpec",
    "finite_diff_defect",
    "least_squares_oracle",
    "perturb",
    "regularize",
]

__version__ = "0.1.0"
