"""Summation-by-parts operators, quadratures and interpolation."""

from .interpolation import InterpolationPair, build_interpolation, hat_matrix, identity_interpolation
from .operators1d import (
    BUILTIN_CLOSURES,
    Closure,
    Sbp1D,
    SbpNorm,
    SecondDerivative,
    borrowing_constant,
    build_d2_variable,
    build_sbp_1d,
    d2_energy_matrix,
    load_coefficient_table,
    remainder,
)
from .operators2d import (
    EDGE_NAMES,
    BlockOperator,
    Edge,
    Metrics,
    build_block_operator,
    identity_metrics,
    metrics_from_coordinates,
)

__all__ = [
    "BUILTIN_CLOSURES",
    "BlockOperator",
    "Closure",
    "EDGE_NAMES",
    "Edge",
    "InterpolationPair",
    "Metrics",
    "Sbp1D",
    "SbpNorm",
    "SecondDerivative",
    "borrowing_constant",
    "build_block_operator",
    "build_d2_variable",
    "build_interpolation",
    "build_sbp_1d",
    "d2_energy_matrix",
    "hat_matrix",
    "identity_interpolation",
    "identity_metrics",
    "load_coefficient_table",
    "metrics_from_coordinates",
    "remainder",
]
