"""Coarse parameter grids along the fault and their embedding in the model."""

from __future__ import annotations

import numpy as np

from .friction import PARAMETERS, FrictionModel
from .geometry import fault_arclength
from .sbp import InterpolationPair, build_interpolation, identity_interpolation

INVERTIBLE = PARAMETERS + ("psi0",)


class ParameterError(ValueError):
    """An embedded parameter field violates the friction invariants."""


def fault_interpolation(problem, coarse_n: int, coarse_norm: str = "gram") -> InterpolationPair:
    """Coarse/fine pair on the fault arc length with the fault quadrature as fine norm.

    ``coarse_n`` equal to the number of fault nodes gives the identity pair.
    """
    s = fault_arclength(problem.grid.profile)
    if coarse_n == len(s):
        return identity_interpolation(s, problem.fault_quad)
    if coarse_n < 2 or coarse_n > len(s):
        raise ValueError(f"coarse grid size must be in [2, {len(s)}], got {coarse_n}")
    coarse = np.linspace(s[0], s[-1], coarse_n)
    return build_interpolation(coarse, s, problem.fault_quad, coarse_norm)


def restrict(model: FrictionModel, param: str, interp: InterpolationPair) -> np.ndarray:
    """Coarse representation of the current fine field (``I_f2c p``)."""
    return np.asarray(interp.f2c @ getattr(model, _field(param)), dtype=float)


def parameter_embed(coarse: np.ndarray, interp: InterpolationPair, model: FrictionModel, param: str) -> FrictionModel:
    """Model with the ``param`` field replaced by ``I_c2f coarse``."""
    name = _field(param)
    coarse = np.asarray(coarse, dtype=float)
    if coarse.shape != (interp.c2f.shape[1],):
        raise ValueError(f"coarse iterate has shape {coarse.shape}, expected ({interp.c2f.shape[1]},)")
    fine = interp.c2f @ coarse
    try:
        return model.with_field(name, fine)
    except ValueError as exc:
        raise ParameterError(str(exc)) from exc


def _field(param: str) -> str:
    if param not in INVERTIBLE:
        raise ValueError(f"unknown parameter '{param}'; expected one of {INVERTIBLE}")
    return param
