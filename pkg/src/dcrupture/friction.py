"""Rate-and-state friction with the slip law, its partials and the V* solves.

Friction traction (stress, MPa) and state rate (1/s) at signed slip rate
``V`` (m/s) and state ``psi``::

    f(|V|, psi) = a asinh(|V| / (2 V0) exp(psi / a))
    F(V, psi)   = sigma_n f sign(V) - tau0 - tauL
    G(V, psi)   = -|V| / Dc (f - f0 - (a - b) ln(|V| / V0))

``F`` is written as ``sigma_n a asinh(V / (2 V0) exp(psi / a))`` which is
smooth through ``V = 0`` and equals the limit ``-tau0 - tauL`` there.
``G(0, psi)`` and ``G_V(0, psi)`` are set to zero.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace

import numpy as np

if os.environ.get("DCRUPTURE_PURE_PYTHON"):
    from . import _kernels_py as _kern

    BACKEND = "python"
else:
    try:
        from . import _kernels as _kern  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        from . import _kernels_py as _kern

        BACKEND = "python"

PARAMETERS = ("a", "b", "dc", "f0", "tau0", "sigma_n")


@dataclass(frozen=True)
class FrictionModel:
    """Fault-local friction fields, one entry per fault node.

    Units: ``dc`` in m, ``v0`` in m/s, stresses in MPa, the rest
    dimensionless.
    """

    a: np.ndarray
    b: np.ndarray
    dc: np.ndarray
    f0: np.ndarray
    v0: np.ndarray
    sigma_n: np.ndarray
    tau0: np.ndarray
    tau_load: np.ndarray
    psi0: np.ndarray

    def __post_init__(self):
        m = max(np.size(getattr(self, fld.name)) for fld in fields(self))
        for fld in fields(self):
            val = np.array(np.broadcast_to(np.asarray(getattr(self, fld.name), dtype=float), (m,)))
            val.setflags(write=False)
            object.__setattr__(self, fld.name, val)
        self.validate()

    def validate(self) -> None:
        if np.any(~(self.a > 0)):
            raise ValueError("direct-effect parameter a must be positive")
        if np.any(~(self.dc > 0)):
            raise ValueError("state evolution distance Dc must be positive")
        if np.any(~(self.v0 > 0)):
            raise ValueError("reference slip rate V0 must be positive")
        if np.any(~(self.sigma_n >= 0)):
            raise ValueError("normal stress must be non-negative")

    @property
    def size(self) -> int:
        return len(self.a)

    @property
    def tau_total(self) -> np.ndarray:
        return self.tau0 + self.tau_load

    def with_field(self, name: str, value: np.ndarray) -> "FrictionModel":
        return replace(self, **{name: value})


def friction_coefficient(v_abs, psi, a, v0) -> np.ndarray:
    return np.asarray(a) * _kern.asinh_scaled(np.abs(v_abs), np.asarray(psi) / a - np.log(2.0 * np.asarray(v0)))


def friction_force(v, psi, model: FrictionModel) -> np.ndarray:
    """``F(V, psi)``; total shear traction on the fault minus the load."""
    f = friction_coefficient(np.abs(v), psi, model.a, model.v0)
    return model.sigma_n * np.sign(v) * f - model.tau_total


def steady_state_friction(v_abs, model: FrictionModel) -> np.ndarray:
    return model.f0 + (model.a - model.b) * np.log(np.asarray(v_abs) / model.v0)


def state_rate(v, psi, model: FrictionModel) -> np.ndarray:
    """Slip-law ``G(V, psi)``; zero where ``V = 0``."""
    av = np.abs(np.asarray(v, dtype=float))
    f = friction_coefficient(av, psi, model.a, model.v0)
    moving = av > 0
    with np.errstate(divide="ignore"):
        fss = steady_state_friction(np.where(moving, av, model.v0), model)
    return np.where(moving, -av / model.dc * (f - fss), 0.0)


@dataclass(frozen=True)
class StatePartials:
    """``F``, ``G`` and their derivatives with respect to ``V`` and ``psi``."""

    force: np.ndarray
    rate: np.ndarray
    f_v: np.ndarray
    f_psi: np.ndarray
    g_v: np.ndarray
    g_psi: np.ndarray


def partials(v, psi, model: FrictionModel) -> StatePartials:
    force, g, fv, fp, gv, gp = _kern.friction_partials(
        v, psi, model.a, model.b, model.dc, model.f0, model.v0, model.sigma_n
    )
    return StatePartials(force - model.tau_total, g, fv, fp, gv, gp)


def parameter_partials(v, psi, model: FrictionModel, param: str) -> tuple[np.ndarray, np.ndarray]:
    """``(dF/dp, dG/dp)`` pointwise for ``p`` in :data:`PARAMETERS`."""
    v = np.asarray(v, dtype=float)
    av = np.abs(v)
    sgn = np.sign(v)
    moving = av > 0
    zero = np.zeros_like(av * model.a)
    a = model.a
    with np.errstate(divide="ignore", invalid="ignore"):
        log_ratio = np.where(moving, np.log(np.where(moving, av, 1.0) / model.v0), 0.0)
    if param == "tau0":
        return -np.ones_like(zero), zero
    if param in ("a", "sigma_n"):
        f = friction_coefficient(av, psi, a, model.v0)
        if param == "sigma_n":
            return sgn * f, zero
        w = 2.0 * model.v0 * np.exp(-np.asarray(psi) / a)
        den = np.hypot(v, w)
        f_psi = np.where(den > 0, av / np.where(den > 0, den, 1.0), 0.0)
        f_a = f / a - (np.asarray(psi) / a) * f_psi
        return model.sigma_n * sgn * f_a, np.where(moving, -av / model.dc * (f_a - log_ratio), 0.0)
    if param == "b":
        return zero, -av / model.dc * log_ratio
    if param == "dc":
        return zero, -state_rate(v, psi, model) / model.dc
    if param == "f0":
        return zero, av / model.dc
    raise ValueError(f"unknown friction parameter '{param}'; expected one of {PARAMETERS}")


def v_tilde_star(tau_ell, psi, model: FrictionModel) -> np.ndarray:
    """Closed-form root of ``F(V, psi) = -tau_ell`` (no impedance term)."""
    arg = (model.tau_total - np.asarray(tau_ell)) / (model.sigma_n * model.a)
    return 2.0 * model.v0 * np.sinh(arg) * np.exp(-np.asarray(psi) / model.a)


def solve_v_star(tau_ell, kappa, psi, model: FrictionModel, tol: float = 1e-13) -> np.ndarray:
    """Slip rate solving ``kappa V + F(V, psi) = -tau_ell`` by bisection.

    The bracket is ``[0, V~]`` (or ``[V~, 0]``) from the closed form, shrunk
    by the frictionless bound ``|tau0 + tauL - tau_ell| / kappa``.  ``tol``
    is the absolute bracket width in m/s; ``tol = 0`` bisects to adjacent
    floating-point numbers.
    """
    kappa = np.asarray(kappa, dtype=float)
    if np.any(kappa <= 0):
        raise ValueError("kappa must be positive")
    if tol < 0:
        raise ValueError("tolerance must be non-negative")
    return _kern.solve_v_star(tau_ell, kappa, psi, model.a, model.sigma_n, model.tau_total, model.v0, float(tol))


def solve_v_star_adjoint(tau_ell_adj, kappa, f_v, g_v, psi_adj) -> np.ndarray:
    """Linear adjoint slip rate ``-(tau_ell_adj + G_V psi_adj) / (kappa + F_V)``."""
    den = np.asarray(kappa) + np.asarray(f_v)
    if np.any(~(den > 0)):
        raise ValueError("kappa + F_V must be positive")
    return -(np.asarray(tau_ell_adj) + np.asarray(g_v) * np.asarray(psi_adj)) / den
