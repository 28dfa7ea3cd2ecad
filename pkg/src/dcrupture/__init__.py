"""Dual-consistent forward and adjoint SBP-SAT solver for antiplane-shear dynamic rupture."""

__version__ = "0.1.0"

from .adjoint import GradientReport, MisfitFunctional, adjoint_integrate, assemble_gradient, fd_gradient_check
from .config import ConfigError, RunConfig, load_config
from .forward import RuptureProblem, SimulationError, StageHistory, misfit, rk4_integrate
from .friction import BACKEND, FrictionModel
from .inversion import InversionProblem, LbfgsOptions, lbfgs_minimize
from .scenario import Scenario, build_scenario, synthetic_data

__all__ = [
    "BACKEND",
    "ConfigError",
    "FrictionModel",
    "GradientReport",
    "InversionProblem",
    "LbfgsOptions",
    "MisfitFunctional",
    "RunConfig",
    "RuptureProblem",
    "Scenario",
    "SimulationError",
    "StageHistory",
    "adjoint_integrate",
    "assemble_gradient",
    "build_scenario",
    "fd_gradient_check",
    "lbfgs_minimize",
    "load_config",
    "misfit",
    "rk4_integrate",
    "synthetic_data",
]
