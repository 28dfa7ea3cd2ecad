"""Time-reversed adjoint problem and the exact discrete misfit gradient.

The adjoint runs the same linear wave operator as the forward problem
backwards in time with the fault law replaced by its linearization about
the stored forward stages:

    V+ = -(tau_ell+ + G_V psi+) / (kappa + F_V)
    tau*+(+-) = -+(F_V V+ + G_V psi+)
    dpsi+/dt+ = G_psi psi+ + F_psi V+

Adjoint global stage ``i`` of the reversed RK4 sweep uses the forward
coefficients of stage ``4N - 1 - i``.  The gradient of the discrete misfit
with respect to a fault parameter is then

    dF/dp = -sum_i H_T,i H_fault (F_p V+_i + G_p psi+_i),

and with respect to the initial state ``-H_fault psi+(t = 0)``.  The sign
follows from the same multiplier convention as the parameter formula.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import friction as fr
from .forward import RuptureProblem, StageHistory, misfit, rk4_integrate, rk4_loop
from .parameters import INVERTIBLE, fault_interpolation, parameter_embed, restrict
from .sbp import InterpolationPair

log = logging.getLogger(__name__)


def adjoint_source(history: StageHistory, receivers) -> np.ndarray:
    """Per-stage receiver source amplitudes ``S`` in forward stage order.

    Velocity misfits give ``w r``.  Displacement misfits give ``-r^`` with
    ``r^(t) = int_0^t w r - int_0^T w r`` evaluated with the RK stage
    quadrature, so that ``r^(T) = 0``; the stage values reported here are
    the ones the adjoint sweep carries as its extra state.
    """
    if history.residuals is None:
        raise ValueError("history has no residuals")
    src = receivers.weights(history.stamps)[:, None] * history.residuals
    if receivers.kind == "velocity":
        return src
    # Integrate w r backwards from T with the adjoint RK4 stage pattern.
    dt = history.step_sizes
    n = history.n_steps
    q = np.zeros(src.shape[1])
    out = np.empty_like(src)
    for k in range(n):
        step = n - 1 - k
        j = 4 * step + 3 - np.arange(4)
        rates = src[j]
        stages = [q, q + 0.5 * dt[step] * rates[0], q + 0.5 * dt[step] * rates[1], q + dt[step] * rates[2]]
        out[j] = np.array(stages)
        q = q + dt[step] * (rates[0] + 2 * rates[1] + 2 * rates[2] + rates[3]) / 6.0
    return out


@dataclass
class AdjointResult:
    """Adjoint stage values aligned with forward stages, plus the final state."""

    v_star: np.ndarray
    psi: np.ndarray
    psi_initial: np.ndarray
    final: np.ndarray = field(repr=False)
    step_sizes: np.ndarray = field(repr=False)


def adjoint_fault_targets(tau_ell_adj, psi_adj, kappa, part: fr.StatePartials):
    """``(tau*-, tau*+, V+)`` of the linearized fault law."""
    vs = fr.solve_v_star_adjoint(tau_ell_adj, kappa, part.f_v, part.g_v, psi_adj)
    force = part.f_v * vs + part.g_v * psi_adj
    return force, -force, vs


def adjoint_integrate(problem: RuptureProblem, history: StageHistory) -> AdjointResult:
    """Reverse RK4 sweep of the adjoint problem driven by the stored residuals."""
    history.validate()
    rec = problem.receivers
    if rec is None or history.residuals is None:
        raise ValueError("adjoint requires receivers with data and a history with residuals")
    dts = history.step_sizes
    if np.any(dts != dts[0]):
        raise ValueError("adjoint integration requires a fixed time step")
    dt = float(dts[0])
    n_steps = history.n_steps
    n_stage = 4 * n_steps
    if history.residuals.shape[0] != n_stage:
        raise ValueError("residual history does not match the step plan")

    weighted = rec.weights(history.stamps)[:, None] * history.residuals
    displacement = rec.kind == "displacement"
    sampler_t = rec.sampler.T.tocsr()
    n_base = problem.size
    n_rec = rec.count
    size = n_base + (n_rec if displacement else 0)
    psi_sl = problem.slices["psi"]
    fm, fp = problem.fault_minus, problem.fault_plus
    zm, zp = problem.z_edge[fm], problem.z_edge[fp]
    kappa = problem.kappa
    if problem.locked:
        part = None
    else:
        part = fr.partials(history.v_star, history.psi, problem.model)

    def rate(i, _t, ys, _start):
        j = n_stage - 1 - i
        y = ys[:n_base]
        mu_term, v, ve, tt, d = problem.edge_quantities(y)
        taustar = problem.ext_traction * (problem.z_edge * ve - tt)
        psi_adj = y[psi_sl]
        tau_ell = (zp * (zm * ve[fm] - tt[fm]) - zm * (zp * ve[fp] - tt[fp])) / (zm + zp)
        if part is None:
            vs = np.zeros_like(tau_ell)
            force = -tau_ell
            psi_rate = np.zeros_like(psi_adj)
        else:
            pj = fr.StatePartials(*(getattr(part, f)[j] for f in ("force", "rate", "f_v", "f_psi", "g_v", "g_psi")))
            force, _, vs = adjoint_fault_targets(tau_ell, psi_adj, kappa, pj)
            psi_rate = pj.g_psi * psi_adj + pj.f_psi * vs
        taustar[fm] = force
        taustar[fp] = -force
        amp = ys[n_base:] if displacement else weighted[j]
        source = problem.inv_mass * (sampler_t @ amp)
        k = np.empty(size)
        k[:n_base] = problem.assemble_rate(y, mu_term, v, ve, tt, d, taustar, psi_rate, source)
        if displacement:
            k[n_base:] = weighted[j]
        return k, (vs, psi_adj.copy())

    final, extras = rk4_loop(rate, np.zeros(size), dt, n_steps)
    vs = np.array([e[0] for e in extras])[::-1]
    psi = np.array([e[1] for e in extras])[::-1]
    return AdjointResult(vs, psi, final[psi_sl].copy(), final, dts.copy())


@dataclass
class GradientReport:
    """Fine and coarse misfit gradients for one parameter."""

    param: str
    misfit: float
    fine_gradient: np.ndarray
    coarse_gradient: np.ndarray
    psi0_gradient: np.ndarray
    config_hash: str = ""


def fine_gradient_density(problem: RuptureProblem, history: StageHistory, adj: AdjointResult, param: str) -> np.ndarray:
    """``Phi`` such that ``dF/dp_fine = H_fault Phi``."""
    if adj.v_star.shape != history.v_star.shape:
        raise ValueError("forward and adjoint histories are misaligned")
    if param == "psi0":
        return -adj.psi_initial
    if param not in fr.PARAMETERS:
        raise ValueError(f"unknown parameter '{param}'; expected one of {INVERTIBLE}")
    f_p, g_p = fr.parameter_partials(history.v_star, history.psi, problem.model, param)
    integrand = np.broadcast_to(f_p, adj.v_star.shape) * adj.v_star + np.broadcast_to(g_p, adj.psi.shape) * adj.psi
    return -(history.quadrature @ integrand)


def assemble_gradient(
    problem: RuptureProblem,
    history: StageHistory,
    adj: AdjointResult,
    param: str,
    interpolation: InterpolationPair | None = None,
    config_hash: str = "",
) -> GradientReport:
    """Fine gradient, its coarse counterpart and the initial-state gradient."""
    phi = fine_gradient_density(problem, history, adj, param)
    fine = problem.fault_quad * phi
    coarse = fine.copy() if interpolation is None else np.asarray(interpolation.coarse_gradient(phi))
    return GradientReport(param, misfit(history), fine, coarse, -problem.fault_quad * adj.psi_initial, config_hash)


class MisfitFunctional:
    """Misfit and gradient as functions of a coarse parameter vector."""

    def __init__(self, problem: RuptureProblem, dt: float, n_steps: int, param: str, coarse_n: int | None = None,
                 initial_slip_rate: float = 1e-12, interpolation: InterpolationPair | None = None):
        if param not in INVERTIBLE:
            raise ValueError(f"unknown parameter '{param}'; expected one of {INVERTIBLE}")
        self.problem = problem
        self.dt = float(dt)
        self.n_steps = int(n_steps)
        self.param = param
        self.initial_slip_rate = initial_slip_rate
        if interpolation is None:
            interpolation = fault_interpolation(problem, coarse_n or problem.grid.m)
        self.interp = interpolation

    @property
    def reference(self) -> np.ndarray:
        """Coarse representation of the parameter in the stored model."""
        return restrict(self.problem.model, self.param, self.interp)

    def problem_at(self, coarse: np.ndarray) -> RuptureProblem:
        return self.problem.with_model(parameter_embed(coarse, self.interp, self.problem.model, self.param))

    def forward(self, coarse: np.ndarray) -> tuple[RuptureProblem, StageHistory]:
        prob = self.problem_at(coarse)
        y0 = prob.initial_state(self.initial_slip_rate)
        return prob, rk4_integrate(prob, y0, self.dt, self.n_steps)

    def misfit(self, coarse: np.ndarray) -> float:
        return misfit(self.forward(coarse)[1])

    def __call__(self, coarse: np.ndarray) -> float:
        return self.misfit(coarse)

    def gradient(self, coarse: np.ndarray) -> GradientReport:
        prob, hist = self.forward(coarse)
        adj = adjoint_integrate(prob, hist)
        return assemble_gradient(prob, hist, adj, self.param, self.interp)

    def value_and_gradient(self, coarse: np.ndarray) -> tuple[float, np.ndarray]:
        rep = self.gradient(coarse)
        return rep.misfit, rep.coarse_gradient


@dataclass
class GradientCheck:
    deltas: np.ndarray
    errors: np.ndarray
    gradient: np.ndarray
    fd_gradients: np.ndarray
    base_misfit: float

    @property
    def best(self) -> tuple[float, float]:
        k = int(np.argmin(self.errors))
        return float(self.deltas[k]), float(self.errors[k])


def _evaluate(args):
    func, p = args
    return func(p)


def fd_gradient_check(func, p0: np.ndarray, deltas, gradient: np.ndarray | None = None, jobs: int = 1,
                      scale: np.ndarray | None = None) -> GradientCheck:
    """Relative error between a gradient and one-sided differences of ``func``.

    ``func`` maps a parameter vector to a scalar; when ``gradient`` is not
    given, ``func.value_and_gradient`` supplies it.  Errors use the
    parameter-normalized norm ``max |v_k / p_k|`` (``scale`` overrides
    ``p0`` as the normalization).  Perturbed evaluations run on ``jobs``
    worker processes.
    """
    p0 = np.asarray(p0, dtype=float)
    deltas = np.asarray(deltas, dtype=float)
    if gradient is None:
        base, gradient = func.value_and_gradient(p0)
    else:
        base = func(p0)
    gradient = np.asarray(gradient, dtype=float)
    pbar = np.abs(p0 if scale is None else np.asarray(scale, dtype=float))
    pbar = np.where(pbar > 0, pbar, 1.0)
    tasks = []
    for dlt in deltas:
        for k in range(len(p0)):
            p = p0.copy()
            p[k] += dlt
            tasks.append((func, p))
    if jobs > 1:
        import multiprocessing as mp

        ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else None
        with ProcessPoolExecutor(max_workers=min(jobs, os.cpu_count() or 1), mp_context=ctx) as pool:
            values = list(pool.map(_evaluate, tasks))
    else:
        values = [_evaluate(t) for t in tasks]
    values = np.array(values).reshape(len(deltas), len(p0))
    fd = (values - base) / deltas[:, None]
    gnorm = np.max(np.abs(gradient / pbar))
    errors = np.max(np.abs((fd - gradient[None, :]) / pbar[None, :]), axis=1) / gnorm
    return GradientCheck(deltas, errors, gradient, fd, float(base))
