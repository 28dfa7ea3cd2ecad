"""Semi-discrete forward rupture problem and its RK4 integration.

The unknown vector is ``y = [u, v, u*, psi]`` with ``u`` and ``v`` the
concatenated (minus, plus) grid functions, ``u*`` the boundary target
displacements on every block edge (minus: left, right, bottom, top; plus:
left, right, bottom, top) and ``psi`` the fault state.  The velocity
equation in weak form is

    rho H v' = -M u + sum_e [E_e^T zeta_e tau*_e - F_e^T h_e (u*_e - u_e)] + H Q

where ``F_e u = zeta_e tau_e / h_e`` is the edge flux, ``zeta_e`` the
physical edge quadrature and ``tau*`` the target traction.  Edge targets
keep the outgoing characteristic ``Z v - tau~`` with
``tau~ = tau + gamma (u* - u)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline

from . import friction as fr
from .geometry import CurvilinearGrid
from .receivers import ReceiverSet
from .sbp import EDGE_NAMES, BlockOperator

log = logging.getLogger(__name__)

RK4_A = (0.0, 0.5, 0.5, 1.0)
RK4_B = np.array([1.0, 2.0, 2.0, 1.0]) / 6.0
RK4_C = np.array([0.0, 0.5, 0.5, 1.0])
BLOW_UP = 1e10


class SimulationError(RuntimeError):
    """Raised when a run goes unstable or produces non-finite values."""


def characteristic_sat(u, ustar, taustar, op: BlockOperator, edge: str) -> np.ndarray:
    """Edge SAT contribution to ``v'`` (before dividing by density)."""
    e = op.edges[edge]
    out = np.zeros(op.size)
    np.add.at(out, e.nodes, e.quadrature * (taustar - e.traction(u)))
    out -= e.flux.T @ (e.weights * (ustar - u[e.nodes]))
    return out / op.h_phys


def boundary_targets(v, tau_tilde, impedance, reflection):
    """Target traction and ``u*`` rate on an exterior edge.

    ``reflection`` is 0 (non-reflecting), 1 (traction-free) or -1 (rigid).
    """
    w = impedance * np.asarray(v) - np.asarray(tau_tilde)
    return 0.5 * (reflection - 1.0) * w, 0.5 * (reflection + 1.0) * w / impedance


@dataclass(frozen=True)
class FaultTargets:
    taustar_minus: np.ndarray
    taustar_plus: np.ndarray
    rate_minus: np.ndarray
    rate_plus: np.ndarray
    v_star: np.ndarray
    tau_ell: np.ndarray
    kappa: np.ndarray


def fault_targets(v_minus, v_plus, tt_minus, tt_plus, z_minus, z_plus, psi, model, tol=1e-13, locked=False):
    """Fault targets from the edge velocities and modified tractions."""
    w_m = z_minus * v_minus - tt_minus
    w_p = z_plus * v_plus - tt_plus
    zsum = z_minus + z_plus
    kappa = np.broadcast_to(z_minus * z_plus / zsum, np.shape(w_m))
    tau_ell = (z_plus * w_m - z_minus * w_p) / zsum
    if locked:
        vs = np.zeros_like(tau_ell)
        force = -tau_ell
    else:
        vs = fr.solve_v_star(tau_ell, kappa, psi, model, tol)
        force = fr.friction_force(vs, psi, model)
    return FaultTargets(
        force,
        -force,
        v_minus - (tt_minus - force) / z_minus,
        v_plus - (tt_plus + force) / z_plus,
        vs,
        tau_ell,
        np.array(kappa),
    )


@dataclass(frozen=True)
class SimState:
    """Structured view of the flat unknown vector."""

    u_minus: np.ndarray
    u_plus: np.ndarray
    v_minus: np.ndarray
    v_plus: np.ndarray
    ustar_minus: dict
    ustar_plus: dict
    psi: np.ndarray


@dataclass
class StageHistory:
    """Per-stage records of one RK4 run (forward or adjoint)."""

    step_sizes: np.ndarray
    stamps: np.ndarray
    v_star: np.ndarray
    psi: np.ndarray
    measurements: np.ndarray | None = None
    residuals: np.ndarray | None = None
    final: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_steps(self) -> int:
        return len(self.step_sizes)

    @property
    def quadrature(self) -> np.ndarray:
        """Stage weights ``dt_n b_s`` of the RK time quadrature."""
        return (self.step_sizes[:, None] * RK4_B[None, :]).ravel()

    def validate(self) -> None:
        n = 4 * self.n_steps
        for name in ("stamps", "v_star", "psi"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"history field '{name}' has {len(getattr(self, name))} stages, expected {n}")


def stage_stamps(step_sizes: np.ndarray, t0: float = 0.0) -> np.ndarray:
    starts = t0 + np.concatenate([[0.0], np.cumsum(step_sizes)[:-1]])
    return (starts[:, None] + step_sizes[:, None] * RK4_C[None, :]).ravel()


class RuptureProblem:
    """Assembled two-block problem: operators, SAT data and fault coupling."""

    def __init__(
        self,
        grid: CurvilinearGrid,
        density: float,
        shear_modulus: float,
        model: fr.FrictionModel,
        reflection: float | dict = 0.0,
        penalty_factor: float = 1.0,
        tol: float = 1e-13,
        locked: bool = False,
        receivers: ReceiverSet | None = None,
        forcing: Callable[[float], np.ndarray] | None = None,
    ):
        if density <= 0 or shear_modulus <= 0:
            raise ValueError("density and shear modulus must be positive")
        if model.size != grid.m:
            raise ValueError(f"friction model has {model.size} points, fault has {grid.m}")
        self.grid = grid
        self.density = float(density)
        self.shear_modulus = float(shear_modulus)
        self.impedance = float(np.sqrt(density * shear_modulus))
        self.model = model
        self.tol = float(tol)
        self.locked = bool(locked)
        self.receivers = receivers
        self.forcing = forcing
        self.penalty_factor = penalty_factor
        self.ops = tuple(b.operator(shear_modulus, penalty_factor) for b in grid.blocks)
        self._assemble(reflection)

    def _assemble(self, reflection) -> None:
        nb = self.ops[0].size
        self.n_block = nb
        self.n_nodes = 2 * nb
        nodes, weights, arc, gamma, refl, flux_rows = [], [], [], [], [], []
        self.edge_slices = {}
        pos = 0
        for bi, (blk, op) in enumerate(zip(self.grid.blocks, self.ops)):
            for name in EDGE_NAMES:
                e = op.edges[name]
                nodes.append(bi * nb + e.nodes)
                weights.append(e.weights)
                arc.append(e.arc)
                gamma.append(e.penalty)
                if name == blk.fault_edge:
                    r = np.nan
                elif isinstance(reflection, dict):
                    r = float(reflection.get((blk.name, name), reflection.get(name, 0.0)))
                else:
                    r = float(reflection)
                if not np.isnan(r) and r not in (-1.0, 0.0, 1.0):
                    raise ValueError(f"reflection coefficient must be -1, 0 or 1, got {r}")
                refl.append(np.full(e.size, r))
                pad = [sp.csr_matrix((e.size, nb))] * 2
                pad[bi] = e.flux
                flux_rows.append(sp.hstack(pad))
                self.edge_slices[(blk.name, name)] = slice(pos, pos + e.size)
                pos += e.size
        self.n_edge = pos
        self.edge_nodes = np.concatenate(nodes)
        self.edge_weights = np.concatenate(weights)
        self.edge_arc = np.concatenate(arc)
        self.edge_quad = self.edge_weights * self.edge_arc
        self.gamma = np.concatenate(gamma)
        refl = np.concatenate(refl)
        self.fault_minus = np.arange(self.n_edge)[self.edge_slices[("minus", self.grid.minus.fault_edge)]]
        self.fault_plus = np.arange(self.n_edge)[self.edge_slices[("plus", self.grid.plus.fault_edge)]]
        ext = ~np.isnan(refl)
        self.exterior = ext
        self.ext_traction = np.where(ext, 0.5 * (refl - 1.0), 0.0)
        self.z_edge = np.full(self.n_edge, self.impedance)

        h_phys = np.concatenate([op.h_phys for op in self.ops])
        self.h_phys = h_phys
        self.inv_mass = 1.0 / (self.density * h_phys)
        flux_all = sp.vstack(flux_rows).tocsr()
        self.flux_all = flux_all
        energy = sp.block_diag([op.energy for op in self.ops]).tocsr()
        self.energy_matrix = energy
        self.stiffness = sp.vstack([sp.diags(self.inv_mass) @ energy, flux_all]).tocsr()
        select = sp.csr_matrix(
            (np.ones(self.n_edge), (np.arange(self.n_edge), self.edge_nodes)), shape=(self.n_edge, self.n_nodes)
        )
        self.select = select
        lift = sp.hstack([select.T @ sp.diags(self.edge_quad), -flux_all.T @ sp.diags(self.edge_weights)])
        self.lift = (sp.diags(self.inv_mass) @ lift).tocsr()
        self.fault_quad = self.edge_quad[self.fault_minus].copy()
        m = self.grid.m
        self.slices = {
            "u": slice(0, self.n_nodes),
            "v": slice(self.n_nodes, 2 * self.n_nodes),
            "ustar": slice(2 * self.n_nodes, 2 * self.n_nodes + self.n_edge),
            "psi": slice(2 * self.n_nodes + self.n_edge, 2 * self.n_nodes + self.n_edge + m),
        }
        self.size = 2 * self.n_nodes + self.n_edge + m

    @property
    def kappa(self) -> np.ndarray:
        zm, zp = self.z_edge[self.fault_minus], self.z_edge[self.fault_plus]
        return zm * zp / (zm + zp)

    def with_model(self, model: fr.FrictionModel) -> "RuptureProblem":
        """Shallow copy sharing all assembled operators."""
        new = object.__new__(RuptureProblem)
        new.__dict__.update(self.__dict__)
        if model.size != self.grid.m:
            raise ValueError("friction model size does not match the fault")
        new.model = model
        return new

    def with_receivers(self, receivers: ReceiverSet | None) -> "RuptureProblem":
        new = object.__new__(RuptureProblem)
        new.__dict__.update(self.__dict__)
        new.receivers = receivers
        return new

    # state handling

    def initial_state(self, slip_rate: float = 1e-12, u_minus=None, u_plus=None, v_minus=None, v_plus=None) -> np.ndarray:
        """Uniform ``v = +-slip_rate/2`` on the plus/minus block, zero ``u``.

        Explicit fields override the defaults; ``u*`` starts at the edge
        values of ``u``.
        """
        nb = self.n_block
        y = np.zeros(self.size)
        u = y[self.slices["u"]]
        v = y[self.slices["v"]]
        v[:nb] = -0.5 * slip_rate
        v[nb:] = 0.5 * slip_rate
        if u_minus is not None:
            u[:nb] = np.ravel(u_minus)
        if u_plus is not None:
            u[nb:] = np.ravel(u_plus)
        if v_minus is not None:
            v[:nb] = np.ravel(v_minus)
        if v_plus is not None:
            v[nb:] = np.ravel(v_plus)
        y[self.slices["ustar"]] = u[self.edge_nodes]
        y[self.slices["psi"]] = self.model.psi0
        return y

    def unpack(self, y: np.ndarray) -> SimState:
        nb = self.n_block
        u, v, us = y[self.slices["u"]], y[self.slices["v"]], y[self.slices["ustar"]]
        stars = {}
        for (bname, ename), sl in self.edge_slices.items():
            stars.setdefault(bname, {})[ename] = us[sl]
        return SimState(u[:nb], u[nb:], v[:nb], v[nb:], stars["minus"], stars["plus"], y[self.slices["psi"]])

    def slip(self, y: np.ndarray) -> np.ndarray:
        us = y[self.slices["ustar"]]
        return us[self.fault_plus] - us[self.fault_minus]

    def measure(self, y: np.ndarray) -> np.ndarray | None:
        if self.receivers is None:
            return None
        field_ = y[self.slices["u"] if self.receivers.kind == "displacement" else self.slices["v"]]
        return self.receivers.sampler @ field_

    # right-hand side

    def edge_quantities(self, y: np.ndarray):
        """Shared wave part: ``M u / (rho H)``, edge ``v``, ``tau~`` and ``u* - u``."""
        u = y[self.slices["u"]]
        v = y[self.slices["v"]]
        us = y[self.slices["ustar"]]
        ku = self.stiffness @ u
        nn = self.n_nodes
        d = us - u[self.edge_nodes]
        tt = ku[nn:] / self.edge_arc + self.gamma * d
        return ku[:nn], v, v[self.edge_nodes], tt, d

    def assemble_rate(self, y, mu_term, v, ve, tt, d, taustar, psi_rate, source=None):
        dy = np.empty_like(y)
        dy[self.slices["u"]] = v
        vdot = self.lift @ np.concatenate([taustar, d]) - mu_term
        if source is not None:
            vdot += source
        dy[self.slices["v"]] = vdot
        dy[self.slices["ustar"]] = ve - (tt - taustar) / self.z_edge
        dy[self.slices["psi"]] = psi_rate
        return dy

    def fault_state(self, y: np.ndarray):
        """Edge quantities plus all target tractions, ``V*`` and the state rate."""
        mu_term, v, ve, tt, d = self.edge_quantities(y)
        taustar = self.ext_traction * (self.z_edge * ve - tt)
        fm, fp = self.fault_minus, self.fault_plus
        psi = y[self.slices["psi"]]
        ft = fault_targets(ve[fm], ve[fp], tt[fm], tt[fp], self.z_edge[fm], self.z_edge[fp], psi, self.model, self.tol, self.locked)
        taustar[fm] = ft.taustar_minus
        taustar[fp] = ft.taustar_plus
        if self.locked:
            psi_rate = np.zeros_like(psi)
        else:
            psi_rate = fr.state_rate(ft.v_star, psi, self.model)
        return (mu_term, v, ve, tt, d), taustar, ft.v_star, psi_rate

    def rhs(self, t: float, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """State rate and the fault slip rate ``V*`` at ``(t, y)``."""
        wave, taustar, v_star, psi_rate = self.fault_state(y)
        source = None
        if self.forcing is not None:
            source = np.asarray(self.forcing(t), dtype=float) / self.density
        return self.assemble_rate(y, *wave, taustar, psi_rate, source), v_star

    # diagnostics

    def energy(self, y: np.ndarray, include_load: bool = True) -> float:
        """Discrete mechanical energy, minus the load work when ``include_load``."""
        u = y[self.slices["u"]]
        v = y[self.slices["v"]]
        us = y[self.slices["ustar"]]
        d = us - u[self.edge_nodes]
        e = 0.5 * self.density * np.dot(v * self.h_phys, v) + 0.5 * np.dot(u, self.energy_matrix @ u)
        e += np.dot(self.edge_weights * (self.flux_all @ u), d) + 0.5 * np.dot(self.gamma * self.edge_quad * d, d)
        if include_load and not self.locked:
            e -= np.dot(self.fault_quad * self.model.tau_total, self.slip(y))
        return float(e)

    def characteristic_defect(self, y: np.ndarray) -> float:
        """Largest ``|Z u*' - tau* - (Z v - tau~)|`` over all edges."""
        (mu_term, v, ve, tt, d), taustar, _, psi_rate = self.fault_state(y)
        rate = self.assemble_rate(y, mu_term, v, ve, tt, d, taustar, psi_rate)[self.slices["ustar"]]
        return float(np.max(np.abs(self.z_edge * rate - taustar - (self.z_edge * ve - tt))))


def stable_time_step(grid: CurvilinearGrid, density: float, shear_modulus: float, cfl: float = 0.25) -> float:
    """``cfl * h_min / c_s`` with ``h_min`` the smallest physical node spacing."""
    h = np.inf
    for blk in grid.blocks:
        for axis in (0, 1):
            dx = np.diff(blk.x, axis=axis)
            dy = np.diff(blk.y, axis=axis)
            h = min(h, float(np.min(np.hypot(dx, dy))))
    return cfl * h / np.sqrt(shear_modulus / density)


def rk4_loop(rate, y0: np.ndarray, dt: float, n_steps: int, on_step=None):
    """Classical RK4 driver over ``n_steps`` fixed steps.

    ``rate(i, t, Y)`` is called for global stage ``i = 4 n + s`` and must
    return ``(k, extra)``; the extras are collected in stage order.
    """
    y = np.array(y0, dtype=float)
    scale = max(float(np.max(np.abs(y))), 1.0)
    extras = []
    for n in range(n_steps):
        t = n * dt
        k_prev = None
        acc = np.zeros_like(y)
        for s in range(4):
            ys = y if s == 0 else y + (RK4_A[s] * dt) * k_prev
            k_prev, extra = rate(4 * n + s, t + RK4_C[s] * dt, ys, ys is y)
            extras.append(extra)
            acc += RK4_B[s] * k_prev
        y = y + dt * acc
        peak = float(np.max(np.abs(y)))
        if not np.isfinite(peak) or peak > BLOW_UP * scale:
            raise SimulationError(
                f"solution blew up at step {n + 1} (t = {(n + 1) * dt:.6g} s): max |y| = {peak:.3e}, initial scale {scale:.3e}"
            )
        if on_step is not None:
            on_step(n + 1, (n + 1) * dt, y)
    return y, extras


def rk4_integrate(
    problem: RuptureProblem,
    y0: np.ndarray,
    dt: float,
    n_steps: int,
    on_step: Callable[[int, float, np.ndarray], None] | None = None,
) -> StageHistory:
    """Integrate the forward problem and record every RK stage."""
    if dt <= 0 or n_steps <= 0:
        raise ValueError("dt and the step count must be positive")
    psi_sl = problem.slices["psi"]
    rec = problem.receivers

    def rate(i, t, ys, _start):
        k, vs = problem.rhs(t, ys)
        return k, (vs, ys[psi_sl].copy(), problem.measure(ys))

    final, extras = rk4_loop(rate, y0, dt, n_steps, on_step)
    steps = np.full(n_steps, float(dt))
    hist = StageHistory(
        steps,
        stage_stamps(steps),
        np.array([e[0] for e in extras]),
        np.array([e[1] for e in extras]),
        final=final,
    )
    if rec is not None:
        hist.measurements = np.array([e[2] for e in extras])
        if rec.data is not None:
            hist.residuals = record_residuals(hist.measurements, hist.stamps, rec)
    return hist


def record_residuals(measurements: np.ndarray, stamps: np.ndarray, receivers: ReceiverSet) -> np.ndarray:
    """Windowed residual ``w(t) (measurement - data)`` per stage and receiver."""
    data = receivers.data
    if data is None:
        return np.array(measurements, dtype=float)
    data = np.asarray(data, dtype=float)
    if data.shape[0] < measurements.shape[0]:
        raise ValueError(f"data has {data.shape[0]} stages but the run has {measurements.shape[0]}")
    if data.shape[1] != measurements.shape[1]:
        raise ValueError("data and receiver counts differ")
    w = receivers.weights(stamps)[:, None]
    return w * (measurements - data[: measurements.shape[0]])


def misfit(history: StageHistory) -> float:
    """``1/2 sum_i H_T,i |r_i|^2`` over stages and receivers."""
    if history.residuals is None:
        raise ValueError("history has no residuals; attach data to the receivers first")
    r = history.residuals
    return 0.5 * float(np.dot(history.quadrature, np.sum(r * r, axis=1)))


def resample_to_stamps(times: np.ndarray, values: np.ndarray, stamps: np.ndarray) -> np.ndarray:
    """Cubic-spline resampling of step-end data onto RK stage stamps."""
    return CubicSpline(times, values, axis=0)(stamps)
