"""Build grids, friction fields, receivers and problems from a run config."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .forward import RuptureProblem, StageHistory, resample_to_stamps, rk4_integrate, stable_time_step, stage_stamps
from .friction import FrictionModel
from .geometry import (
    CurvilinearGrid,
    FaultProfile,
    build_grid,
    fault_normal_shear_projection,
    make_fractal_profile,
    planar_profile,
)
from .receivers import ReceiverSet, TimeWindow, build_receivers, rectangle_layout


@dataclass
class Scenario:
    config: RunConfig
    problem: RuptureProblem
    dt: float
    n_steps: int

    @property
    def initial_slip_rate(self) -> float:
        return self.config.friction.initial_slip_rate

    def initial_state(self) -> np.ndarray:
        return self.problem.initial_state(self.initial_slip_rate)

    def run(self, on_step=None) -> StageHistory:
        return rk4_integrate(self.problem, self.initial_state(), self.dt, self.n_steps, on_step)

    @property
    def stamps(self) -> np.ndarray:
        return stage_stamps(np.full(self.n_steps, self.dt))


def make_profile(cfg: RunConfig) -> FaultProfile:
    d, f = cfg.domain, cfg.fault
    m = cfg.discretization.m
    if f.kind == "planar":
        return planar_profile(m, d.x_min, d.x_max)
    return make_fractal_profile(m, d.x_min, d.x_max, f.amplitude_ratio, tuple(f.band), f.seed)


def make_grid(cfg: RunConfig, cartesian: bool = False) -> CurvilinearGrid:
    disc = cfg.discretization
    return build_grid(
        make_profile(cfg),
        cfg.domain.depth,
        disc.n_across or None,
        disc.order,
        disc.d2_form or None,
        cartesian=cartesian,
    )


def make_friction(cfg: RunConfig, profile: FaultProfile) -> FrictionModel:
    """Piecewise-constant VW/VS fields, projected background shear and Gaussian load."""
    fc, ld = cfg.friction, cfg.loading
    x = profile.x
    lo, hi = fc.vw_region
    vw = (x >= lo) & (x <= hi)
    return FrictionModel(
        a=np.where(vw, fc.a_vw, fc.a_vs),
        b=fc.b,
        dc=np.where(vw, fc.dc_vw, fc.dc_vs),
        f0=fc.f0,
        v0=fc.v0,
        sigma_n=fc.sigma_n,
        tau0=fault_normal_shear_projection(profile, fc.sigma_yz0),
        tau_load=ld.amplitude * np.exp(-((x - ld.center) ** 2) / (2.0 * ld.width**2)),
        psi0=fc.psi0,
    )


def make_receivers(cfg: RunConfig, grid: CurvilinearGrid) -> ReceiverSet:
    rc = cfg.receivers
    pos = rectangle_layout(tuple(rc.outer), tuple(rc.inner), rc.spacing)
    if rc.expected_count and len(pos) != rc.expected_count:
        raise ValueError(f"receiver layout has {len(pos)} points, config expects {rc.expected_count}")
    window = None
    if rc.window_start > 0 or np.isfinite(rc.window_end) or rc.window_taper > 0:
        window = TimeWindow(rc.window_start, rc.window_end, rc.window_taper)
    return build_receivers(grid, pos, rc.kind, window)


def build_scenario(cfg: RunConfig, cartesian: bool = False, with_receivers: bool = True) -> Scenario:
    disc, mat = cfg.discretization, cfg.material
    grid = make_grid(cfg, cartesian)
    model = make_friction(cfg, grid.profile)
    receivers = make_receivers(cfg, grid) if with_receivers else None
    problem = RuptureProblem(
        grid,
        mat.density,
        mat.shear_modulus,
        model,
        reflection=disc.reflection,
        penalty_factor=disc.penalty_factor,
        tol=disc.tolerance,
        locked=disc.locked,
        receivers=receivers,
    )
    dt = disc.dt if disc.dt > 0 else stable_time_step(grid, mat.density, mat.shear_modulus, disc.cfl)
    n_steps = int(round(disc.t_final / dt))
    if abs(n_steps * dt - disc.t_final) > 1e-9 * disc.t_final:
        raise ValueError(f"t_final = {disc.t_final} is not a whole number of steps of {dt}")
    return Scenario(cfg, problem, dt, n_steps)


def synthetic_data(scenario: Scenario, source: Scenario | None = None) -> np.ndarray:
    """Receiver data at the stage stamps of ``scenario``.

    Without ``source`` this is the inverse-crime series of the scenario
    itself.  With a finer ``source`` run the step-end series of the source
    is resampled onto the target stamps by cubic splines.
    """
    if source is None:
        return scenario.run().measurements
    hist = source.run()
    final = source.problem.measure(hist.final)
    times = np.concatenate([hist.stamps[0::4], [source.n_steps * source.dt]])
    values = np.vstack([hist.measurements[0::4], final[None, :]])
    if times[-1] < scenario.n_steps * scenario.dt - 1e-12:
        raise ValueError("source run is shorter than the target run")
    return resample_to_stamps(times, values, scenario.stamps)
