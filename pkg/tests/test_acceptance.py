"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (criteria 1 and 7 are
marked slow and take several minutes).
"""

import os
from pathlib import Path

import numpy as np
import pytest

from conftest import small_config
from dcrupture import friction as fr
from dcrupture.adjoint import MisfitFunctional, fd_gradient_check
from dcrupture.config import load_config
from dcrupture.forward import StageHistory, rk4_integrate, stage_stamps
from dcrupture.geometry import build_grid, planar_profile
from dcrupture.inversion import InversionProblem, LbfgsOptions, lbfgs_minimize
from dcrupture.parameters import fault_interpolation
from dcrupture.receivers import build_receivers, delta_weights_1d
from dcrupture.sbp import build_interpolation, build_sbp_1d, d2_energy_matrix, remainder
from dcrupture.scenario import build_scenario, synthetic_data
from test_friction import (
    KAPPA,
    SN,
    V0,
    assert_close_rel,
    bisect_oracle,
    model,
    mp_central,
    point_fields,
    random_kinematics,
    random_states,
    state_rate_floor,
)
from test_sbp import block_operators, green_residual_1d

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
JOBS = os.cpu_count() or 1


@pytest.fixture()
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number} {'PASS' if ok else 'FAIL'}: {title} [{detail}]")
        assert ok, detail

    return emit


def with_inverse_crime_data(sc):
    data = synthetic_data(sc)
    sc.problem = sc.problem.with_receivers(sc.problem.receivers.with_data(data))
    return sc


@pytest.mark.slow
def test_criterion_1_gradient_exactness(report):
    cfg = load_config(CONFIGS / "planar_reference.toml")
    gc = cfg.gradcheck
    sc = with_inverse_crime_data(build_scenario(cfg))
    assert sc.problem.receivers.count == 88
    func = MisfitFunctional(sc.problem, sc.dt, sc.n_steps, "a", gc.m_p, sc.initial_slip_rate)
    p0 = gc.initial_factor * func.reference
    deltas = np.logspace(-12, -5, 15)
    chk = fd_gradient_check(func, p0, deltas, jobs=JOBS)
    errors = chk.errors
    k = int(np.argmin(errors))
    descending = all(b <= 3.0 * a for a, b in zip(errors[:k], errors[1 : k + 1]))
    ascending = all(b >= a / 3.0 for a, b in zip(errors[k:-1], errors[k + 1 :]))
    e5, e6 = errors[-1], errors[np.argmin(np.abs(np.log10(deltas) + 6))]
    first_order = 0.1 <= e5 / (10.0 * e6) <= 10.0
    ok = errors[k] <= gc.threshold and descending and ascending and first_order
    curve = " ".join(f"{e:.1e}" for e in errors)
    report(1, "gradient exactness", ok, f"min e = {errors[k]:.2e} at da = {deltas[k]:.1e}; curve {curve}")


def test_criterion_2_sbp_identities(report):
    worst_1d = 0.0
    rng = np.random.default_rng(2)
    for order in (2, 4, 6):
        for form in ("narrow", "wide") if order == 2 else ("wide",):
            op = build_sbp_1d(37, 0.3, order, form)
            for _ in range(20):
                mu = rng.uniform(0.5, 2.0, 37)
                u, v = rng.standard_normal((2, 37))
                worst_1d = max(worst_1d, green_residual_1d(op, mu, u, v))
    worst_2d = 0.0
    for order in (2, 4, 6):
        for kind in ("planar", "fractal"):
            for op in block_operators(order, kind):
                lap = op.laplacian_matrix()
                for _ in range(20):
                    u, v = rng.standard_normal((2, op.size))
                    lhs = op.inner(v, lap @ u) - op.inner(lap @ v, u)
                    rhs = sum(
                        op.boundary_inner(n, v[e.nodes], e.traction(u)) - op.boundary_inner(n, u[e.nodes], e.traction(v))
                        for n, e in op.edges.items()
                    )
                    scale = np.dot(np.abs(v) * op.h_phys, abs(lap) @ np.abs(u))
                    worst_2d = max(worst_2d, abs(lhs - rhs) / scale)
    rem_ok = True
    for order in (2, 4, 6):
        op = build_sbp_1d(31, 0.2, order)
        r = remainder(op, rng.uniform(0.5, 2.0, 31)).toarray()
        scale = max(np.abs(r).max(), np.abs(d2_energy_matrix(op, np.ones(31)).toarray()).max())
        rem_ok &= np.abs(r - r.T).max() <= 1e-12 * scale and np.linalg.eigvalsh(0.5 * (r + r.T)).min() >= -1e-10 * scale
    ok = worst_1d <= 1e-11 and worst_2d <= 1e-11 and rem_ok
    report(2, "SBP identities", ok, f"Green 1D {worst_1d:.1e}, 2D {worst_2d:.1e}, remainder sym/PSD {rem_ok}")


def test_criterion_3_interpolation_duality(report):
    worst_identity = worst_exact = 0.0
    for mp_, m in ((11, 101), (26, 251), (51, 251)):
        fine = build_sbp_1d(m, 30.0 / (m - 1), 2)
        ip = build_interpolation(np.linspace(0.0, 30.0, mp_), fine.x, fine.norm.weights)
        rebuilt = np.linalg.solve(ip.coarse_norm, ip.c2f.T.toarray() * ip.fine_norm)
        worst_identity = max(worst_identity, np.max(np.abs(rebuilt - ip.f2c)) / np.max(np.abs(ip.f2c)))
        for c0, c1 in ((1.0, 0.0), (0.3, 0.7)):
            fc, ff = c0 + c1 * ip.coarse_nodes, c0 + c1 * ip.fine_nodes
            s = np.max(np.abs(ff))
            worst_exact = max(worst_exact, np.max(np.abs(ip.c2f @ fc - ff)) / s, np.max(np.abs(ip.f2c @ ff - fc)) / s)
    ok = worst_identity <= 1e-12 and worst_exact <= 1e-12
    report(3, "interpolation duality", ok, f"identity {worst_identity:.1e}, exactness {worst_exact:.1e}")


def test_criterion_4_friction_solver(report):
    n = 10_000
    tau_ell, psi, a, tau_total = random_states(n, 44)
    m = model(n, a=a, tau0=tau_total)
    vs = fr.solve_v_star(tau_ell, KAPPA, psi, m, tol=1e-13)
    ref = np.array([bisect_oracle(tau_ell[i], KAPPA, psi[i], a[i], SN, tau_total[i], V0) for i in range(n)])
    solve_err = float(np.max(np.abs(vs - ref)))

    v, psi2, fields = random_kinematics(300, 45)
    m2 = model(300, **fields, tau_load=5.0)
    failures = []
    p = fr.partials(v, psi2, m2)
    checks = [("v", p.f_v, p.g_v, np.abs(v)), ("psi", p.f_psi, p.g_psi, 1.0)]
    for param in fr.PARAMETERS:
        f_p, g_p = fr.parameter_partials(v, psi2, m2, param)
        checks.append((param, f_p, g_p, np.abs(fields[param])))
    for wrt, f_an, g_an, size in checks:
        ref2 = np.array([mp_central(v[i], psi2[i], point_fields(fields, i), wrt) for i in range(300)])
        try:
            assert_close_rel(np.broadcast_to(f_an, (300,)), ref2[:, 0])
            assert_close_rel(np.broadcast_to(g_an, (300,)), ref2[:, 1], floor=state_rate_floor(v, psi2, fields) / size)
        except AssertionError:
            failures.append(wrt)
    ok = solve_err <= 1e-13 and not failures
    report(4, "friction solver", ok, f"max |V* - oracle| = {solve_err:.1e} m/s over {n} inputs; partial failures {failures}")


def test_criterion_5_energy_stability(report):
    cfg = small_config(dt=0.05, t_final=100.0, discretization={"locked": True})
    prob = build_scenario(cfg, with_receivers=False).problem
    g = prob.grid
    rng = np.random.default_rng(5)
    fields = []
    for blk in g.blocks:
        for _ in range(2):
            x0, y0 = rng.uniform(-8, 8), np.sign(blk.y.mean()) * rng.uniform(2, 8)
            fields.append(rng.uniform(0.2, 1.0) * np.exp(-((blk.x - x0) ** 2 + (blk.y - y0) ** 2) / 8.0))
    y0 = prob.initial_state(0.0, u_minus=fields[0], v_minus=fields[1], u_plus=fields[2], v_plus=fields[3])
    energy = [prob.energy(y0)]
    rk4_integrate(prob, y0, 0.05, 2000, on_step=lambda n, t, y: energy.append(prob.energy(y)))
    energy = np.array(energy)
    growth = float(np.max(np.diff(energy)) / energy[0])
    locked_ok = growth <= 1e-8 and energy[-1] <= energy[0] * (1 + 1e-8)

    sc = build_scenario(small_config(m=61, dt=0.01, t_final=4.0), with_receivers=False)
    fric = [sc.problem.energy(sc.initial_state())]
    hist = sc.run(on_step=lambda n, t, y: fric.append(sc.problem.energy(y)))
    peak = np.max(np.abs(hist.v_star[3::4]), axis=1)
    after = np.flatnonzero(peak > 1e-3)
    nucleated = len(after) > 0
    start = after[0] if nucleated else 0
    fric_ok = nucleated and bool(np.all(np.diff(fric)[start:] < 0))
    ok = locked_ok and fric_ok
    report(5, "energy stability", ok, f"locked max step growth {growth:.1e} of E0; frictional strictly decreasing {fric_ok}")


def test_criterion_6_quadrature_and_delta(report):
    rng = np.random.default_rng(6)
    steps = np.full(9, 0.37)
    hist = StageHistory(steps, stage_stamps(steps), np.zeros((36, 1)), np.zeros((36, 1)))
    worst_quad = 0.0
    for _ in range(50):
        c = rng.standard_normal(4)
        for n in range(9):
            t0 = n * 0.37
            w = hist.quadrature[4 * n : 4 * n + 4]
            q = np.polyval(c, hist.stamps[4 * n : 4 * n + 4])
            exact = np.polyval(np.polyint(c), t0 + 0.37) - np.polyval(np.polyint(c), t0)
            worst_quad = max(worst_quad, abs(w @ q - exact) / max(abs(exact), np.abs(w) @ np.abs(q)))
    worst_delta = 0.0
    for order in (2, 4, 6):
        op = build_sbp_1d(41, 0.25, order)
        for point in rng.uniform(0.0, 10.0, 50):
            idx, w = delta_weights_1d(op.x, point, order)
            for deg in range(order + 1):
                worst_delta = max(worst_delta, abs(w @ op.x[idx] ** deg - point**deg) / max(1.0, point**deg))
        grid = build_grid(planar_profile(61, -15.0, 15.0), 15.0, order=order)
        pos = np.column_stack([rng.uniform(-12, 12, 10), rng.uniform(-12, 12, 10)])
        rec = build_receivers(grid, pos)
        x = np.concatenate([grid.minus.x.ravel(), grid.plus.x.ravel()])
        y = np.concatenate([grid.minus.y.ravel(), grid.plus.y.ravel()])
        for px in range(order + 1):
            for py in range(order + 1 - px):
                want = pos[:, 0] ** px * pos[:, 1] ** py
                err = np.abs(rec.sampler @ (x**px * y**py) - want) / np.maximum(1.0, np.abs(want))
                worst_delta = max(worst_delta, float(err.max()))
    ok = worst_quad <= 1e-14 and worst_delta <= 1e-10
    report(6, "quadrature and delta", ok, f"cubic quadrature {worst_quad:.1e}, delta moments {worst_delta:.1e}")


@pytest.mark.slow
def test_criterion_7_inverse_crime_inversion(report):
    cfg = load_config(CONFIGS / "inversion_m61.toml")
    ic = cfg.inversion
    sc = with_inverse_crime_data(build_scenario(cfg))
    interp = fault_interpolation(sc.problem, ic.m_p, ic.coarse_norm)
    func = MisfitFunctional(sc.problem, sc.dt, sc.n_steps, "a", interpolation=interp, initial_slip_rate=sc.initial_slip_rate)
    x0 = np.full(ic.m_p, ic.initial_value)
    opts = LbfgsOptions(memory=ic.memory, max_iter=ic.max_iter, gtol=ic.gtol)
    res = lbfgs_minimize(InversionProblem(func.value_and_gradient, x0, ic.lower, ic.upper, options=opts, param="a"))
    ratio = res.trace.misfit[0] / res.trace.misfit[-1]
    x = sc.problem.grid.profile.x
    a_hypo = float(np.interp(cfg.loading.center, x, interp.c2f @ res.x))
    ok = ratio >= 1e3 and abs(a_hypo - 0.009) <= 0.1 * 0.009 and res.iterations <= 100
    report(7, "inverse-crime inversion", ok,
           f"misfit reduced {ratio:.3g}x in {res.iterations} iterations ({res.status}); a(x_c) = {a_hypo:.5f}")


def test_criterion_8_planar_curvilinear_equivalence(report):
    cfg = small_config(m=61, dt=0.01, t_final=1.0)
    curvi = build_scenario(cfg)
    cart = build_scenario(cfg, cartesian=True)
    n = 100
    a = rk4_integrate(curvi.problem, curvi.initial_state(), curvi.dt, n)
    b = rk4_integrate(cart.problem, cart.initial_state(), cart.dt, n)
    rel_state = np.max(np.abs(a.final - b.final)) / np.max(np.abs(b.final))
    rel_vs = np.max(np.abs(a.v_star - b.v_star)) / np.max(np.abs(b.v_star))
    rel_rec = np.max(np.abs(a.measurements - b.measurements)) / np.max(np.abs(b.measurements))
    worst = max(rel_state, rel_vs, rel_rec)
    report(8, "planar/curvilinear equivalence", worst <= 1e-12, f"max relative difference {worst:.1e} over {n} steps")
