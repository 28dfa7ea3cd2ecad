"""Command-line interface: simulate, make-data, grad-check, invert, verify-manifest."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .adjoint import MisfitFunctional, fd_gradient_check
from .config import ConfigError, RunConfig, load_config, save_config
from .forward import SimulationError
from .inversion import InversionProblem, LbfgsOptions, lbfgs_minimize
from .io import read_data_set, verify_manifest, write_checkpoint, write_data_set, write_seismograms, write_table
from .parameters import ParameterError, fault_interpolation, restrict
from .scenario import Scenario, build_scenario, synthetic_data

log = logging.getLogger("dcrupture")


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed_override is not None:
        cfg = replace(cfg, fault=replace(cfg.fault, seed=args.seed_override))
    return cfg.validate()


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fault_meta(scn: Scenario) -> dict:
    prof = scn.problem.grid.profile
    return {"fault_x_km": prof.x, "fault_y_km": prof.y}


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    h = cfg.hash()
    scn = build_scenario(cfg)
    prob = scn.problem
    oc = cfg.output
    slip_rows, snaps = [], []
    slip_every = max(1, int(round(oc.slip_interval / scn.dt))) if oc.slip_interval > 0 else 0
    snap_steps = {int(round(t / scn.dt)): t for t in oc.snapshot_times}

    def on_step(n, t, y):
        if slip_every and n % slip_every == 0:
            slip_rows.append([t] + prob.slip(y).tolist())
        if n in snap_steps:
            snaps.append((t, y.copy()))

    status = "complete"
    started = time.time()
    try:
        hist = scn.run(on_step)
    except SimulationError as exc:
        log.error("%s", exc)
        status = "unstable"
        hist = None
    m = prob.grid.m
    slip_header = ["time_s"] + [f"x{i}" for i in range(m)]
    write_table(out / "slip.csv", slip_header, slip_rows, {**_fault_meta(scn), "status": status}, h)
    for t, y in snaps:
        _write_snapshot(out, prob, t, y, h)
    _write_geometry(out, prob, h)
    summary = {"status": status, "config_hash": h, "dt": scn.dt, "n_steps": scn.n_steps, "wall_s": time.time() - started}
    if hist is not None:
        k = max(1, oc.stage_subsample)
        idx = np.arange(0, len(hist.stamps), k)
        rows = ([float(hist.stamps[i])] + hist.v_star[i].tolist() for i in idx)
        write_table(out / "slip_rate.csv", slip_header, rows, {**_fault_meta(scn), "stage_subsample": k}, h)
        write_seismograms(out / "receivers", hist, prob.receivers.positions, prob.receivers.kind, h)
        vmax = np.abs(hist.v_star)
        fast = np.flatnonzero(vmax.max(axis=1) > 1e-3)
        summary["max_slip_rate"] = float(vmax.max())
        if len(fast):
            i = int(fast[0])
            summary["nucleation_time_s"] = float(hist.stamps[i])
            summary["nucleation_x_km"] = float(prob.grid.profile.x[np.argmax(vmax[i])])
        if oc.checkpoint:
            write_checkpoint(out / "history.bin", hist)
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    save_config(cfg, out / "config.toml")
    log.info("simulate: %s, wrote %s", status, out)
    return 0 if status == "complete" else 2


def _write_snapshot(out: Path, prob, t: float, y: np.ndarray, h: str) -> None:
    st = prob.unpack(y)
    rows = []
    for name, blk, u, v in (("minus", prob.grid.minus, st.u_minus, st.v_minus), ("plus", prob.grid.plus, st.u_plus, st.v_plus)):
        for (xx, yy, uu, vv) in zip(blk.x.ravel(), blk.y.ravel(), u, v):
            rows.append([name, float(xx), float(yy), float(uu), float(vv)])
    stem = f"snapshot_t{t:.4f}"
    write_table(out / f"{stem}.csv", ["block", "x_km", "y_km", "u_m", "v_m_per_s"], rows, {"time_s": t}, h)
    (out / f"{stem}.gp").write_text(
        "set datafile separator ','\nset view map\nset palette defined (-1 'blue', 0 'white', 1 'red')\n"
        f"splot '{stem}.csv' every ::1 using 2:3:5 with points pointtype 5 pointsize 0.5 palette notitle\n"
    )


def _write_geometry(out: Path, prob, h: str) -> None:
    """Fault trace with normals and background shear, plus every grid node."""
    prof = prob.grid.profile
    normal = prof.normal_minus
    rows = zip(prof.x.tolist(), prof.y.tolist(), normal[:, 0].tolist(), normal[:, 1].tolist(), prob.model.tau0.tolist())
    write_table(out / "fault_profile.csv", ["x_km", "y_km", "normal_x", "normal_y", "tau0_MPa"], rows,
                {"seed": prof.seed, "amplitude_ratio": prof.amplitude_ratio}, h)
    nodes = []
    for blk in prob.grid.blocks:
        for (i, j), xx in np.ndenumerate(blk.x):
            nodes.append([blk.name, i, j, float(xx), float(blk.y[i, j])])
    write_table(out / "grid.csv", ["block", "i", "j", "x_km", "y_km"], nodes, {}, h)


def cmd_make_data(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    scn = build_scenario(cfg)
    source = None
    source_hash = None
    if args.source_config:
        src_cfg = load_config(args.source_config)
        source = build_scenario(src_cfg)
        source_hash = src_cfg.hash()
    data = synthetic_data(scn, source)
    path = write_data_set(out, data, scn.stamps, scn.problem.receivers.positions, cfg.receivers.kind, cfg.hash(), source_hash)
    log.info("make-data: wrote %s", path)
    return 0


def _scenario_with_data(cfg: RunConfig, manifest: str | None) -> Scenario:
    scn = build_scenario(cfg)
    if manifest:
        data, _ = read_data_set(manifest, cfg.hash())
    else:
        data = synthetic_data(scn)
    if data.shape[0] != 4 * scn.n_steps:
        raise ValueError(f"data has {data.shape[0]} stages, run has {4 * scn.n_steps}")
    scn.problem = scn.problem.with_receivers(scn.problem.receivers.with_data(data))
    return scn


def cmd_grad_check(args) -> int:
    cfg = _load(args)
    gc = cfg.gradcheck
    param = args.param or gc.param
    out = _out_dir(args, cfg)
    scn = _scenario_with_data(cfg, args.data)
    func = MisfitFunctional(scn.problem, scn.dt, scn.n_steps, param, gc.m_p, scn.initial_slip_rate)
    p0 = gc.initial_factor * func.reference
    n = args.n_deltas or gc.n_deltas
    deltas = np.logspace(np.log10(args.delta_max or gc.delta_max), np.log10(args.delta_min or gc.delta_min), n)
    chk = fd_gradient_check(func, p0, deltas, jobs=args.jobs)
    write_table(out / f"grad_check_{param}.csv", ["delta", "error"], zip(chk.deltas.tolist(), chk.errors.tolist()),
                {"param": param, "gradient": chk.gradient, "misfit": chk.base_misfit}, cfg.hash())
    write_table(out / f"gradient_{param}.csv", ["arclength_km", "gradient"],
                zip(func.interp.coarse_nodes.tolist(), chk.gradient.tolist()),
                {"param": param, "misfit": chk.base_misfit, "point": p0}, cfg.hash())
    best_delta, best = chk.best
    ok = best <= gc.threshold
    print(f"grad-check {param}: min e = {best:.3e} at delta = {best_delta:.1e} -> {'PASS' if ok else 'FAIL'} (threshold {gc.threshold:.0e})")
    return 0 if ok else 1


def cmd_invert(args) -> int:
    cfg = _load(args)
    ic = cfg.inversion
    param = args.param or ic.param
    out = _out_dir(args, cfg)
    scn = _scenario_with_data(cfg, args.data)
    interp = fault_interpolation(scn.problem, ic.m_p, ic.coarse_norm)
    func = MisfitFunctional(scn.problem, scn.dt, scn.n_steps, param, interpolation=interp,
                            initial_slip_rate=scn.initial_slip_rate)
    if ic.initial_factor > 0:
        x0 = ic.initial_factor * restrict(scn.problem.model, param, interp)
    elif ic.initial_value != 0:
        x0 = np.full(ic.m_p, ic.initial_value)
    else:
        x0 = restrict(scn.problem.model, param, interp)
    opts = LbfgsOptions(memory=ic.memory, max_iter=ic.max_iter, gtol=ic.gtol, snapshot_every=ic.snapshot_every)
    try:
        problem = InversionProblem(func.value_and_gradient, x0, ic.lower, ic.upper, options=opts, param=param)
    except ValueError as exc:
        log.error("invalid initial guess: %s", exc)
        return 2
    h = cfg.hash()
    snap = out / "lbfgs_state.json"
    try:
        res = lbfgs_minimize(problem, snapshot=snap, resume=args.resume)
    except KeyboardInterrupt:
        log.warning("interrupted; resume with --resume %s", snap)
        return 130
    except ParameterError as exc:
        log.error("%s", exc)
        return 2
    tr = res.trace
    write_table(out / "trace.csv", ["iter", "misfit", "gnorm", "step", "evaluations"],
                ([i, tr.misfit[i], tr.gnorm[i], tr.step[i], tr.evaluations[i]] for i in range(len(tr))),
                {"param": param, "n_receivers": scn.problem.receivers.count, "status": res.status}, h)
    every = max(1, ic.snapshot_every)
    iterates = ([i] + tr.iterates[i].tolist() for i in range(0, len(tr), every))
    write_table(out / "iterates.csv", ["iter"] + [f"p{k}" for k in range(ic.m_p)], iterates, {"param": param}, h)
    write_table(out / f"{param}_coarse.csv", ["arclength_km", param], zip(interp.coarse_nodes.tolist(), res.x.tolist()), {}, h)
    fine = interp.c2f @ res.x
    write_table(out / f"{param}_fine.csv", ["x_km", param], zip(scn.problem.grid.profile.x.tolist(), fine.tolist()), {}, h)
    print(f"invert {param}: {res.status} after {res.iterations} iterations, misfit {tr.misfit[0]:.6e} -> {tr.misfit[-1]:.6e}")
    return 0


def cmd_verify_manifest(args) -> int:
    directory = args.directory or args.out
    if not directory:
        log.error("verify-manifest needs a directory")
        return 2
    problems = verify_manifest(directory)
    for p in problems:
        print(p)
    print("manifest OK" if not problems else f"{len(problems)} problem(s)")
    return 0 if not problems else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration (TOML)")
    common.add_argument("--out", help="output directory (defaults to [output].directory)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for perturbation runs")
    common.add_argument("--seed-override", type=int, default=None, help="replace [fault].seed")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = argparse.ArgumentParser(prog="dcrupture", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="forward run with seismograms and fault histories")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("make-data", parents=[common], help="synthetic receiver data at stage stamps")
    p.add_argument("--source-config", help="finer configuration whose output is resampled onto this run")
    p.set_defaults(func=cmd_make_data)

    p = sub.add_parser("grad-check", parents=[common], help="adjoint gradient against one-sided differences")
    p.add_argument("--param", help="parameter id (a, b, dc, f0, tau0, sigma_n, psi0)")
    p.add_argument("--data", help="data manifest (default: inverse-crime data from the config)")
    p.add_argument("--delta-min", type=float)
    p.add_argument("--delta-max", type=float)
    p.add_argument("--n-deltas", type=int)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("invert", parents=[common], help="L-BFGS inversion for one fault parameter")
    p.add_argument("--param")
    p.add_argument("--data", help="data manifest (default: inverse-crime data from the config)")
    p.add_argument("--resume", help="optimizer state written by an earlier run")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("verify-manifest", parents=[common], help="check config hashes and checksums of outputs")
    p.add_argument("directory", nargs="?")
    p.set_defaults(func=cmd_verify_manifest)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return 2
    except (ValueError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
