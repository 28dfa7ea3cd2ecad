"""Limited-memory BFGS with a strong-Wolfe line search and box bounds.

The optimizer works in normalized variables ``z = p / scale`` so that a
unit step means a relative change of the parameter.  Bounds are handled by
fixing components that sit on a bound with the gradient pointing outwards
and by capping the line search at the first bound hit.  Evaluations that
fail the friction invariants (``ParameterError``) count as ``+inf`` and
make the line search backtrack.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .parameters import ParameterError, parameter_embed

__all__ = [
    "InversionProblem",
    "InversionTrace",
    "LbfgsOptions",
    "LbfgsResult",
    "lbfgs_minimize",
    "parameter_embed",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LbfgsOptions:
    memory: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    max_iter: int = 100
    gtol: float = 1e-12
    max_linesearch: int = 30
    first_step: float = 0.1
    snapshot_every: int = 0


@dataclass
class InversionTrace:
    """Per-iteration misfit, projected gradient norm, step and iterate."""

    misfit: list = field(default_factory=list)
    gnorm: list = field(default_factory=list)
    step: list = field(default_factory=list)
    evaluations: list = field(default_factory=list)
    iterates: list = field(default_factory=list)

    def append(self, f, gnorm, step, nfev, x):
        self.misfit.append(float(f))
        self.gnorm.append(float(gnorm))
        self.step.append(float(step))
        self.evaluations.append(int(nfev))
        self.iterates.append(np.array(x, dtype=float))

    def __len__(self) -> int:
        return len(self.misfit)


@dataclass
class LbfgsResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    trace: InversionTrace
    status: str
    iterations: int


@dataclass
class InversionProblem:
    """Objective, initial guess, bounds and solver options.

    ``objective(p)`` returns ``(F, dF/dp)``.  ``penalty(p)``, when given,
    returns an additive ``(R, dR/dp)`` (no regularization by default).
    """

    objective: Callable[[np.ndarray], tuple[float, np.ndarray]]
    x0: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    scale: np.ndarray | None = None
    options: LbfgsOptions = field(default_factory=LbfgsOptions)
    penalty: Callable[[np.ndarray], tuple[float, np.ndarray]] | None = None
    param: str = ""

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        n = len(self.x0)
        self.lower = np.full(n, -np.inf) if self.lower is None else np.broadcast_to(np.asarray(self.lower, float), (n,)).copy()
        self.upper = np.full(n, np.inf) if self.upper is None else np.broadcast_to(np.asarray(self.upper, float), (n,)).copy()
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        bad = np.flatnonzero((self.x0 < self.lower) | (self.x0 > self.upper))
        if len(bad):
            raise ValueError(f"initial guess violates bounds at components {bad.tolist()}")
        if self.param == "a" and np.any(self.lower <= 0):
            self.lower = np.maximum(self.lower, np.finfo(float).tiny)
        if self.scale is None:
            s = np.abs(self.x0)
            self.scale = np.where(s > 0, s, 1.0)


class _Scaled:
    """Objective in normalized variables with evaluation counting."""

    def __init__(self, prob: InversionProblem):
        self.prob = prob
        self.nfev = 0

    def __call__(self, z):
        p = z * self.prob.scale
        self.nfev += 1
        try:
            f, g = self.prob.objective(p)
        except ParameterError as exc:
            log.debug("rejected trial point: %s", exc)
            return np.inf, np.full_like(z, np.nan)
        g = np.asarray(g, dtype=float)
        if self.prob.penalty is not None:
            rf, rg = self.prob.penalty(p)
            f, g = f + rf, g + np.asarray(rg, dtype=float)
        return float(f), g * self.prob.scale


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic through two points with slopes, or ``None``."""
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(disc)
    den = gb - ga + 2.0 * d2
    if den == 0:
        return None
    x = b - (b - a) * (gb + d2 - d1) / den
    return x if np.isfinite(x) else None


def _line_search(fun, z, f0, g0, d, alpha0, alpha_max, opts: LbfgsOptions):
    """Strong-Wolfe search with cubic-interpolation zoom.

    Returns ``(alpha, f, g, ok)``.  A step capped at ``alpha_max`` is
    accepted when it satisfies sufficient decrease.
    """
    dg0 = float(g0 @ d)
    if dg0 >= 0:
        return 0.0, f0, g0, False
    c1, c2 = opts.c1, opts.c2

    def phi(a):
        f, g = fun(z + a * d)
        return f, g, (float(g @ d) if np.isfinite(f) else np.nan)

    def zoom(lo, flo, glo, dlo, hi, fhi, dhi, budget):
        for _ in range(budget):
            trial = None
            if np.isfinite(fhi) and np.isfinite(dhi):
                trial = _cubic_min(lo, flo, dlo, hi, fhi, dhi)
            span = abs(hi - lo)
            lo_edge, hi_edge = min(lo, hi) + 0.1 * span, max(lo, hi) - 0.1 * span
            if trial is None or not (lo_edge <= trial <= hi_edge):
                trial = 0.5 * (lo + hi)
            ft, gt, dt = phi(trial)
            if not np.isfinite(ft) or ft > f0 + c1 * trial * dg0 or ft >= flo:
                hi, fhi, dhi = trial, ft, dt
            else:
                if abs(dt) <= -c2 * dg0:
                    return trial, ft, gt, True
                if dt * (hi - lo) >= 0:
                    hi, fhi, dhi = lo, flo, dlo
                lo, flo, glo, dlo = trial, ft, gt, dt
        ok = lo > 0 and flo < f0
        return lo, flo, glo, ok

    prev, fprev, gprev, dprev = 0.0, f0, g0, dg0
    a = min(alpha0, alpha_max)
    for i in range(opts.max_linesearch):
        fa, ga, da = phi(a)
        if not np.isfinite(fa) or fa > f0 + c1 * a * dg0 or (i > 0 and fa >= fprev):
            return zoom(prev, fprev, gprev, dprev, a, fa, da, opts.max_linesearch)
        if abs(da) <= -c2 * dg0:
            return a, fa, ga, True
        if da >= 0:
            return zoom(a, fa, ga, da, prev, fprev, dprev, opts.max_linesearch)
        if a >= alpha_max:
            return a, fa, ga, True
        prev, fprev, gprev, dprev = a, fa, ga, da
        a = min(2.0 * a, alpha_max)
    return prev, fprev, gprev, prev > 0


def _projected_gradient(z, g, lo, hi):
    pg = g.copy()
    pg[(z <= lo) & (g > 0)] = 0.0
    pg[(z >= hi) & (g < 0)] = 0.0
    return pg


def _two_loop(g, pairs):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += s * (a - b)
    return -q


def lbfgs_minimize(
    problem: InversionProblem,
    callback: Callable[[int, np.ndarray, float], None] | None = None,
    snapshot: str | Path | None = None,
    resume: str | Path | None = None,
) -> LbfgsResult:
    """Minimize ``problem.objective`` (plus penalty) from ``problem.x0``.

    Stops after ``max_iter`` iterations, when the projected gradient norm
    (normalized variables, max norm) drops below ``gtol``, or when the line
    search fails.  ``snapshot`` is written every ``snapshot_every``
    iterations; ``resume`` restarts from such a file.
    """
    opts = problem.options
    fun = _Scaled(problem)
    lo, hi = problem.lower / problem.scale, problem.upper / problem.scale
    pairs: deque = deque(maxlen=opts.memory)
    trace = InversionTrace()
    start_iter = 0
    if resume is not None:
        state = load_snapshot(resume)
        if state.get("scale") is not None:
            problem.scale = np.asarray(state["scale"], float)
            lo, hi = problem.lower / problem.scale, problem.upper / problem.scale
        if state.get("z") is not None:
            z = np.asarray(state["z"], float)
        else:
            z = np.asarray(state["x"], float) / problem.scale
        for s, y in zip(state["s"], state["y"]):
            s, y = np.asarray(s, float), np.asarray(y, float)
            pairs.append((s, y, 1.0 / (y @ s)))
        start_iter = int(state["iteration"])
        for k, name in enumerate(("misfit", "gnorm", "step", "evaluations")):
            getattr(trace, name).extend(state["trace"][k])
        trace.iterates.extend(np.asarray(v, float) for v in state["trace"][4])
    else:
        z = problem.x0 / problem.scale
    f, g = fun(z)
    if not np.isfinite(f):
        raise ParameterError("objective rejected the initial guess")
    status = "max_iter"
    it = start_iter
    if resume is None:
        trace.append(f, np.max(np.abs(_projected_gradient(z, g, lo, hi))), 0.0, fun.nfev, z * problem.scale)
    try:
        while it < opts.max_iter:
            pg = _projected_gradient(z, g, lo, hi)
            gnorm = float(np.max(np.abs(pg)))
            if gnorm <= opts.gtol or f == 0.0:
                status = "converged"
                break
            free = pg != 0.0
            if np.all(free):
                active = list(pairs)
            else:
                active = [(s * free, y * free, 1.0 / ((s * free) @ (y * free))) for s, y, _ in pairs if (s * free) @ (y * free) > 0]
            d = _two_loop(np.where(free, g, 0.0), active)
            d[~free | ((z >= hi) & (d > 0)) | ((z <= lo) & (d < 0))] = 0.0
            if not (d @ g < 0):
                pairs.clear()
                d = -pg
            with np.errstate(divide="ignore", invalid="ignore"):
                caps = np.where(d > 0, (hi - z) / d, np.where(d < 0, (lo - z) / d, np.inf))
            alpha_max = float(np.min(caps)) if len(caps) else np.inf
            alpha0 = 1.0 if pairs else min(1.0, opts.first_step / float(np.max(np.abs(d))))
            alpha, fn, gn, ok = _line_search(fun, z, f, g, d, alpha0, alpha_max, opts)
            if not ok or alpha <= 0 or not np.isfinite(fn):
                status = "line_search_failed"
                log.warning("line search failed at iteration %d", it)
                break
            znew = np.clip(z + alpha * d, lo, hi)
            s, y = znew - z, gn - g
            sy = float(s @ y)
            if sy > 1e-12 * float(np.sqrt((s @ s) * (y @ y))):
                pairs.append((s, y, 1.0 / sy))
            z, f, g = znew, fn, gn
            it += 1
            gnew = float(np.max(np.abs(_projected_gradient(z, g, lo, hi))))
            trace.append(f, gnew, alpha, fun.nfev, z * problem.scale)
            log.info("iter %3d  misfit %.6e  |g| %.3e  step %.3e", it, f, gnew, alpha)
            if callback is not None:
                callback(it, z * problem.scale, f)
            if snapshot is not None and opts.snapshot_every and it % opts.snapshot_every == 0:
                save_snapshot(snapshot, z * problem.scale, it, pairs, trace, problem.scale, z)
        else:
            status = "max_iter"
    except KeyboardInterrupt:
        if snapshot is not None:
            save_snapshot(snapshot, z * problem.scale, it, pairs, trace, problem.scale, z)
            log.warning("interrupted at iteration %d; state saved to %s", it, snapshot)
        raise
    if snapshot is not None:
        save_snapshot(snapshot, z * problem.scale, it, pairs, trace, problem.scale, z)
    return LbfgsResult(z * problem.scale, f, g / problem.scale, trace, status, it)


def save_snapshot(path, x, iteration, pairs, trace: InversionTrace, scale=None, z=None) -> None:
    """JSON state; ``z`` is the normalized iterate, kept so a resume is bit-exact."""
    state = {
        "x": [float(v) for v in x],
        "z": None if z is None else [float(v) for v in z],
        "scale": None if scale is None else [float(v) for v in scale],
        "iteration": int(iteration),
        "s": [[float(v) for v in s] for s, _, _ in pairs],
        "y": [[float(v) for v in y] for _, y, _ in pairs],
        "trace": [trace.misfit, trace.gnorm, trace.step, trace.evaluations, [list(map(float, v)) for v in trace.iterates]],
    }
    Path(path).write_text(json.dumps(state))


def load_snapshot(path) -> dict:
    return json.loads(Path(path).read_text())


def options_dict(opts: LbfgsOptions) -> dict:
    return asdict(opts)
