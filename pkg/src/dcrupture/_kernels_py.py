"""Vectorized numpy versions of the compiled friction kernels.

Both implementations share one contract so the solver can switch between
them at import time: all arguments are float64 arrays of equal length
(scalars broadcast) and results are new arrays.
"""

from __future__ import annotations

import numpy as np

LN2 = float(np.log(2.0))
_DIRECT_LIMIT = 600.0


def asinh_scaled(x, log_scale):
    """``asinh(x * exp(log_scale))`` for ``x >= 0`` without overflow."""
    x = np.asarray(x, dtype=float)
    log_scale = np.broadcast_to(np.asarray(log_scale, dtype=float), x.shape)
    out = np.empty(np.broadcast(x, log_scale).shape)
    direct = log_scale < _DIRECT_LIMIT
    with np.errstate(over="ignore", divide="ignore"):
        out[direct] = np.arcsinh(x[direct] * np.exp(log_scale[direct]))
        xs, ls = x[~direct], log_scale[~direct]
        yl = np.log(xs) + ls
        big = yl > 30.0
        out[~direct] = np.where(big, yl + LN2, np.arcsinh(np.exp(np.minimum(yl, 30.0))))
        out[~direct] = np.where(xs == 0.0, 0.0, out[~direct])
    return out


def _bracket(delta, kappa, psi_over_a, sigma_a, v0):
    """Upper end of the magnitude bracket for the slip-rate root."""
    r = np.abs(delta) / sigma_a
    with np.errstate(over="ignore", divide="ignore"):
        log_sinh = r + np.log1p(-np.exp(-2.0 * r)) - LN2
        vt = np.exp(np.log(2.0 * v0) + log_sinh - psi_over_a)
    return np.minimum(vt, np.abs(delta) / kappa)


def solve_v_star(tau_ell, kappa, psi, a, sigma_n, tau_total, v0, tol):
    """Bisection for ``kappa V + sigma_n a asinh(V e^{psi/a} / 2V0) = tau_total - tau_ell``.

    Iterates until the bracket is no wider than ``tol`` or cannot be split
    further in floating point.  Points with zero normal stress use the
    frictionless closed form.
    """
    tau_ell, kappa, psi, a, sigma_n, tau_total, v0 = np.broadcast_arrays(
        *(np.asarray(z, dtype=float) for z in (tau_ell, kappa, psi, a, sigma_n, tau_total, v0))
    )
    delta = tau_total - tau_ell
    sign = np.sign(delta)
    mag = np.abs(delta)
    out = np.zeros_like(delta)
    free = sigma_n == 0.0
    out[free] = delta[free] / kappa[free]
    act = (~free) & (mag > 0.0)
    if not np.any(act):
        return out
    k, mg = kappa[act], mag[act]
    psi_a = psi[act] / a[act]
    sig_a = sigma_n[act] * a[act]
    log_e = psi_a - np.log(2.0 * v0[act])
    lo = np.zeros_like(mg)
    hi = _bracket(mg, k, psi_a, sig_a, v0[act])
    live = np.ones(lo.shape, dtype=bool)
    for _ in range(2200):
        mid = lo + 0.5 * (hi - lo)
        live &= (hi - lo > tol) & (mid > lo) & (mid < hi)
        if not live.any():
            break
        res = k * mid + sig_a * asinh_scaled(mid, log_e) - mg
        up = live & (res > 0.0)
        dn = live & ~(res > 0.0)
        hi = np.where(up, mid, hi)
        lo = np.where(dn, mid, lo)
    out[act] = sign[act] * (lo + 0.5 * (hi - lo))
    return out


def friction_partials(v, psi, a, b, dc, f0, v0, sigma_n):
    """Friction traction, state rate and their four state partials.

    Returns ``(F + tau_total, G, F_V, F_psi, G_V, G_psi)`` where the offset
    ``tau_total`` is left to the caller.
    """
    v, psi, a, b, dc, f0, v0, sigma_n = np.broadcast_arrays(
        *(np.asarray(z, dtype=float) for z in (v, psi, a, b, dc, f0, v0, sigma_n))
    )
    av = np.abs(v)
    sgn = np.sign(v)
    psi_a = psi / a
    f = a * asinh_scaled(av, psi_a - np.log(2.0 * v0))
    with np.errstate(under="ignore", over="ignore", divide="ignore", invalid="ignore"):
        w = 2.0 * v0 * np.exp(-psi_a)
        den = np.hypot(v, w)
        f_v = a / den
        f_psi = np.where(den > 0.0, av / den, 0.0)
        moving = av > 0.0
        fss = f0 + (a - b) * np.log(np.where(moving, av / v0, 1.0))
        gap = f - fss
        g = np.where(moving, -av / dc * gap, 0.0)
        g_v = np.where(moving, -sgn / dc * (gap + av * f_v - (a - b)), 0.0)
    force = sigma_n * sgn * f
    f_vel = sigma_n * f_v
    f_state = sigma_n * sgn * f_psi
    g_state = -av / dc * f_psi
    return force, g, f_vel, f_state, g_v, g_state
