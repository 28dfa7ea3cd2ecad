# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-point friction kernels (see ``_kernels_py`` for the contract)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport asinh, exp, log, log1p, fabs, sqrt, hypot, fmin

cnp.import_array()

cdef double LN2 = 0.6931471805599453
cdef double DIRECT_LIMIT = 600.0


cdef inline double _asinh_scaled(double x, double log_scale) nogil:
    cdef double yl
    if x == 0.0:
        return 0.0
    if log_scale < DIRECT_LIMIT:
        return asinh(x * exp(log_scale))
    yl = log(x) + log_scale
    if yl > 30.0:
        return yl + LN2
    return asinh(exp(yl))


def asinh_scaled(x, log_scale):
    cdef cnp.ndarray[double] xa, la, out
    xa, la = [np.ascontiguousarray(z, dtype=np.float64).ravel() for z in np.broadcast_arrays(
        np.asarray(x, dtype=np.float64), np.asarray(log_scale, dtype=np.float64))]
    out = np.empty(xa.shape[0])
    cdef Py_ssize_t i
    for i in range(xa.shape[0]):
        out[i] = _asinh_scaled(xa[i], la[i])
    return out.reshape(np.broadcast(np.asarray(x), np.asarray(log_scale)).shape)


cdef double _solve_point(double tau_ell, double kappa, double psi, double a, double sigma_n,
                         double tau_total, double v0, double tol) nogil:
    cdef double delta = tau_total - tau_ell
    cdef double mag = fabs(delta)
    cdef double sgn = 1.0 if delta > 0.0 else -1.0
    cdef double psi_a, sig_a, log_e, r, vt, lo, hi, mid, res
    cdef int it
    if sigma_n == 0.0:
        return delta / kappa
    if mag == 0.0:
        return 0.0
    psi_a = psi / a
    sig_a = sigma_n * a
    log_e = psi_a - log(2.0 * v0)
    r = mag / sig_a
    vt = exp(log(2.0 * v0) + r + log1p(-exp(-2.0 * r)) - LN2 - psi_a)
    lo = 0.0
    hi = fmin(vt, mag / kappa)
    for it in range(2200):
        mid = lo + 0.5 * (hi - lo)
        if not (hi - lo > tol and mid > lo and mid < hi):
            break
        res = kappa * mid + sig_a * _asinh_scaled(mid, log_e) - mag
        if res > 0.0:
            hi = mid
        else:
            lo = mid
    return sgn * (lo + 0.5 * (hi - lo))


def solve_v_star(tau_ell, kappa, psi, a, sigma_n, tau_total, v0, double tol):
    arrs = np.broadcast_arrays(*(np.asarray(z, dtype=np.float64) for z in
                                 (tau_ell, kappa, psi, a, sigma_n, tau_total, v0)))
    shape = arrs[0].shape
    cdef const double[::1] te, ka, ps, aa, sg, tt, vv
    te, ka, ps, aa, sg, tt, vv = [np.ascontiguousarray(z).ravel() for z in arrs]
    cdef Py_ssize_t n = te.shape[0], i
    out = np.empty(n)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = _solve_point(te[i], ka[i], ps[i], aa[i], sg[i], tt[i], vv[i], tol)
    return out.reshape(shape)


def friction_partials(v, psi, a, b, dc, f0, v0, sigma_n):
    arrs = np.broadcast_arrays(*(np.asarray(z, dtype=np.float64) for z in
                                 (v, psi, a, b, dc, f0, v0, sigma_n)))
    shape = arrs[0].shape
    cdef const double[::1] vv, pp, aa, bb, dd, ff, v0a, ss
    vv, pp, aa, bb, dd, ff, v0a, ss = [np.ascontiguousarray(z).ravel() for z in arrs]
    cdef Py_ssize_t n = vv.shape[0], i
    outs = [np.empty(n) for _ in range(6)]
    cdef double[::1] o_f = outs[0], o_g = outs[1], o_fv = outs[2], o_fp = outs[3], o_gv = outs[4], o_gp = outs[5]
    cdef double av, sgn, psi_a, f, w, den, f_v, f_psi, fss, gap
    with nogil:
        for i in range(n):
            av = fabs(vv[i])
            sgn = 0.0 if vv[i] == 0.0 else (1.0 if vv[i] > 0.0 else -1.0)
            psi_a = pp[i] / aa[i]
            f = aa[i] * _asinh_scaled(av, psi_a - log(2.0 * v0a[i]))
            w = 2.0 * v0a[i] * exp(-psi_a)
            den = hypot(vv[i], w)
            f_v = aa[i] / den
            f_psi = av / den if den > 0.0 else 0.0
            o_f[i] = ss[i] * sgn * f
            o_fv[i] = ss[i] * f_v
            o_fp[i] = ss[i] * sgn * f_psi
            o_gp[i] = -av / dd[i] * f_psi
            if av > 0.0:
                fss = ff[i] + (aa[i] - bb[i]) * log(av / v0a[i])
                gap = f - fss
                o_g[i] = -av / dd[i] * gap
                o_gv[i] = -sgn / dd[i] * (gap + av * f_v - (aa[i] - bb[i]))
            else:
                o_g[i] = 0.0
                o_gv[i] = 0.0
    return tuple(o.reshape(shape) for o in outs)
