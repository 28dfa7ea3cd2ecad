"""Norm-compatible interpolation between a coarse parameter grid and the fault.

The coarse-to-fine operator is piecewise linear on the glue grid formed by
the union of coarse and fine nodes, which for degree one reduces to
evaluating coarse hat functions at the fine nodes.  The fine-to-coarse
operator is its adjoint,

    I_f2c = H_c^{-1} I_c2f^T H_f,

with the coarse inner product chosen as the Gram matrix
``H_c = I_c2f^T H_f I_c2f``.  This choice makes ``I_f2c`` the
``H_f``-orthogonal projection onto coarse piecewise-linear functions, so
both operators are exact on constants and linear functions up to the
boundary.  A diagonal (lumped) coarse norm is available for comparison but
loses linear exactness of ``I_f2c`` in the first and last coarse cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp


@dataclass(frozen=True)
class InterpolationPair:
    """Coarse/fine operator pair adjoint under the two inner products."""

    coarse_nodes: np.ndarray
    fine_nodes: np.ndarray
    c2f: sp.csr_matrix
    f2c: np.ndarray
    coarse_norm: np.ndarray
    fine_norm: np.ndarray

    def coarse_inner(self, p: np.ndarray, q: np.ndarray) -> float:
        return float(p @ (self.coarse_norm @ q))

    def fine_inner(self, u: np.ndarray, w: np.ndarray) -> float:
        return float(np.dot(u * self.fine_norm, w))

    def coarse_gradient(self, fine_density: np.ndarray) -> np.ndarray:
        """``H_c I_f2c phi``, which equals ``I_c2f^T H_f phi``."""
        return self.coarse_norm @ (self.f2c @ fine_density)


def hat_matrix(coarse_nodes: np.ndarray, fine_nodes: np.ndarray) -> sp.csr_matrix:
    """Piecewise-linear interpolation from ``coarse_nodes`` to ``fine_nodes``."""
    xc = np.asarray(coarse_nodes, dtype=float)
    xf = np.asarray(fine_nodes, dtype=float)
    if np.any(np.diff(xc) <= 0):
        raise ValueError("coarse nodes must be strictly increasing")
    k = np.clip(np.searchsorted(xc, xf, side="right") - 1, 0, len(xc) - 2)
    t = (xf - xc[k]) / (xc[k + 1] - xc[k])
    rows = np.repeat(np.arange(len(xf)), 2)
    cols = np.column_stack([k, k + 1]).ravel()
    vals = np.column_stack([1.0 - t, t]).ravel()
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(len(xf), len(xc)))
    mat.eliminate_zeros()
    return mat


def build_interpolation(
    coarse_nodes: np.ndarray,
    fine_nodes: np.ndarray,
    fine_norm: np.ndarray,
    coarse_norm: str | np.ndarray = "gram",
) -> InterpolationPair:
    """Build the interpolation pair on a common parameter interval.

    ``coarse_norm`` is ``"gram"`` (default), ``"lumped"`` (row sums of the
    Gram matrix) or an explicit positive weight vector.
    """
    xc = np.asarray(coarse_nodes, dtype=float)
    xf = np.asarray(fine_nodes, dtype=float)
    hf = np.asarray(fine_norm, dtype=float)
    if len(xf) < len(xc):
        raise ValueError("fine grid must have at least as many nodes as the coarse grid")
    if len(hf) != len(xf) or np.any(hf <= 0):
        raise ValueError("fine norm must be positive with one weight per fine node")
    span = max(abs(xc[-1] - xc[0]), abs(xf[-1] - xf[0]))
    if abs(xc[0] - xf[0]) > 1e-12 * span or abs(xc[-1] - xf[-1]) > 1e-12 * span:
        raise ValueError("coarse and fine grids must cover the same interval")
    c2f = hat_matrix(xc, xf)
    gram = (c2f.T @ sp.diags(hf) @ c2f).toarray()
    gram = 0.5 * (gram + gram.T)
    if isinstance(coarse_norm, str):
        if coarse_norm == "gram":
            hc = gram
        elif coarse_norm == "lumped":
            hc = np.diag(gram.sum(axis=1))
        else:
            raise ValueError(f"unknown coarse norm '{coarse_norm}'")
    else:
        w = np.asarray(coarse_norm, dtype=float)
        if w.shape != xc.shape or np.any(w <= 0):
            raise ValueError("explicit coarse norm must be positive with one weight per coarse node")
        hc = np.diag(w)
    rhs = (c2f.T @ sp.diags(hf)).toarray()
    f2c = sla.cho_solve(sla.cho_factor(hc), rhs)
    return InterpolationPair(xc, xf, c2f, f2c, hc, hf)


def identity_interpolation(nodes: np.ndarray, norm: np.ndarray) -> InterpolationPair:
    """Pass-through pair used when the parameter grid equals the fault grid."""
    n = len(nodes)
    hf = np.asarray(norm, dtype=float)
    return InterpolationPair(
        np.asarray(nodes, float), np.asarray(nodes, float), sp.identity(n, format="csr"), np.eye(n), np.diag(hf), hf
    )
