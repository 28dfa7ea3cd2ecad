"""Two-dimensional SBP operators on one mapped block.

A block is the image of a reference rectangle ``[xi0, xi1] x [0, Ly]``
sampled with ``m x n`` nodes; grid functions are flattened in C order of
the ``(m, n)`` array (``xi`` index slow, ``eta`` index fast).

The curvilinear operator approximating ``div(mu grad u)`` is assembled in
weak form in reference coordinates,

    H_ref D_ref = -M + sum_e E_e^T h_e F_e,

with ``M`` symmetric positive semi-definite and ``F_e`` the reference
normal flux on edge ``e``.  Physical quantities follow from the metric:
``D_II = D_ref / J``, ``H_Omega = J H_ref``, boundary quadrature
``zeta_e = s_e h_e`` and traction ``tau_e = F_e u / s_e`` where ``s_e`` is
the arc-length factor of the edge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .operators1d import Sbp1D, borrowing_constant, narrow_difference

EDGE_NAMES = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class Metrics:
    """Covariant derivatives of the physical coordinates, shape ``(m, n)``."""

    x_xi: np.ndarray
    x_eta: np.ndarray
    y_xi: np.ndarray
    y_eta: np.ndarray

    @property
    def jacobian(self) -> np.ndarray:
        return self.x_xi * self.y_eta - self.x_eta * self.y_xi

    def coefficients(self, mu: np.ndarray | float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``mu J grad(xi_i) . grad(xi_j)`` for the three independent pairs."""
        jac = self.jacobian
        c11 = mu * (self.x_eta**2 + self.y_eta**2) / jac
        c12 = -mu * (self.x_xi * self.x_eta + self.y_xi * self.y_eta) / jac
        c22 = mu * (self.x_xi**2 + self.y_xi**2) / jac
        return c11, c12, c22


def identity_metrics(m: int, n: int) -> Metrics:
    one, zero = np.ones((m, n)), np.zeros((m, n))
    return Metrics(one, zero, zero.copy(), one.copy())


def metrics_from_coordinates(xi_op: Sbp1D, eta_op: Sbp1D, x: np.ndarray, y: np.ndarray) -> Metrics:
    """Metric terms from ``D1`` applied to the node coordinates.

    Using the same difference operators for all four derivatives makes the
    discrete mixed derivatives commute, which is what free-stream
    preservation needs.
    """
    dxi = lambda f: xi_op.d1 @ f  # noqa: E731
    deta = lambda f: (eta_op.d1 @ f.T).T  # noqa: E731
    return Metrics(dxi(x), deta(x), dxi(y), deta(y))


@dataclass(frozen=True)
class Edge:
    """Boundary segment data for the SAT terms of one block edge."""

    name: str
    nodes: np.ndarray
    weights: np.ndarray
    arc: np.ndarray
    flux: sp.csr_matrix
    normal: np.ndarray
    penalty: np.ndarray

    @property
    def quadrature(self) -> np.ndarray:
        return self.weights * self.arc

    def traction(self, u: np.ndarray) -> np.ndarray:
        return (self.flux @ u) / self.arc

    @property
    def size(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class BlockOperator:
    """Assembled operators for one block of the multiblock grid."""

    shape: tuple[int, int]
    xi_op: Sbp1D
    eta_op: Sbp1D
    energy: sp.csr_matrix
    h_ref: np.ndarray
    jacobian: np.ndarray
    mu: np.ndarray
    edges: dict[str, Edge]

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def h_phys(self) -> np.ndarray:
        return self.jacobian * self.h_ref

    def boundary_lift(self, name: str) -> sp.csr_matrix:
        """Selection matrix ``E_e`` (edge size x block size)."""
        e = self.edges[name]
        return sp.csr_matrix((np.ones(e.size), (np.arange(e.size), e.nodes)), shape=(e.size, self.size))

    def laplacian_matrix(self) -> sp.csr_matrix:
        """Assembled ``D_II(mu)`` in physical coordinates."""
        hd = -self.energy
        for name, e in self.edges.items():
            hd = hd + self.boundary_lift(name).T @ sp.diags(e.weights) @ e.flux
        return (sp.diags(1.0 / self.h_phys) @ hd).tocsr()

    def apply_laplacian(self, u: np.ndarray) -> np.ndarray:
        r = -(self.energy @ u)
        for e in self.edges.values():
            np.add.at(r, e.nodes, e.weights * (e.flux @ u))
        return r / self.h_phys

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.dot(u * self.h_phys, v))

    def boundary_inner(self, name: str, f: np.ndarray, g: np.ndarray) -> float:
        return float(np.dot(f * self.edges[name].quadrature, g))


def _kron_xi(a: sp.spmatrix, n: int) -> sp.csr_matrix:
    return sp.kron(a, sp.identity(n), format="csr")


def _kron_eta(a: sp.spmatrix, m: int) -> sp.csr_matrix:
    return sp.kron(sp.identity(m), a, format="csr")


def _narrow_term(op: Sbp1D, c: np.ndarray, cross_weights: np.ndarray, along_xi: bool) -> sp.csr_matrix:
    """Narrow ``sum h_perp cbar (du)^2 / h`` over grid edges in one direction."""
    m, n = c.shape
    if along_xi:
        diff = _kron_xi(narrow_difference(m, op.spacing), n)
        cbar = 0.5 * (c[1:, :] + c[:-1, :]) * cross_weights[None, :]
    else:
        diff = _kron_eta(narrow_difference(n, op.spacing), m)
        cbar = 0.5 * (c[:, 1:] + c[:, :-1]) * cross_weights[:, None]
    return (diff.T @ sp.diags(cbar.ravel() / op.spacing) @ diff).tocsr()


def build_block_operator(
    xi_op: Sbp1D,
    eta_op: Sbp1D,
    metrics: Metrics,
    mu: np.ndarray | float,
    penalty_factor: float = 1.0,
) -> BlockOperator:
    """Assemble the weak-form curvilinear operator for one block.

    ``penalty_factor`` scales the Dirichlet penalty of the characteristic
    SAT relative to the borrowing bound of the operator family.
    """
    m, n = xi_op.n, eta_op.n
    jac = metrics.jacobian
    if jac.shape != (m, n):
        raise ValueError(f"metric shape {jac.shape} does not match operators ({m}, {n})")
    if np.any(jac <= 0):
        raise ValueError("non-positive Jacobian: the mapping is folded")
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (m, n))
    if np.any(mu <= 0):
        raise ValueError("shear modulus must be strictly positive")
    c11, c12, c22 = metrics.coefficients(mu)
    hxi, heta = xi_op.norm.weights, eta_op.norm.weights
    h_ref = np.outer(hxi, heta).ravel()

    dxi = _kron_xi(xi_op.d1, n)
    deta = _kron_eta(eta_op.d1, m)
    if xi_op.d2_form == "narrow":
        mxx = _narrow_term(xi_op, c11, heta, along_xi=True)
    else:
        mxx = dxi.T @ sp.diags(h_ref * c11.ravel()) @ dxi
    if eta_op.d2_form == "narrow":
        myy = _narrow_term(eta_op, c22, hxi, along_xi=False)
    else:
        myy = deta.T @ sp.diags(h_ref * c22.ravel()) @ deta
    cross = dxi.T @ sp.diags(h_ref * c12.ravel()) @ deta
    energy = (mxx + myy + cross + cross.T).tocsr()
    energy = (0.5 * (energy + energy.T)).tocsr()

    idx = np.arange(m * n).reshape(m, n)
    beta_xi = borrowing_constant(xi_op)
    beta_eta = borrowing_constant(eta_op)
    s_xi = np.sqrt(metrics.x_eta**2 + metrics.y_eta**2)
    s_eta = np.sqrt(metrics.x_xi**2 + metrics.y_xi**2)
    edges: dict[str, Edge] = {}
    for name in EDGE_NAMES:
        if name in ("left", "right"):
            i = 0 if name == "left" else m - 1
            sign = -1.0 if name == "left" else 1.0
            bd = xi_op.bd_left if name == "left" else xi_op.bd_right
            nodes = idx[i, :]
            normal_d = sp.kron(sp.csr_matrix(bd), sp.identity(n), format="csr")
            tangent_d = deta[nodes, :]
            cnn, cnt = c11[i, :], c12[i, :]
            weights, arc = heta.copy(), s_xi[i, :]
            gx, gy = metrics.y_eta[i, :], -metrics.x_eta[i, :]
            beta, h_n = beta_xi, xi_op.spacing
        else:
            j = 0 if name == "bottom" else n - 1
            sign = -1.0 if name == "bottom" else 1.0
            bd = eta_op.bd_left if name == "bottom" else eta_op.bd_right
            nodes = idx[:, j]
            normal_d = sp.kron(sp.identity(m), sp.csr_matrix(bd), format="csr")
            tangent_d = dxi[nodes, :]
            cnn, cnt = c22[:, j], c12[:, j]
            weights, arc = hxi.copy(), s_eta[:, j]
            gx, gy = -metrics.y_xi[:, j], metrics.x_xi[:, j]
            beta, h_n = beta_eta, eta_op.spacing
        flux = sign * (sp.diags(cnn) @ normal_d + sp.diags(cnt) @ tangent_d)
        glen = np.hypot(gx, gy)
        normal = sign * np.column_stack([gx / glen, gy / glen])
        # Corner nodes belong to two edges, so each edge may borrow only half.
        penalty_ref = penalty_factor * 2.0 * (cnn + np.abs(cnt)) / (beta * h_n)
        edges[name] = Edge(name, nodes, weights, arc, flux.tocsr(), normal, penalty_ref / arc)
    return BlockOperator((m, n), xi_op, eta_op, energy, h_ref, jac.ravel(), mu.ravel().copy(), edges)
