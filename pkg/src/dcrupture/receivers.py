"""Point receivers: discrete Dirac deltas, layouts and time windows."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geometry import CurvilinearGrid


def delta_weights_1d(nodes: np.ndarray, point: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices and weights of a 1D discrete delta.

    Uses the ``order + 1`` nodes nearest to ``point`` (shifted inwards at
    the ends) and solves the Vandermonde system so that
    ``sum_i w_i q(x_i) = q(point)`` for polynomials of degree ``<= order``.
    Returns interpolation weights; the quadrature-scaled delta is
    ``w / H``.
    """
    nodes = np.asarray(nodes, dtype=float)
    n = len(nodes)
    npts = order + 1
    if n < npts:
        raise ValueError("grid too small for the requested delta order")
    if point < nodes[0] - 1e-12 * abs(nodes[-1] - nodes[0]) or point > nodes[-1] + 1e-12 * abs(nodes[-1] - nodes[0]):
        raise ValueError(f"point {point} outside the grid")
    h = (nodes[-1] - nodes[0]) / (n - 1)
    nearest = int(np.argmin(np.abs(nodes - point)))
    start = nearest - order // 2
    if order % 2 == 1 and point < nodes[nearest]:
        start -= 1
    start = min(max(start, 0), n - npts)
    idx = np.arange(start, start + npts)
    z = (nodes[idx] - point) / h
    vander = np.vander(z, npts, increasing=True).T
    rhs = np.zeros(npts)
    rhs[0] = 1.0
    return idx, np.linalg.solve(vander, rhs)


@dataclass(frozen=True)
class TimeWindow:
    """Multiplicative window: one on ``[start, end]`` with cosine tapers."""

    start: float = 0.0
    end: float = np.inf
    taper: float = 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        w = ((t >= self.start) & (t <= self.end)).astype(float)
        if self.taper > 0:
            up = (t >= self.start) & (t < self.start + self.taper)
            w = np.where(up, 0.5 - 0.5 * np.cos(np.pi * (t - self.start) / self.taper), w)
            dn = (t > self.end - self.taper) & (t <= self.end)
            w = np.where(dn, 0.5 - 0.5 * np.cos(np.pi * (self.end - t) / self.taper), w)
        return w


@dataclass
class ReceiverSet:
    """Receivers sampling displacement or velocity through discrete deltas.

    ``sampler`` maps the concatenated (minus, plus) grid function to the
    receiver values.  ``data`` holds one row per RK stage when present.
    """

    positions: np.ndarray
    blocks: np.ndarray
    sampler: sp.csr_matrix
    kind: str = "velocity"
    window: TimeWindow | None = None
    data: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("displacement", "velocity"):
            raise ValueError(f"receiver kind must be 'displacement' or 'velocity', got '{self.kind}'")

    @property
    def count(self) -> int:
        return len(self.positions)

    def weights(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.ones_like(t) if self.window is None else self.window(t)

    def with_data(self, data: np.ndarray | None) -> "ReceiverSet":
        return ReceiverSet(self.positions, self.blocks, self.sampler, self.kind, self.window, data)


def rectangle_layout(outer: tuple[float, float, float, float], inner: tuple[float, float, float, float], spacing: float) -> np.ndarray:
    """Receivers on a regular lattice in ``outer`` minus the open ``inner`` box.

    Boxes are ``(x_min, x_max, y_min, y_max)`` in km.  Points on the inner
    box boundary are kept.
    """
    x0, x1, y0, y1 = outer
    ix0, ix1, iy0, iy1 = inner
    nx = int(round((x1 - x0) / spacing)) + 1
    ny = int(round((y1 - y0) / spacing)) + 1
    xs = x0 + spacing * np.arange(nx)
    ys = y0 + spacing * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    eps = 1e-9 * spacing
    inside = (gx > ix0 + eps) & (gx < ix1 - eps) & (gy > iy0 + eps) & (gy < iy1 - eps)
    return np.column_stack([gx[~inside], gy[~inside]])


def build_receivers(
    grid: CurvilinearGrid,
    positions: np.ndarray,
    kind: str = "velocity",
    window: TimeWindow | None = None,
    order: int | None = None,
) -> ReceiverSet:
    """Discrete-delta sampler for points in the two-block grid.

    Points with ``y`` at or below the fault trace belong to the minus
    block.  Moment conditions hold in reference coordinates, which
    coincide with physical coordinates for a planar fault.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    order = grid.minus.xi_op.order if order is None else order
    prof = grid.profile
    m, n = grid.m, grid.n
    xi_nodes = prof.x
    eta_nodes = grid.minus.eta_op.x
    rows, cols, vals, blocks = [], [], [], []
    for r, (xr, yr) in enumerate(positions):
        yf = float(np.interp(xr, prof.x, prof.y))
        if yr <= yf:
            t = (yr + grid.depth) / (yf + grid.depth)
            blk, offset = 0, 0
        else:
            t = (yr - yf) / (grid.depth - yf)
            blk, offset = 1, m * n
        if not (-1e-12 <= t <= 1 + 1e-12):
            raise ValueError(f"receiver {r} at ({xr}, {yr}) lies outside the domain")
        ii, wi = delta_weights_1d(xi_nodes, xr, order)
        jj, wj = delta_weights_1d(eta_nodes, t * grid.depth, order)
        w2 = np.outer(wi, wj)
        flat = offset + (ii[:, None] * n + jj[None, :])
        rows.append(np.full(w2.size, r))
        cols.append(flat.ravel())
        vals.append(w2.ravel())
        blocks.append(blk)
    sampler = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(len(positions), 2 * m * n)
    )
    return ReceiverSet(positions, np.array(blocks), sampler, kind, window)
