"""One-dimensional diagonal-norm summation-by-parts operators.

The first-derivative operator is stored as ``D1 = H^{-1} Q`` with
``Q + Q^T = diag(-1, 0, ..., 0, 1)``.  Second-derivative operators are built
in weak form from a symmetric positive semi-definite matrix ``M`` and a
boundary-derivative row ``S`` at each end,

    H D2(c) = -M(c) - c_0 e_0 S_0^T + c_N e_N S_N^T,

so the SBP identity holds by construction and the remainder
``R = M(c) - D1^T H C D1`` carries the stencil-width information.

Two forms are available.  ``"narrow"`` (order 2 only) is the compact
three-point variable-coefficient stencil with a second-order one-sided
boundary derivative.  ``"wide"`` uses ``M = D1^T H C D1`` and the boundary
rows of ``D1`` as the boundary derivative, which gives ``R = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class Closure:
    """Coefficient table for one diagonal-norm first-derivative operator.

    ``norm`` holds the boundary norm weights in units of the spacing,
    ``interior`` the antisymmetric interior stencil of ``Q`` for offsets
    ``1..k`` and ``block`` the upper-left rows of ``Q`` (unit spacing).
    """

    order: int
    norm: tuple[float, ...]
    interior: tuple[float, ...]
    block: tuple[tuple[float, ...], ...]

    @property
    def min_points(self) -> int:
        width = max(len(r) for r in self.block)
        return 2 * max(width, len(self.norm)) + 1


def _f(text: str) -> float:
    return float(Fraction(text))


def _rows(rows: list[list[str]]) -> tuple[tuple[float, ...], ...]:
    return tuple(tuple(_f(x) for x in r) for r in rows)


BUILTIN_CLOSURES: dict[int, Closure] = {
    2: Closure(
        order=2,
        norm=(0.5,),
        interior=(0.5,),
        block=_rows([["-1/2", "1/2"]]),
    ),
    4: Closure(
        order=4,
        norm=tuple(_f(x) for x in ["17/48", "59/48", "43/48", "49/48"]),
        interior=(2.0 / 3.0, -1.0 / 12.0),
        block=_rows(
            [
                ["-1/2", "59/96", "-1/12", "-1/32"],
                ["-59/96", "0", "59/96", "0"],
                ["1/12", "-59/96", "0", "59/96", "-1/12"],
                ["1/32", "0", "-59/96", "0", "2/3", "-1/12"],
            ]
        ),
    ),
    6: Closure(
        order=6,
        norm=tuple(
            _f(x)
            for x in ["13649/43200", "12013/8640", "2711/4320", "5359/4320", "7877/8640", "43801/43200"]
        ),
        interior=(0.75, -0.15, 1.0 / 60.0),
        block=_rows(
            [
                ["-1/2", "104009/172800", "30443/259200", "-33311/86400", "5621/28800", "-601/20736"],
                ["-104009/172800", "0", "-311/51840", "6743/5760", "-24337/34560", "36661/259200"],
                ["-30443/259200", "311/51840", "0", "-2231/5184", "41287/51840", "-7333/28800"],
                ["33311/86400", "-6743/5760", "2231/5184", "0", "4147/17280", "25427/259200", "1/60"],
                ["-5621/28800", "24337/34560", "-41287/51840", "-4147/17280", "0", "342523/518400", "-3/20", "1/60"],
                ["601/20736", "-36661/259200", "7333/28800", "-25427/259200", "-342523/518400", "0", "3/4", "-3/20", "1/60"],
            ]
        ),
    ),
}


def load_coefficient_table(path: str | Path) -> dict[str, Closure]:
    """Read operator closures from a plain-text coefficient table.

    Format (``#`` starts a comment, numbers may be fractions)::

        operator NAME
        order 4
        norm 17/48 59/48 43/48 49/48
        interior 2/3 -1/12
        row -1/2 59/96 -1/12 -1/32
        row ...
        end

    ``interior`` lists the ``Q`` stencil for offsets 1..k; each ``row`` is
    one boundary row of ``Q`` starting at column 0.
    """
    tables: dict[str, Closure] = {}
    name = None
    fields: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *vals = line.split()
        if key == "operator":
            name, fields = vals[0], {"rows": []}
        elif name is None:
            raise ValueError(f"{path}:{lineno}: '{key}' outside an operator stanza")
        elif key == "order":
            fields["order"] = int(vals[0])
        elif key in ("norm", "interior"):
            fields[key] = tuple(_f(v) for v in vals)
        elif key == "row":
            fields["rows"].append(tuple(_f(v) for v in vals))
        elif key == "end":
            missing = {"order", "norm", "interior"} - set(fields)
            if missing or not fields["rows"]:
                raise ValueError(f"{path}:{lineno}: stanza '{name}' incomplete ({sorted(missing)})")
            tables[name] = Closure(fields["order"], fields["norm"], fields["interior"], tuple(fields["rows"]))
            name = None
        else:
            raise ValueError(f"{path}:{lineno}: unknown key '{key}'")
    if name is not None:
        raise ValueError(f"{path}: stanza '{name}' not terminated by 'end'")
    return tables


@dataclass(frozen=True)
class SbpNorm:
    """Diagonal quadrature ``H`` on an equispaced grid."""

    weights: np.ndarray
    order: int
    spacing: float

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.dot(u * self.weights, v))

    @property
    def length(self) -> float:
        return float(self.weights.sum())

    def matrix(self) -> sp.dia_matrix:
        return sp.diags(self.weights)


@dataclass(frozen=True)
class Sbp1D:
    """First-derivative SBP operator with its norm and boundary data."""

    n: int
    spacing: float
    order: int
    norm: SbpNorm
    q: sp.csr_matrix
    d1: sp.csr_matrix
    d2_form: str
    bd_left: np.ndarray = field(repr=False)
    bd_right: np.ndarray = field(repr=False)

    @property
    def x(self) -> np.ndarray:
        return self.spacing * np.arange(self.n)

    def e_left(self) -> np.ndarray:
        e = np.zeros(self.n)
        e[0] = 1.0
        return e

    def e_right(self) -> np.ndarray:
        e = np.zeros(self.n)
        e[-1] = 1.0
        return e


def _assemble_q(n: int, closure: Closure) -> sp.csr_matrix:
    q = sp.lil_matrix((n, n))
    nb = len(closure.block)
    for i in range(nb, n - nb):
        for k, c in enumerate(closure.interior, 1):
            q[i, i + k] = c
            q[i, i - k] = -c
    for i, row in enumerate(closure.block):
        for j, c in enumerate(row):
            if c != 0.0:
                q[i, j] = c
                q[n - 1 - i, n - 1 - j] = -c
    return q.tocsr()


def build_sbp_1d(
    n: int,
    spacing: float,
    order: int,
    d2_form: str | None = None,
    closure: Closure | None = None,
) -> Sbp1D:
    """Build the diagonal-norm SBP operator of the given order.

    ``d2_form`` selects the second-derivative family used by
    :func:`d2_energy_matrix`; it defaults to ``"narrow"`` for order 2 and
    ``"wide"`` otherwise.  A custom ``closure`` (for instance from
    :func:`load_coefficient_table`) replaces the built-in coefficients.
    """
    if closure is None:
        if order not in BUILTIN_CLOSURES:
            raise ValueError(f"unsupported SBP order {order}; expected one of {sorted(BUILTIN_CLOSURES)}")
        closure = BUILTIN_CLOSURES[order]
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    if n < closure.min_points:
        raise ValueError(f"order {order} needs at least {closure.min_points} points, got {n}")
    if d2_form is None:
        d2_form = "narrow" if order == 2 else "wide"
    if d2_form not in ("narrow", "wide"):
        raise ValueError(f"unknown second-derivative form '{d2_form}'")
    if d2_form == "narrow" and order != 2:
        raise ValueError("the narrow second-derivative form is only available for order 2")

    w = np.ones(n)
    nw = len(closure.norm)
    w[:nw] = closure.norm
    w[n - nw :] = closure.norm[::-1]
    w *= spacing
    norm = SbpNorm(weights=w, order=order, spacing=spacing)
    q = _assemble_q(n, closure)
    d1 = (sp.diags(1.0 / w) @ q).tocsr()
    if d2_form == "narrow":
        bd_left = np.zeros(n)
        bd_left[:3] = np.array([-1.5, 2.0, -0.5]) / spacing
        bd_right = np.zeros(n)
        bd_right[-3:] = np.array([0.5, -2.0, 1.5]) / spacing
    else:
        bd_left = d1[0].toarray().ravel()
        bd_right = d1[n - 1].toarray().ravel()
    return Sbp1D(n, spacing, order, norm, q, d1, d2_form, bd_left, bd_right)


def narrow_difference(n: int, spacing: float) -> sp.csr_matrix:
    """Forward difference ``(u_{i+1} - u_i)`` as an ``(n-1) x n`` matrix."""
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr")


def d2_energy_matrix(op: Sbp1D, c: np.ndarray) -> sp.csr_matrix:
    """Symmetric positive semi-definite ``M(c)`` of the second derivative."""
    c = np.asarray(c, dtype=float)
    if np.any(c <= 0):
        raise ValueError("coefficient must be strictly positive")
    if op.d2_form == "narrow":
        diff = narrow_difference(op.n, op.spacing)
        edge_c = 0.5 * (c[1:] + c[:-1]) / op.spacing
        return (diff.T @ sp.diags(edge_c) @ diff).tocsr()
    return (op.d1.T @ sp.diags(op.norm.weights * c) @ op.d1).tocsr()


@dataclass(frozen=True)
class SecondDerivative:
    """``D2(c)`` together with the pieces of its SBP decomposition."""

    matrix: sp.csr_matrix
    energy: sp.csr_matrix
    flux_left: np.ndarray
    flux_right: np.ndarray


def build_d2_variable(op: Sbp1D, mu: np.ndarray) -> SecondDerivative:
    """Variable-coefficient second derivative approximating ``d/dx(mu d/dx)``.

    ``flux_left`` and ``flux_right`` are the rows giving ``mu du/dx`` at the
    two ends, so ``H D2 = -M + e_R flux_right^T - e_L flux_left^T``.
    """
    mu = np.asarray(mu, dtype=float)
    energy = d2_energy_matrix(op, mu)
    fl = mu[0] * op.bd_left
    fr = mu[-1] * op.bd_right
    bnd = sp.csr_matrix(np.vstack([-fl, fr]))
    rows = sp.csr_matrix(([1.0, 1.0], ([0, op.n - 1], [0, 1])), shape=(op.n, 2))
    hd2 = -energy + rows @ bnd
    mat = (sp.diags(1.0 / op.norm.weights) @ hd2).tocsr()
    mat.eliminate_zeros()
    return SecondDerivative(mat, energy, fl, fr)


def remainder(op: Sbp1D, mu: np.ndarray) -> sp.csr_matrix:
    """``R = M(mu) - D1^T H diag(mu) D1``; symmetric positive semi-definite."""
    mu = np.asarray(mu, dtype=float)
    compat = op.d1.T @ sp.diags(op.norm.weights * mu) @ op.d1
    return (d2_energy_matrix(op, mu) - compat).tocsr()


def borrowing_constant(op: Sbp1D) -> float:
    """Largest ``beta`` with ``u^T M(1) u >= beta h (S_L u)^2`` for all ``u``.

    Used to size the Dirichlet penalty of the characteristic SAT.
    """
    m = d2_energy_matrix(op, np.ones(op.n)).toarray()
    s = op.bd_left
    # S annihilates constants, so solve on the complement of the null space.
    proj = np.eye(op.n) - 1.0 / op.n
    mp = proj @ m @ proj + np.outer(np.ones(op.n), np.ones(op.n)) / op.n
    val = s @ np.linalg.solve(mp, s)
    return float(1.0 / (op.spacing * val))
