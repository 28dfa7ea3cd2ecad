import numpy as np
import pytest
import scipy.sparse as sp

from dcrupture.geometry import build_grid, make_fractal_profile, planar_profile
from dcrupture.sbp import (
    BUILTIN_CLOSURES,
    build_d2_variable,
    build_sbp_1d,
    d2_energy_matrix,
    load_coefficient_table,
    remainder,
)

ORDERS = (2, 4, 6)


def test_second_order_norm_weights():
    op = build_sbp_1d(5, 1.0, 2)
    np.testing.assert_array_equal(op.norm.weights, [0.5, 1, 1, 1, 0.5])
    assert op.norm.length == 4.0


@pytest.mark.parametrize("order", ORDERS)
def test_norm_positive_and_sums_to_length(order):
    n, h = 41, 0.37
    op = build_sbp_1d(n, h, order)
    w = op.norm.weights
    assert np.all(w > 0)
    assert abs(w.sum() - h * (n - 1)) <= 1e-12 * h * (n - 1)
    nb = len(BUILTIN_CLOSURES[order].norm)
    np.testing.assert_allclose(w[nb:-nb], h, rtol=1e-15)


@pytest.mark.parametrize("order", ORDERS)
def test_first_derivative_sbp_property(order):
    op = build_sbp_1d(30, 0.1, order)
    hmat = op.norm.matrix()
    lhs = (hmat @ op.d1 + op.d1.T @ hmat).toarray()
    bnd = np.outer(op.e_right(), op.e_right()) - np.outer(op.e_left(), op.e_left())
    np.testing.assert_allclose(lhs, bnd, atol=1e-13)


@pytest.mark.parametrize("order", ORDERS)
def test_first_derivative_polynomial_exactness(order):
    n, h = 40, 0.05
    op = build_sbp_1d(n, h, order)
    x = op.x
    nb = len(BUILTIN_CLOSURES[order].block)
    assert np.max(np.abs(op.d1 @ np.ones(n))) <= 1e-12
    for deg in range(1, order + 1):
        err = np.abs(op.d1 @ x**deg - deg * x ** (deg - 1))
        assert np.max(err[nb:-nb]) <= 1e-9, deg
        if deg <= order // 2:
            assert np.max(err) <= 1e-9, deg


@pytest.mark.parametrize("order", ORDERS)
def test_quadrature_exact_for_low_degree(order):
    n, h = 41, 1.0 / 40
    op = build_sbp_1d(n, h, order)
    for deg in range(order):
        assert abs(op.norm.weights @ op.x**deg - 1.0 / (deg + 1)) <= 1e-13, deg


def test_fourth_order_d2_of_square_is_two_in_interior():
    n, h = 41, 0.05
    op = build_sbp_1d(n, h, 4)
    d2 = build_d2_variable(op, np.ones(n)).matrix
    val = d2 @ op.x**2
    nb = len(BUILTIN_CLOSURES[4].block)
    np.testing.assert_allclose(val[2 * nb : -2 * nb], 2.0, atol=1e-12)


@pytest.mark.parametrize("order", ORDERS)
def test_d2_annihilates_linear_ramp(order):
    n = 33
    op = build_sbp_1d(n, 1.0 / (n - 1), order)
    d2 = build_d2_variable(op, np.ones(n)).matrix
    assert np.max(np.abs(d2 @ (3.0 * op.x - 1.0))) <= 1e-12


def test_variable_coefficient_d2_on_linear_function():
    # d/dx((x + 1) d/dx x) = 1
    n = 51
    op = build_sbp_1d(n, 1.0 / (n - 1), 2)
    d2 = build_d2_variable(op, op.x + 1.0).matrix
    np.testing.assert_allclose((d2 @ op.x)[1:-1], 1.0, atol=1e-12)


@pytest.mark.parametrize("order", ORDERS)
def test_constant_coefficient_scaling(order):
    op = build_sbp_1d(30, 0.2, order)
    base = build_d2_variable(op, np.ones(30)).matrix
    scaled = build_d2_variable(op, np.full(30, 7.5)).matrix
    assert abs(scaled - 7.5 * base).max() <= 1e-12 * abs(scaled).max()


def test_nonpositive_coefficient_rejected():
    op = build_sbp_1d(20, 0.1, 2)
    with pytest.raises(ValueError):
        build_d2_variable(op, np.linspace(-1, 1, 20))


def test_unsupported_order_and_small_grid():
    with pytest.raises(ValueError):
        build_sbp_1d(20, 0.1, 8)
    with pytest.raises(ValueError):
        build_sbp_1d(BUILTIN_CLOSURES[6].min_points - 1, 0.1, 6)
    with pytest.raises(ValueError):
        build_sbp_1d(20, 0.0, 2)


def green_residual_1d(op, mu, u, v):
    d2 = build_d2_variable(op, mu)
    hv = op.norm.weights
    lhs = np.dot(v * hv, d2.matrix @ u) - np.dot(d2.matrix @ v * hv, u)
    rhs = (v[-1] * (d2.flux_right @ u) - v[0] * (d2.flux_left @ u)) - (
        u[-1] * (d2.flux_right @ v) - u[0] * (d2.flux_left @ v)
    )
    scale = np.dot(np.abs(v) * hv, np.abs(d2.matrix) @ np.abs(u))
    return abs(lhs - rhs) / scale


@pytest.mark.parametrize("order", ORDERS)
@pytest.mark.parametrize("form", ["narrow", "wide"])
def test_green_identity_1d(order, form):
    if form == "narrow" and order != 2:
        pytest.skip("narrow form is second order only")
    rng = np.random.default_rng(order)
    n = 37
    op = build_sbp_1d(n, 0.3, order, form)
    for _ in range(20):
        mu = rng.uniform(0.5, 2.0, n)
        u, v = rng.standard_normal((2, n))
        assert green_residual_1d(op, mu, u, v) <= 1e-11


@pytest.mark.parametrize("order", ORDERS)
def test_remainder_symmetric_psd(order):
    rng = np.random.default_rng(10 + order)
    n = 31
    op = build_sbp_1d(n, 0.2, order)
    r = remainder(op, rng.uniform(0.5, 2.0, n)).toarray()
    scale = max(np.abs(r).max(), np.abs(d2_energy_matrix(op, np.ones(n)).toarray()).max())
    assert np.abs(r - r.T).max() <= 1e-12 * scale
    assert np.linalg.eigvalsh(0.5 * (r + r.T)).min() >= -1e-10 * scale


def test_narrow_remainder_is_nonzero():
    n = 21
    op = build_sbp_1d(n, 0.1, 2, "narrow")
    r = remainder(op, np.ones(n)).toarray()
    assert np.linalg.eigvalsh(r).max() > 0


def block_operators(order, kind):
    m = 3 * BUILTIN_CLOSURES[order].min_points + 1
    if kind == "planar":
        prof = planar_profile(m, -15.0, 15.0)
    else:
        prof = make_fractal_profile(m, -15.0, 15.0, 0.01, (8.0 * 30.0 / (m - 1), 30.0), seed=3)
    grid = build_grid(prof, 15.0, order=order)
    rng = np.random.default_rng(order)
    mu = rng.uniform(20.0, 40.0, grid.minus.x.shape)
    return [blk.operator(mu) for blk in grid.blocks]


@pytest.mark.parametrize("order", ORDERS)
@pytest.mark.parametrize("kind", ["planar", "fractal"])
def test_green_identity_2d(order, kind):
    rng = np.random.default_rng(100 + order)
    for op in block_operators(order, kind):
        lap = op.laplacian_matrix()
        for _ in range(20):
            u, v = rng.standard_normal((2, op.size))
            lhs = op.inner(v, lap @ u) - op.inner(lap @ v, u)
            rhs = sum(
                op.boundary_inner(name, v[e.nodes], e.traction(u)) - op.boundary_inner(name, u[e.nodes], e.traction(v))
                for name, e in op.edges.items()
            )
            scale = np.dot(np.abs(v) * op.h_phys, abs(lap) @ np.abs(u))
            assert abs(lhs - rhs) <= 1e-11 * scale


@pytest.mark.parametrize("order", ORDERS)
@pytest.mark.parametrize("kind", ["planar", "fractal"])
def test_energy_matrix_symmetric_psd_2d(order, kind):
    for op in block_operators(order, kind):
        e = op.energy.toarray()
        scale = np.abs(e).max()
        assert np.abs(e - e.T).max() <= 1e-12 * scale
        assert np.linalg.eigvalsh(0.5 * (e + e.T)).min() >= -1e-10 * scale


def test_coefficient_table_round_trip(tmp_path):
    c = BUILTIN_CLOSURES[4]
    lines = ["# order-4 closure", "operator order4", "order 4", "norm 17/48 59/48 43/48 49/48", "interior 2/3 -1/12"]
    for row in c.block:
        lines.append("row " + " ".join(repr(v) for v in row))
    lines.append("end")
    path = tmp_path / "ops.txt"
    path.write_text("\n".join(lines) + "\n")
    table = load_coefficient_table(path)
    op_file = build_sbp_1d(30, 0.1, 4, closure=table["order4"])
    op_builtin = build_sbp_1d(30, 0.1, 4)
    assert abs(op_file.d1 - op_builtin.d1).max() == 0.0
    assert sp.issparse(op_file.d1)
