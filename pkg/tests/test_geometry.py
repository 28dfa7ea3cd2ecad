import numpy as np
import pytest

from dcrupture.geometry import (
    FaultProfile,
    build_grid,
    default_n_across,
    fault_arclength,
    fault_normal_shear_projection,
    make_fractal_profile,
    planar_profile,
)

L = 30.0


def fractal(m=1001, ratio=0.01, band=(1.0, 30.0), seed=1):
    return make_fractal_profile(m, -15.0, 15.0, ratio, band, seed)


def test_zero_amplitude_is_planar():
    prof = fractal(ratio=0.0)
    np.testing.assert_array_equal(prof.y, 0.0)
    np.testing.assert_array_equal(prof.normal_minus, np.tile([0.0, 1.0], (prof.m, 1)))


def test_same_seed_is_bitwise_identical():
    a, b = fractal(seed=7), fractal(seed=7)
    assert a.y.tobytes() == b.y.tobytes()
    assert a.slope.tobytes() == b.slope.tobytes()
    assert not np.array_equal(a.y, fractal(seed=8).y)


def test_unit_normals():
    prof = fractal()
    assert np.max(np.abs(np.linalg.norm(prof.normal_minus, axis=1) - 1.0)) <= 1e-12


def periodogram(prof):
    # one period without the repeated end point
    y = prof.y[:-1]
    spec = np.abs(np.fft.rfft(y)) ** 2
    return np.arange(len(spec)), spec


def test_power_spectrum_is_self_similar_in_band():
    prof = fractal()
    k, power = periodogram(prof)
    band = (k >= 1) & (k <= 30)
    slope = np.polyfit(np.log(k[band]), np.log(power[band]), 1)[0]
    assert abs(slope + 3.0) <= 0.3


def test_power_outside_band_is_negligible():
    prof = fractal(band=(2.0, 10.0))
    k, power = periodogram(prof)
    inside = (k >= 3) & (k <= 15)
    assert power[~inside].sum() <= 1e-10 * power.sum()


def test_rms_height_matches_amplitude_ratio():
    prof = fractal(ratio=0.01)
    rms = np.sqrt(np.mean(prof.y[:-1] ** 2))
    assert abs(rms - 0.01 * L) <= 0.2 * 0.01 * L


def test_unresolvable_band_rejected():
    with pytest.raises(ValueError):
        make_fractal_profile(101, -15.0, 15.0, 0.01, (1.0, 30.0), 1)
    with pytest.raises(ValueError):
        make_fractal_profile(101, -15.0, 15.0, -0.1, (3.0, 30.0), 1)


def test_slope_consistent_with_profile():
    prof = fractal(m=2001)
    fd = np.gradient(prof.y, prof.x, edge_order=2)
    assert np.max(np.abs(fd - prof.slope)) <= 1e-3 * np.max(np.abs(prof.slope))


def test_planar_grid_is_uniform_cartesian():
    grid = build_grid(planar_profile(101, -15.0, 15.0), 15.0)
    assert grid.n == default_n_across(101, -15.0, 15.0, 15.0)
    dx = np.diff(grid.minus.x[:, 0])
    dy = np.diff(grid.minus.y[0, :])
    np.testing.assert_allclose(dx, 0.3, rtol=1e-12)
    assert abs(dy[0] - dx[0]) <= 0.1 * dx[0]
    for blk in grid.blocks:
        np.testing.assert_allclose(blk.jacobian, 1.0, atol=1e-12)
        c11, c12, c22 = blk.metric_coefficients()
        np.testing.assert_allclose(c11, 1.0, atol=1e-12)
        np.testing.assert_allclose(c22, 1.0, atol=1e-12)
        np.testing.assert_allclose(c12, 0.0, atol=1e-12)


def test_cartesian_flag_gives_exact_identity():
    grid = build_grid(planar_profile(31, -15.0, 15.0), 15.0, cartesian=True)
    for blk in grid.blocks:
        c11, c12, c22 = blk.metric_coefficients()
        assert np.all(c11 == 1.0) and np.all(c12 == 0.0) and np.all(c22 == 1.0)
    with pytest.raises(ValueError):
        build_grid(fractal(m=251), 15.0, cartesian=True)


def test_fractal_grid_has_positive_jacobian_and_shared_fault_nodes():
    prof = fractal(m=251)
    grid = build_grid(prof, 15.0)
    for blk in grid.blocks:
        assert np.min(blk.jacobian) > 0
    np.testing.assert_array_equal(grid.minus.x[:, -1], grid.plus.x[:, 0])
    np.testing.assert_array_equal(grid.minus.y[:, -1], grid.plus.y[:, 0])
    np.testing.assert_array_equal(grid.minus.y[:, -1], prof.y)


def test_fault_leaving_domain_rejected():
    prof = fractal(m=251, ratio=0.6)
    with pytest.raises(ValueError):
        build_grid(prof, 15.0)


def test_linear_functions_are_free_stream_preserved():
    prof = fractal(m=251)
    grid = build_grid(prof, 15.0, order=4)
    for blk in grid.blocks:
        op = blk.operator(1.0)
        lap = op.laplacian_matrix()
        for u in (blk.x.ravel(), blk.y.ravel(), (2.0 * blk.x - 3.0 * blk.y).ravel()):
            val = (lap @ u).reshape(blk.x.shape)
            assert np.max(np.abs(val[6:-6, 6:-6])) <= 1e-10


def test_shear_projection():
    planar = planar_profile(11, -15.0, 15.0)
    np.testing.assert_array_equal(fault_normal_shear_projection(planar, 72.0), 72.0)
    np.testing.assert_array_equal(fault_normal_shear_projection(planar, 0.0), 0.0)
    sloped = FaultProfile(np.linspace(0, 1, 5), np.linspace(0, 1, 5), np.ones(5))
    np.testing.assert_allclose(fault_normal_shear_projection(sloped, 72.0), 72.0 / np.sqrt(2.0), rtol=1e-15)


def test_arclength():
    planar = planar_profile(11, -15.0, 15.0)
    np.testing.assert_allclose(fault_arclength(planar), np.linspace(0, L, 11), rtol=0, atol=1e-14)
    rough = fractal(m=251)
    s = fault_arclength(rough)
    assert s[0] == 0.0 and np.all(np.diff(s) > 0)
    assert s[-1] > L
    # direct polyline length of a much finer sampling
    fine = fractal(m=20001)
    poly = np.sum(np.hypot(np.diff(fine.x), np.diff(fine.y)))
    assert abs(s[-1] - poly) <= 1e-6 * poly
