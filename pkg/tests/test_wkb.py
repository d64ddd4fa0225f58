import math

import numpy as np
import pytest

from stratwave.errors import DiscretizationError, InputError
from stratwave.profiles import (ASSUMPTION_A, ASSUMPTION_B, LateralMedium, make_constant_profile,
                                make_step_profile)
from stratwave.sturm import DIRICHLET, Discretization, eigen_residual, solve_modes
from stratwave.wkb import (PlaneGrid, apply_H_2d, column_coefficients, expansion_columns,
                           first_order_terms, plateau_window, residual_decay, taylor_layers)

STEP = make_step_profile(1, 4, 1)
XI = 2.0
MODULATED = LateralMedium.modulated(STEP, 0.1, 1.0)
UNIFORM_B = LateralMedium.uniform(STEP)
UNIFORM_A = LateralMedium.uniform(STEP, ASSUMPTION_A, (1.0,))


def test_taylor_layers():
    z = np.array([-0.5, -2.0])
    layers = taylor_layers(UNIFORM_A, 0.0, 2, z)
    np.testing.assert_array_equal(layers[0], [1.0, 4.0])
    np.testing.assert_array_equal(layers[1], [1.0, 4.0])
    np.testing.assert_array_equal(layers[2], 0.0)
    assert len(taylor_layers(UNIFORM_B, 0.0, 0, z)) == 1
    with pytest.raises(InputError):
        taylor_layers(UNIFORM_B, 0.0, 1, z)
    with pytest.raises(InputError):
        taylor_layers(UNIFORM_A, 0.0, -1, z)


def test_plane_grid():
    grid = PlaneGrid.for_medium(MODULATED, XI, n_x=32)
    assert grid.n_points == grid.Z.size == -round(grid.z_min / grid.depth_step) - 1
    assert grid.dx == pytest.approx(2 * math.pi / 32)
    assert grid.Z_flux.size == grid.n_points + 1
    with pytest.raises(InputError):
        PlaneGrid(4, -4.0)
    with pytest.raises(DiscretizationError):
        PlaneGrid(16, -4.01)
    with pytest.raises(DiscretizationError):
        PlaneGrid(16, -0.5).check(MODULATED)


def test_apply_H_on_constant_medium_plane_wave():
    medium = LateralMedium.uniform(make_constant_profile(2.0, cutoff_depth=-1.0))
    grid = PlaneGrid(16, -4.0)
    h = grid.depth_step
    k = 3 * math.pi / 4.0
    field = np.tile(np.sin(k * -grid.Z), (grid.n_x, 1))
    out = apply_H_2d(medium, 0.1, field, grid, xi=1.5)
    # discrete symbol of the depth stencil plus xi^2, times N
    symbol = 2.0 * (4 * np.sin(k * h / 2) ** 2 / h**2 + 1.5**2)
    np.testing.assert_allclose(out, symbol * field, atol=1e-10 * symbol)
    np.testing.assert_array_equal(apply_H_2d(medium, 0.1, np.zeros_like(field), grid, 1.5), 0.0)


def test_apply_H_is_hermitian():
    grid = PlaneGrid.for_medium(MODULATED, XI, n_x=16)
    coeffs = column_coefficients(MODULATED, grid)
    rng = np.random.default_rng(0)
    shape = (grid.n_x, grid.n_points)
    u = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    v = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    Hu = apply_H_2d(MODULATED, 0.05, u, grid, XI, coeffs)
    Hv = apply_H_2d(MODULATED, 0.05, v, grid, XI, coeffs)
    lhs, rhs = np.vdot(v, Hu), np.vdot(Hv, u)
    assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


def test_apply_H_shape_check():
    grid = PlaneGrid.for_medium(MODULATED, XI, n_x=16)
    with pytest.raises(InputError):
        apply_H_2d(MODULATED, 0.1, np.zeros((3, 3)), grid, XI)
    with pytest.raises(InputError):
        apply_H_2d(MODULATED, 0.0, np.zeros((grid.n_x, grid.n_points)), grid, XI)


def test_corrector_orthogonal_to_leading_mode():
    grid = PlaneGrid.for_medium(MODULATED, XI, n_x=32)
    cols, _ = expansion_columns(MODULATED, grid, XI)
    h = grid.depth_step
    overlap = h * np.einsum("jn,jn->j", cols.phi0, cols.phi1)
    assert np.max(np.abs(overlap)) <= 1e-10
    # lateral drift only: a1 is purely imaginary and odd about the modulation peak
    assert np.max(np.abs(cols.a1.real)) <= 1e-10 * np.max(np.abs(cols.a1))


def test_first_order_terms_at_single_column():
    grid = PlaneGrid.for_medium(MODULATED, XI, n_x=32)
    disc = grid.discretization()
    mode_x = solve_modes(MODULATED.profile_at(0.0), XI, disc)[0]
    exp = first_order_terms(MODULATED, 0.0, XI, mode_x, disc, dx=grid.dx)
    cols, _ = expansion_columns(MODULATED, grid, XI)
    assert abs(exp.orthogonality(grid.depth_step)) <= 1e-10
    assert exp.a1 == pytest.approx(cols.a1[0], rel=1e-8)
    # sin(0) = 0: the column at x = 0 is the unmodulated step
    assert mode_x.lam == solve_modes(STEP, XI, disc)[0].lam
    with pytest.raises(InputError):
        first_order_terms(MODULATED, 0.0, XI, mode_x, Discretization(-8.0, 100))


def test_uniform_medium_has_no_correction():
    grid = PlaneGrid.for_medium(UNIFORM_B, XI, n_x=16)
    cols, _ = expansion_columns(UNIFORM_B, grid, XI)
    assert np.max(np.abs(cols.a1)) <= 1e-12
    assert np.max(np.abs(cols.phi1)) <= 1e-10


def test_depth_layer_correction_is_real():
    grid = PlaneGrid.for_medium(UNIFORM_A, XI, n_x=16)
    cols, _ = expansion_columns(UNIFORM_A, grid, XI)
    assert np.max(np.abs(cols.a1.imag)) <= 1e-12
    # N grows with depth factor 1 + z and z < 0 lowers the eigenvalue
    assert np.all(cols.a1.real < 0)


def test_residual_slopes_on_modulated_medium():
    grid = PlaneGrid.for_medium(MODULATED, XI, n_x=64)
    report = residual_decay(MODULATED, 0.0, XI, grid=grid)
    assert report.slope0 >= 0.8 and report.slope1 >= 1.8
    assert all(r1 < r0 for r0, r1 in zip(report.residual0, report.residual1))
    assert report.flags == []
    assert set(report.to_dict()) == {"epsilons", "residual0", "residual1", "slope0", "slope1",
                                     "flags"}


def test_residual_slopes_on_shape_varying_medium():
    medium = LateralMedium(lambda x: make_step_profile(1, 4, 1 + 0.2 * math.sin(x)),
                           ASSUMPTION_B, ())
    report = residual_decay(medium, 0.0, XI, grid=PlaneGrid.for_medium(medium, XI, n_x=64))
    assert report.slope0 >= 0.8 and report.slope1 >= 1.8


def test_residual_slopes_with_depth_layer():
    report = residual_decay(UNIFORM_A, 0.0, XI, grid=PlaneGrid.for_medium(UNIFORM_A, XI, n_x=16))
    assert report.slope0 >= 0.8 and report.slope1 >= 1.8


def test_windowed_residual():
    grid = PlaneGrid.for_medium(MODULATED, XI, n_x=64)
    report = residual_decay(MODULATED, 0.0, XI, grid=grid, window=True)
    assert report.slope0 >= 0.8 and report.slope1 >= 1.8
    w = plateau_window(grid.x, 0.0, grid.period)
    assert w[0] == 1.0 and w[grid.n_x // 2] == 0.0
    assert np.all((w >= 0) & (w <= 1))


def test_uniform_medium_matches_column_residual():
    grid = PlaneGrid.for_medium(UNIFORM_B, XI, n_x=32)
    report = residual_decay(UNIFORM_B, 0.0, XI, grid=grid)
    disc = grid.discretization()
    one_d = eigen_residual(STEP, XI, solve_modes(STEP, XI, disc)[0], disc)
    assert max(report.residual1) <= 10 * max(one_d, np.finfo(float).eps)
    assert report.slope0 is None and any("not applicable" in f for f in report.flags)


def test_residual_input_checks():
    grid = PlaneGrid.for_medium(MODULATED, XI, n_x=16)
    with pytest.raises(InputError):
        residual_decay(MODULATED, 0.0, XI, epsilons=(0.1, 0.05), grid=grid)
    with pytest.raises(InputError):
        residual_decay(MODULATED, 0.0, XI, epsilons=(0.1, 0.05, -0.01), grid=grid)
    with pytest.raises(InputError):
        residual_decay(MODULATED, 0.0, XI, grid=grid, branch=5)


def test_dirichlet_grid_matches_sturm_columns():
    grid = PlaneGrid.for_medium(UNIFORM_B, XI, n_x=16)
    disc = grid.discretization()
    assert disc.bottom_bc == DIRICHLET and not disc.extrapolate
    cols, _ = expansion_columns(UNIFORM_B, grid, XI)
    assert cols.a0[0] == solve_modes(STEP, XI, disc)[0].lam
