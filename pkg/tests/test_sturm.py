import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stratwave.errors import AboveContinuumError, DiscretizationError, InputError
from stratwave.profiles import (make_constant_profile, make_sampled_profile, make_smooth_profile,
                                make_step_profile)
from stratwave.sturm import (DIRICHLET, EXACT_DECAY, MIDPOINT, Discretization, assemble_operator,
                             count_below, eigen_residual, partner_points, solve_modes,
                             step_oracle, sturm_count)

from frozen import STEP_EIGENVALUES

STEP = make_step_profile(1, 4, 1)
FINE = Discretization(-8.0, 4096)


def test_discretization_invariants():
    d = Discretization(-8.0, 4095)
    assert d.spacing == pytest.approx(8.0 / 4096)
    for bad in (dict(n_points=8), dict(z_min=0.0), dict(continuum_guard=1.5),
                dict(bottom_bc="neumann")):
        with pytest.raises(DiscretizationError):
            Discretization(**{"z_min": -8.0, "n_points": 100, **bad})
    with pytest.raises(DiscretizationError):
        assemble_operator(STEP, 1.0, Discretization(-0.5, 100))


@pytest.mark.parametrize("rule", ["cell-average", MIDPOINT])
def test_constant_coefficient_stencil(rule):
    c, xi = 2.5, 3.0
    p = make_constant_profile(c, cutoff_depth=-1.0)
    d = Discretization(-4.0, 63, bottom_bc=DIRICHLET, coefficients=rule)
    s = assemble_operator(p, xi, d)
    h = d.spacing
    np.testing.assert_allclose(s.diagonal, 2 * c / h**2 + c * xi**2, rtol=1e-13)
    np.testing.assert_allclose(s.offdiagonal, -c / h**2, rtol=1e-13)


def test_midpoint_rule_samples_layer_side():
    # h = 0.15: the cell (-1.05, -0.9) straddles the jump, its midpoint -0.975 is in the layer
    d = Discretization(-3.0, 19, bottom_bc=DIRICHLET, coefficients=MIDPOINT)
    s = assemble_operator(STEP, 1.0, d)
    mids = np.concatenate([s.z - 0.075, [s.z[-1] + 0.075]])
    k = int(np.argmin(np.abs(mids + 0.975)))
    assert mids[k] == pytest.approx(-0.975) and s.flux[k] == 1.0
    np.testing.assert_array_equal(s.flux, np.where(mids > -1, 1.0, 4.0))


def test_operator_symmetric():
    for bc in (DIRICHLET, EXACT_DECAY):
        s = assemble_operator(STEP, 5.0, Discretization(-8.0, 200, bottom_bc=bc))
        dense = s.dense()
        np.testing.assert_array_equal(dense, dense.T)


def test_count_below_examples():
    assert count_below(STEP, 5.0, 4 * (1 - 1e-9), FINE) == 3
    assert count_below(STEP, 5.0, 1.0, FINE) == 0
    assert count_below(STEP, 5.0, 0.5, FINE) == 0
    const = make_constant_profile(2.0)
    assert count_below(const, 5.0, 1.999, Discretization(-8.0, 512)) == 0
    with pytest.raises(AboveContinuumError):
        count_below(STEP, 5.0, 4.0, FINE)


def test_sturm_count_matches_dense_eigenvalues():
    rng = np.random.default_rng(7)
    d = rng.normal(size=40) + 3
    e = rng.normal(size=39)
    w = np.linalg.eigvalsh(np.diag(d) + np.diag(e, 1) + np.diag(e, -1))
    shifts = np.linspace(w.min() - 1, w.max() + 1, 57)
    np.testing.assert_array_equal(sturm_count(d, e, shifts), (w[None, :] <= shifts[:, None]).sum(1))


def test_step_oracle_examples():
    roots = step_oracle(1, 4, 1, 5)
    assert len(roots) == 3
    assert roots[0] == pytest.approx(33.77, abs=5e-3)
    assert math.sqrt(roots[0] - 25) == pytest.approx(2.9617, abs=1e-4)
    assert roots[-1] < 100
    assert step_oracle(1, 4, 1, 1e-3) == []
    for xi in (0.5, 3.0, 17.0):
        assert all(xi**2 < lam < 4 * xi**2 for lam in step_oracle(1, 4, 1, xi))


def test_step_oracle_matches_frozen_values():
    for xi, expected in STEP_EIGENVALUES.items():
        np.testing.assert_allclose(step_oracle(1, 4, 1, xi), expected, rtol=1e-12)


@pytest.mark.parametrize("xi", [2.0, 5.0, 10.0, 20.0])
def test_solve_modes_matches_oracle(xi):
    modes = solve_modes(STEP, xi, FINE)
    expected = STEP_EIGENVALUES[xi]
    assert len(modes) == len(expected)
    np.testing.assert_allclose([m.lam for m in modes], expected, rtol=1e-6)


def test_solve_modes_small_xi_bracket():
    modes = solve_modes(STEP, 0.1, Discretization(-200.0, 20000))
    assert len(modes) <= 1
    assert all(0.01 < m.lam < 0.04 for m in modes)


def test_mode_invariants():
    xi = 10.0
    modes = solve_modes(STEP, xi, FINE)
    lams = np.array([m.lam for m in modes])
    assert np.all(np.diff(lams) > 1e-9 * xi**2)
    assert np.all((lams > xi**2) & (lams < 4 * xi**2))
    for m in modes:
        assert abs(m.norm_squared() - 1) < 1e-12
        assert m.decay_rate == pytest.approx(math.sqrt(xi**2 - m.lam / 4))
        assert eigen_residual(STEP, xi, m, FINE) <= 1e-10 * assemble_operator(STEP, xi, FINE).norm()


def test_tail_decay():
    xi = 5.0
    d = Discretization(-8.0, 4096, bottom_bc=DIRICHLET)
    for m in solve_modes(STEP, xi, d):
        z, phi = m.z, np.abs(m.eigenfunction)
        k0 = np.searchsorted(z, -1.0)
        tail = z <= z[k0]
        bound = phi[k0] * np.exp(m.decay_rate * (z[tail] - z[k0])) * (1 + 1e-3)
        assert np.all(phi[tail] <= bound + 1e-12 * phi.max())


def test_dirichlet_agrees_with_exact_decay():
    xi = 5.0
    a = [m.lam for m in solve_modes(STEP, xi, Discretization(-40.0, 20000, bottom_bc=DIRICHLET))]
    b = [m.lam for m in solve_modes(STEP, xi, FINE)]
    np.testing.assert_allclose(a, b, rtol=1e-7)


def test_second_order_convergence_without_extrapolation():
    xi = 5.0
    exact = np.array(STEP_EIGENVALUES[xi])
    errors = []
    for n in (1023, 2047, 4095):
        modes = solve_modes(STEP, xi, Discretization(-8.0, n, extrapolate=False))
        errors.append(np.abs(np.array([m.lam for m in modes]) - exact))
    ratios = np.array(errors[:-1]) / np.array(errors[1:])
    assert np.all(np.abs(ratios - 4) < 0.5)


def test_partner_grid_keeps_jump_offset():
    p = make_step_profile(1, 4, 0.7)
    n = 1000
    m = partner_points(p, -8.0, n)
    off = lambda k: ((-0.7 + 8.0) / (8.0 / (k + 1))) % 1.0
    assert abs(m - (2 * n + 1)) <= 24
    assert abs(off(m) - off(n)) < abs(off(2 * n + 1) - off(n)) + 1e-12


def test_smooth_profile_modes_bracketed():
    p = make_smooth_profile(4, 1, 0.5)
    xi = 8.0
    modes = solve_modes(p, xi, Discretization.auto(p, xi))
    assert modes
    assert all(p.infimum * xi**2 < m.lam < p.tail_value * xi**2 for m in modes)


def test_semiclassical_deepening():
    xis = [4.0, 8.0, 16.0, 32.0]
    first = [solve_modes(STEP, xi, Discretization.auto(STEP, xi))[0].lam / xi**2 for xi in xis]
    assert np.all(np.diff(first) < 0)
    assert first[-1] > 1.0


def test_invalid_xi():
    with pytest.raises(InputError):
        solve_modes(STEP, 0.0, FINE)


@settings(max_examples=25, deadline=None)
@given(E=st.floats(1.0, 3.999), xi=st.floats(0.5, 12.0))
def test_count_consistent_with_solve(E, xi):
    d = Discretization(-8.0, 1024)
    modes = solve_modes(STEP, xi, d)
    count = count_below(STEP, xi, E, d)
    grid = [m.grid_lam for m in solve_modes(STEP, xi, Discretization(-8.0, 1024, extrapolate=False))]
    assert count == sum(lam <= E * xi**2 for lam in grid)
    assert abs(count - sum(m.lam <= E * xi**2 for m in modes)) <= 1


@settings(max_examples=25, deadline=None)
@given(E=st.lists(st.floats(0.5, 3.999), min_size=2, max_size=8), xi=st.floats(0.5, 15.0))
def test_count_monotone_in_E(E, xi):
    E = np.sort(np.array(E))
    counts = count_below(STEP, xi, E, Discretization(-8.0, 512))
    assert np.all(np.diff(counts) >= 0)


@settings(max_examples=20, deadline=None)
@given(n=st.lists(st.floats(0.5, 4.0), min_size=3, max_size=6), xi=st.floats(1.0, 8.0))
def test_bracket_on_random_sampled_profiles(n, xi):
    values = np.array([5.0] + n + [n[-1]])
    z = np.linspace(-len(values) + 1, 0, len(values)) * 0.4
    p = make_sampled_profile(z, values)
    for m in solve_modes(p, xi, Discretization.auto(p, xi)):
        assert p.infimum * xi**2 < m.lam < p.tail_value * xi**2
