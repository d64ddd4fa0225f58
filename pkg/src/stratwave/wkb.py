"""First-order surface-wave ansatz and its residual under the 2D operator.

The field ``psi = exp(i xi x / eps) * W(x, z / eps)`` is represented by its
envelope ``W`` on a plane grid in the stretched depth ``Z = z / eps``; the
carrier is applied analytically.  In these coordinates

    e^{-i k x} (-eps^2 div(n grad)) e^{i k x} W
        = -d_Z(n d_Z W) + xi^2 n W - i eps xi (d_x(n W) + n d_x W) - eps^2 d_x(n d_x W)

with ``k = xi / eps``, so one grid serves every ``eps`` and a depth
resolution of ``h_Z`` equals ``eps * h_Z`` in physical depth.  Each x column
of the zeroth-order part is exactly the transverse operator of
:mod:`stratwave.sturm`.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import bmat, csc_matrix, diags
from scipy.sparse.linalg import splu

from .dispersion import worker_count
from .errors import ConvergenceError, DiscretizationError, InputError
from .profiles import ASSUMPTION_B
from .sturm import DIRICHLET, Discretization, _coefficients, _grid, solve_modes

DEPTH_STEP = 1.0 / 16.0


def taylor_layers(medium, x, l_max, z):
    """Layers ``N_l(x, Z)`` of ``N(x, z, Z) = sum_l N_l(x, Z) z^l`` sampled at ``z``."""
    if l_max < 0:
        raise InputError("l_max must be non-negative", field="l_max")
    if l_max >= 1 and medium.regularity == ASSUMPTION_B:
        raise InputError("assumption-B media have no layers beyond N_0", field="l_max")
    n0 = medium.profile_at(x).evaluate(np.asarray(z, dtype=float))
    coeffs = list(medium.depth_coefficients)
    layers = [n0]
    for l in range(1, l_max + 1):
        c = coeffs[l - 1] if l <= len(coeffs) else 0.0
        layers.append(c * n0)
    return layers


# -- grid and operator ------------------------------------------------------------------

@dataclass(frozen=True)
class PlaneGrid:
    """Periodic uniform x grid times the Dirichlet stretched-depth grid."""

    n_x: int
    z_min: float
    period: float = 2.0 * math.pi
    depth_step: float = DEPTH_STEP

    def __post_init__(self):
        if self.n_x < 8:
            raise InputError("need at least 8 lateral points", field="n_x")
        n = self.n_points
        if abs((n + 1) * self.depth_step + self.z_min) > 1e-9 * self.depth_step:
            raise DiscretizationError("z_min must be a multiple of the depth step", field="z_min")

    @classmethod
    def for_medium(cls, medium, xi, n_x=128, period=2.0 * math.pi, depth_step=DEPTH_STEP):
        """Depth extent from the Dirichlet margin rule of the widest column profile."""
        xs = np.arange(n_x) * period / n_x
        deepest = 0.0
        for x in xs[:: max(1, n_x // 16)]:
            d = Discretization.auto(medium.profile_at(x), xi, bottom_bc=DIRICHLET)
            deepest = min(deepest, d.z_min)
        steps = int(math.ceil(-deepest / depth_step))
        return cls(n_x, -steps * depth_step, period, depth_step)

    @property
    def n_points(self):
        return int(round(-self.z_min / self.depth_step)) - 1

    @property
    def x(self):
        return np.arange(self.n_x) * (self.period / self.n_x)

    @property
    def dx(self):
        return self.period / self.n_x

    @property
    def Z(self):
        return _grid(self.z_min, self.n_points, DIRICHLET)[0]

    @property
    def Z_flux(self):
        """Depth of each flux coefficient: the midpoints below every node and
        the one above the last node."""
        Z = self.Z
        return np.concatenate([Z - 0.5 * self.depth_step, [Z[-1] + 0.5 * self.depth_step]])

    def discretization(self):
        return Discretization(self.z_min, self.n_points, bottom_bc=DIRICHLET, extrapolate=False)

    def check(self, medium):
        for x in self.x[:: max(1, self.n_x // 16)]:
            profile = medium.profile_at(x)
            if self.z_min >= profile.cutoff_depth:
                raise DiscretizationError("plane grid does not reach below the layer", field="z_min")
            if -profile.cutoff_depth / self.depth_step < 8:
                raise DiscretizationError("fewer than 8 depth points across the layer",
                                          field="depth_step")


@dataclass
class ColumnCoefficients:
    flux: np.ndarray       # (n_x, n + 1)
    reaction: np.ndarray   # (n_x, n)


def column_coefficients(medium, grid):
    grid.check(medium)
    Z, h = grid.Z, grid.depth_step
    flux, reaction = [], []
    for x in grid.x:
        f, r = _coefficients(medium.profile_at(x), Z, h, grid.z_min, "cell-average")
        flux.append(f)
        reaction.append(r)
    return ColumnCoefficients(np.array(flux), np.array(reaction))


def _depth_scaled(coeffs, medium, grid, epsilon):
    if not medium.depth_coefficients:
        return coeffs.flux, coeffs.reaction
    return (coeffs.flux * medium.depth_factor(epsilon * grid.Z_flux)[None, :],
            coeffs.reaction * medium.depth_factor(epsilon * grid.Z)[None, :])


def _depth_stiffness(flux, field, h):
    """``-d_Z(F d_Z W)`` with Dirichlet rows at both ends, column by column."""
    out = (flux[:, :-1] + flux[:, 1:]) * field
    out[:, :-1] -= flux[:, 1:-1] * field[:, 1:]
    out[:, 1:] -= flux[:, 1:-1] * field[:, :-1]
    return out / (h * h)


def _dx_central(a, dx):
    return (np.roll(a, -1, axis=0) - np.roll(a, 1, axis=0)) / (2.0 * dx)


def _lateral_first(reaction, field, xi, dx):
    """``-i xi (d_x(R W) + R d_x W)``; Hermitian on the periodic grid."""
    return -1j * xi * (_dx_central(reaction * field, dx) + reaction * _dx_central(field, dx))


def _lateral_second(reaction, field, dx):
    """``-d_x(R d_x W)`` in flux form with R averaged to the x midpoints."""
    r_mid = 0.5 * (reaction + np.roll(reaction, -1, axis=0))
    flux = r_mid * (np.roll(field, -1, axis=0) - field) / dx
    return -(flux - np.roll(flux, 1, axis=0)) / dx


def apply_H_2d(medium, epsilon, field, grid, xi=0.0, coefficients=None):
    """Apply the carrier-conjugated ``-eps^2 div(n grad)`` to an envelope.

    ``field`` has shape ``(n_x, n_points)`` and stands for
    ``exp(i xi x / eps) * field``; with ``xi = 0`` it is the plain field.
    """
    if not epsilon > 0:
        raise InputError("epsilon must be positive", field="epsilon")
    field = np.asarray(field)
    if field.shape != (grid.n_x, grid.n_points):
        raise InputError(f"field shape {field.shape} does not match the grid "
                         f"{(grid.n_x, grid.n_points)}", field="field")
    coeffs = coefficients or column_coefficients(medium, grid)
    flux, reaction = _depth_scaled(coeffs, medium, grid, epsilon)
    out = _depth_stiffness(flux, field, grid.depth_step) + xi * xi * reaction * field
    if xi != 0:
        out = out + epsilon * _lateral_first(reaction, field, xi, grid.dx)
    out = out + epsilon**2 * _lateral_second(reaction, field, grid.dx)
    return out


# -- expansion -----------------------------------------------------------------------

@dataclass
class ModeExpansion:
    phi0: np.ndarray
    a0: float
    a1: complex
    phi1: np.ndarray
    xi: float
    x0: float
    z: np.ndarray = field(default=None)
    branch_index: int = 1

    def orthogonality(self, h):
        return complex(h * np.dot(self.phi0, self.phi1))


@dataclass
class _Columns:
    phi0: np.ndarray    # (n_x, n) real, unit norm per column
    a0: np.ndarray      # (n_x,)
    phi1: np.ndarray    # (n_x, n) complex
    a1: np.ndarray      # (n_x,) complex


def _column_mode(profile, xi, disc, branch, reference=None):
    modes = solve_modes(profile, xi, disc)
    if len(modes) < branch:
        raise InputError(f"branch {branch} does not exist at xi={xi}", field="branch")
    mode = modes[branch - 1]
    lam = mode.lam
    for other in modes[max(0, branch - 2):branch + 1]:
        if other is not mode and abs(other.lam - lam) <= 1e-6 * lam:
            raise ConvergenceError(f"mode {branch} is nearly degenerate at xi={xi}")
    phi = mode.eigenfunction.copy()
    if reference is not None and np.dot(phi, reference) < 0:
        phi = -phi
    return lam, phi


def _first_order_source(flux1, reaction0, reaction1, phi0_cols, xi, dx, h, j):
    """``H_1 phi_0`` at column ``j``: depth layer plus the lateral drift term."""
    n_x = phi0_cols.shape[0]
    jp, jm = (j + 1) % n_x, (j - 1) % n_x
    phi = phi0_cols[j]
    src = _depth_stiffness(flux1[None, :], phi[None, :], h)[0] + xi * xi * reaction1 * phi
    d_rphi = (reaction0[jp] * phi0_cols[jp] - reaction0[jm] * phi0_cols[jm]) / (2 * dx)
    d_phi = (phi0_cols[jp] - phi0_cols[jm]) / (2 * dx)
    return src - 1j * xi * (d_rphi + reaction0[j] * d_phi)


def _bordered_solve(flux0, reaction0, xi, h, lam, phi0, rhs):
    n = phi0.size
    diag = (flux0[:-1] + flux0[1:]) / (h * h) + xi * xi * reaction0 - lam
    off = -flux0[1:-1] / (h * h)
    block = diags([off, diag, off], [-1, 0, 1], format="csc")
    border = csc_matrix(phi0.reshape(-1, 1))
    system = bmat([[block, border], [border.T, None]], format="csc")
    try:
        lu = splu(system.astype(complex))
    except RuntimeError as exc:
        raise ConvergenceError("bordered corrector system is singular") from exc
    sol = lu.solve(np.concatenate([rhs, [0.0]]).astype(complex))
    if not np.all(np.isfinite(sol)):
        raise ConvergenceError("bordered corrector system is singular")
    return sol[:n]


def _corrector(flux0, reaction0, xi, h, lam, phi0, source):
    # a1 makes the right-hand side orthogonal to phi0 (unit norm)
    a1 = complex(h * np.dot(phi0, source))
    rhs = a1 * phi0 - source
    phi1 = _bordered_solve(flux0, reaction0, xi, h, lam, phi0, rhs)
    phi1 = phi1 - h * np.dot(phi0, phi1) * phi0
    return a1, phi1


def _first_layer(medium, grid, flux0, reaction0):
    """Order-eps part of ``N(x, eps Z, Z)``: ``c_1 Z N_0``."""
    c1 = medium.depth_coefficients[0] if medium.depth_coefficients else 0.0
    return c1 * grid.Z_flux * flux0, c1 * grid.Z * reaction0


def expansion_columns(medium, grid, xi, branch=1, workers=None):
    """Zeroth- and first-order terms on every x column of the plane grid."""
    disc = grid.discretization()
    coeffs = column_coefficients(medium, grid)
    xs = grid.x

    def solve(x):
        return _column_mode(medium.profile_at(x), xi, disc, branch)

    if worker_count(workers) > 1:
        with ThreadPoolExecutor(max_workers=worker_count(workers)) as pool:
            raw = list(pool.map(solve, xs))
    else:
        raw = [solve(x) for x in xs]
    a0 = np.array([r[0] for r in raw])
    phi0 = np.array([r[1] for r in raw])
    # gauge: align neighbouring columns by overlap
    for j in range(1, grid.n_x):
        if np.dot(phi0[j], phi0[j - 1]) < 0:
            phi0[j] = -phi0[j]
    if np.dot(phi0[0], phi0[-1]) < 0:
        raise ConvergenceError("eigenfunction sign cannot be aligned around the period")

    h = grid.depth_step
    phi1 = np.empty(phi0.shape, dtype=complex)
    a1 = np.empty(grid.n_x, dtype=complex)
    for j in range(grid.n_x):
        f1, r1 = _first_layer(medium, grid, coeffs.flux[j], coeffs.reaction[j])
        source = _first_order_source(f1, coeffs.reaction, r1, phi0, xi, grid.dx, h, j)
        a1[j], phi1[j] = _corrector(coeffs.flux[j], coeffs.reaction[j], xi, h, a0[j],
                                    phi0[j], source)
    return _Columns(phi0, a0, phi1, a1), coeffs


def first_order_terms(medium, x, xi, mode, disc, dx=2.0 * math.pi / 128):
    """Corrector pair ``(a1, phi1)`` for ``mode`` at horizontal position ``x``.

    Neighbouring columns ``x +- dx`` are re-solved for the lateral central
    differences; their eigenfunctions are sign-aligned to ``mode``.
    """
    if disc.bottom_bc != DIRICHLET or disc.extrapolate:
        raise InputError("the corrector needs a Dirichlet, non-extrapolated discretization",
                         field="disc")
    h = disc.spacing
    branch = mode.branch_index
    phi_c = mode.eigenfunction
    cols = []
    reactions = []
    for shift in (-dx, 0.0, dx):
        profile = medium.profile_at(x + shift)
        z, hz = _grid(disc.z_min, disc.n_points, DIRICHLET)
        f, r = _coefficients(profile, z, hz, disc.z_min, disc.coefficients)
        if shift == 0.0:
            phi, flux0, reaction0 = phi_c, f, r
        else:
            _, phi = _column_mode(profile, xi, disc, branch, reference=phi_c)
        cols.append(phi)
        reactions.append(r)
    phi_cols = np.array(cols)
    z, _ = _grid(disc.z_min, disc.n_points, DIRICHLET)
    z_flux = np.concatenate([z - 0.5 * h, [z[-1] + 0.5 * h]])
    c1 = medium.depth_coefficients[0] if medium.depth_coefficients else 0.0
    source = _first_order_source(c1 * z_flux * flux0, np.array(reactions), c1 * z * reaction0,
                                 phi_cols, xi, dx, h, 1)
    a1, phi1 = _corrector(flux0, reaction0, xi, h, mode.grid_lam if math.isfinite(mode.grid_lam)
                          else mode.lam, phi_c, source)
    return ModeExpansion(phi_c, mode.lam, a1, phi1, float(xi), float(x), z, branch)


# -- residual study ------------------------------------------------------------------

def plateau_window(x, centre, period, flat=0.25, ramp=0.15):
    """Smooth cutoff equal to 1 within ``flat * period`` of ``centre``."""
    d = np.abs((np.asarray(x) - centre + 0.5 * period) % period - 0.5 * period) / period
    t = np.clip((d - flat) / ramp, 0.0, 1.0)
    out = np.zeros_like(t)
    inside = t < 1
    s = t[inside]
    # C-infinity step
    with np.errstate(divide="ignore", over="ignore"):
        g1 = np.where(s < 1, np.exp(-1.0 / np.maximum(1 - s, 1e-300)), 0.0)
        g0 = np.where(s > 0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
    out[inside] = g1 / (g0 + g1)
    return out


@dataclass
class ResidualReport:
    epsilons: list
    residual0: list
    residual1: list
    slope0: float | None
    slope1: float | None
    flags: list = field(default_factory=list)

    @property
    def residual_norms(self):
        return {"zeroth": self.residual0, "first": self.residual1}

    @property
    def fitted_slopes(self):
        return {"zeroth": self.slope0, "first": self.slope1}

    def to_dict(self):
        return {
            "epsilons": list(self.epsilons),
            "residual0": list(self.residual0),
            "residual1": list(self.residual1),
            "slope0": self.slope0,
            "slope1": self.slope1,
            "flags": list(self.flags),
        }


def _loglog_slope(eps, res):
    eps, res = np.asarray(eps), np.asarray(res)
    if np.any(res <= 0):
        return None
    return float(np.polyfit(np.log(eps), np.log(res), 1)[0])


def residual_decay(medium, x0, xi, expansion=None, epsilons=(1 / 32, 1 / 64, 1 / 128),
                   grid=None, branch=None, window=False, workers=None, floor=1e-9):
    """Relative residuals of the zeroth- and first-order ansatz for each eps.

    With ``window`` the envelope is multiplied by :func:`plateau_window`
    centred at ``x0`` and residuals are measured where the window is flat.
    """
    eps = sorted(float(e) for e in epsilons)
    if len(eps) < 3:
        raise InputError("slope fit needs at least 3 epsilons", field="epsilons")
    if eps[0] <= 0:
        raise InputError("epsilons must be positive", field="epsilons")
    if branch is None:
        branch = expansion.branch_index if expansion is not None else 1
    if grid is None:
        grid = PlaneGrid.for_medium(medium, xi)
    cols, coeffs = expansion_columns(medium, grid, xi, branch, workers)
    flags = []
    if expansion is not None:
        j = int(np.argmin(np.abs((grid.x - x0 + 0.5 * grid.period) % grid.period
                                 - 0.5 * grid.period)))
        if abs(grid.x[j] - x0) < 1e-12 and abs(cols.a0[j] - expansion.a0) > 1e-8 * abs(expansion.a0):
            flags.append("expansion eigenvalue differs from the plane-grid column")

    mask = np.ones(grid.n_x, dtype=bool)
    weight = np.ones(grid.n_x)
    if window:
        weight = plateau_window(grid.x, x0, grid.period)
        flat = weight == 1.0
        # the stencil reaches one column either side
        mask = flat & np.roll(flat, 1) & np.roll(flat, -1)

    def residuals(e):
        w0 = weight[:, None] * cols.phi0
        w1 = weight[:, None] * (cols.phi0 + e * cols.phi1)
        r0 = apply_H_2d(medium, e, w0, grid, xi, coeffs) - cols.a0[:, None] * w0
        r1 = apply_H_2d(medium, e, w1, grid, xi, coeffs) - (cols.a0 + e * cols.a1)[:, None] * w1
        return (float(np.linalg.norm(r0[mask]) / np.linalg.norm(w0[mask])),
                float(np.linalg.norm(r1[mask]) / np.linalg.norm(w1[mask])))

    if worker_count(workers) > 1:
        with ThreadPoolExecutor(max_workers=worker_count(workers)) as pool:
            pairs = list(pool.map(residuals, eps))
    else:
        pairs = [residuals(e) for e in eps]
    res0 = [p[0] for p in pairs]
    res1 = [p[1] for p in pairs]
    slope0 = _loglog_slope(eps, res0)
    slope1 = _loglog_slope(eps, res1)
    if max(res0) < floor:
        flags.append("zeroth-order residual at discretization level; slope not applicable")
        slope0 = slope1 = None
    else:
        for e, r0, r1 in zip(eps, res0, res1):
            if r1 > r0:
                flags.append(f"first-order residual exceeds zeroth order at eps={e!r}")
    return ResidualReport(eps, res0, res1, slope0, slope1, flags)
