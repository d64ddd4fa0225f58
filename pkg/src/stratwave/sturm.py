"""Half-line Dirichlet Sturm-Liouville problem for surface modes.

For a wavenumber ``xi`` the transverse operator is

    L v = -(N v')' + N xi^2 v,    v(0) = 0,  Z <= 0,

whose discrete spectrum lies in ``(inf N xi^2, N_inf xi^2)``.  It is
discretised with a three-point flux-form stencil on a uniform grid over
``[z_min, 0]``; below ``z_min`` the medium is the constant tail, which the
``exact-decay`` bottom condition treats analytically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded
from scipy.optimize import bisect, brentq

from .errors import AboveContinuumError, ConvergenceError, DiscretizationError, InputError

DIRICHLET = "dirichlet-truncation"
EXACT_DECAY = "exact-decay"
CELL_AVERAGE = "cell-average"
MIDPOINT = "midpoint"

# stebz absolute tolerance, relative to the continuum threshold
_EIG_TOL = 1e-13


@dataclass(frozen=True)
class Discretization:
    """Numerical realisation of the half-line.

    ``coefficients`` selects how N enters the stencil: ``midpoint`` samples N
    at cell midpoints and nodes; ``cell-average`` uses the harmonic mean of N
    over each cell for the flux and the mean over the dual cell for the
    ``N xi^2`` term, which keeps second order across jumps of N.
    ``extrapolate`` adds a Richardson step against a finer partner grid.
    """

    z_min: float
    n_points: int
    bottom_bc: str = EXACT_DECAY
    continuum_guard: float = 1e-6
    coefficients: str = CELL_AVERAGE
    extrapolate: bool = True
    edge_band: float = 1e-4

    def __post_init__(self):
        if self.n_points < 16:
            raise DiscretizationError(f"n_points must be >= 16, got {self.n_points}",
                                      field="n_points")
        if not self.z_min < 0:
            raise DiscretizationError(f"z_min must be negative, got {self.z_min}", field="z_min")
        if not 0 < self.continuum_guard < 1:
            raise DiscretizationError("continuum_guard must lie in (0, 1)",
                                      field="continuum_guard")
        if self.bottom_bc not in (DIRICHLET, EXACT_DECAY):
            raise DiscretizationError(f"unknown bottom condition {self.bottom_bc!r}",
                                      field="bottom_bc")
        if self.coefficients not in (CELL_AVERAGE, MIDPOINT):
            raise DiscretizationError(f"unknown coefficient rule {self.coefficients!r}",
                                      field="coefficients")

    @property
    def spacing(self):
        return abs(self.z_min) / (self.n_points + 1)

    def check(self, profile):
        if not self.z_min < profile.cutoff_depth:
            raise DiscretizationError(
                f"truncation depth z_min={self.z_min} must lie below the cutoff "
                f"Z0={profile.cutoff_depth}", field="z_min")

    @classmethod
    def auto(cls, profile, xi, points_per_wavelength=64, bottom_bc=EXACT_DECAY,
             max_points=200_000, **kwargs):
        """Grid resolving the fastest oscillation ``xi * sqrt(N_inf / inf N)``."""
        xi = float(xi)
        z0 = profile.cutoff_depth
        if bottom_bc == EXACT_DECAY:
            z_min = z0 - max(0.5, 0.1 * abs(z0))
        else:
            # tails of modes up to 99% of the threshold decay by 1e-10
            kappa_ref = 0.1 * xi
            z_min = z0 - min(math.log(1e10) / kappa_ref, 200.0)
        k_max = xi * math.sqrt(profile.tail_value / profile.infimum)
        h = min(2 * math.pi / (k_max * points_per_wavelength), abs(z0) / 16)
        n = int(min(max(64, math.ceil(abs(z_min) / h) - 1), max_points))
        return cls(z_min=z_min, n_points=n, bottom_bc=bottom_bc, **kwargs)


@dataclass(frozen=True)
class TridiagonalSystem:
    """Symmetric tridiagonal matrix ``B = W^{-1/2} A W^{-1/2}``.

    ``A`` is the integrated (finite-volume) form of the operator and ``W``
    the trapezoidal quadrature weights; eigenvalues of ``B`` are those of the
    discrete problem and ``phi = W^{-1/2} y`` maps eigenvectors back.
    """

    diagonal: np.ndarray
    offdiagonal: np.ndarray
    z: np.ndarray
    weights: np.ndarray
    flux: np.ndarray
    reaction: np.ndarray
    spacing: float
    bottom_bc: str
    kappa: float | None = None

    @property
    def size(self):
        return self.diagonal.size

    def matvec(self, y):
        out = self.diagonal * y
        out[:-1] += self.offdiagonal * y[1:]
        out[1:] += self.offdiagonal * y[:-1]
        return out

    def dense(self):
        return (np.diag(self.diagonal) + np.diag(self.offdiagonal, 1)
                + np.diag(self.offdiagonal, -1))

    def norm(self):
        """Infinity norm of B."""
        row = np.abs(self.diagonal).copy()
        row[:-1] += np.abs(self.offdiagonal)
        row[1:] += np.abs(self.offdiagonal)
        return float(row.max())


@dataclass(frozen=True)
class ModePair:
    """One discrete eigenvalue with its normalised eigenfunction.

    ``eigenfunction`` is sampled on ``z``; ``weights`` is the trapezoidal
    rule on that grid and ``tail_mass`` the analytic contribution of the
    exponential tail below the grid (zero under Dirichlet truncation), so
    that ``sum(weights * phi**2) + tail_mass == 1``.
    """

    branch_index: int
    lam: float
    eigenfunction: np.ndarray
    z: np.ndarray
    weights: np.ndarray
    coefficient: np.ndarray
    decay_rate: float
    edge_flag: bool
    tail_value: float
    tail_mass: float = 0.0
    grid_lam: float = field(default=float("nan"))
    extrapolated_moment: float = field(default=float("nan"))

    @property
    def omega(self):
        return math.sqrt(self.lam)

    def norm_squared(self):
        return float(np.sum(self.weights * self.eigenfunction**2) + self.tail_mass)

    def coefficient_moment(self):
        """``int N phi^2 dZ`` over the half-line.

        Uses the Richardson-extrapolated value when available, which is the
        exact xi-derivative companion of the extrapolated eigenvalue.
        """
        if math.isfinite(self.extrapolated_moment):
            return self.extrapolated_moment
        return self.grid_moment()

    def grid_moment(self):
        phi = self.eigenfunction
        return float(np.sum(self.weights * self.coefficient * phi**2)
                     + self.tail_value * self.tail_mass)


# -- assembly -----------------------------------------------------------------

def _grid(z_min, n_points, bottom_bc):
    h = abs(z_min) / (n_points + 1)
    first = 0 if bottom_bc == EXACT_DECAY else 1
    idx = np.arange(first, n_points + 1)
    z = z_min + h * idx
    return z, h


def _coefficients(profile, z, h, z_min, rule):
    """Flux coefficients at the midpoints below each node plus the one above
    the last node, and reaction coefficients at the nodes."""
    lower = np.concatenate([z - h, [z[-1]]])
    upper = np.concatenate([z, [z[-1] + h]])
    if rule == MIDPOINT:
        flux = profile.evaluate(0.5 * (lower + upper))
        reaction = profile.evaluate(z)
    else:
        flux = profile.harmonic_average(lower, upper)
        reaction = profile.cell_average(np.maximum(z - 0.5 * h, z_min), z + 0.5 * h)
    if np.any(flux <= 0) or np.any(reaction <= 0):
        raise InputError("non-positive N encountered during assembly", field="profile")
    return flux, reaction


def _assemble(profile, xi, z_min, n_points, bottom_bc, rule, kappa):
    z, h = _grid(z_min, n_points, bottom_bc)
    flux, reaction = _coefficients(profile, z, h, z_min, rule)
    h2 = h * h
    diag = (flux[:-1] + flux[1:]) / h2 + reaction * xi**2
    off = -flux[1:-1] / h2
    weights = np.full(z.size, h)
    if bottom_bc == EXACT_DECAY:
        # half cell at z_min with N v' = N_inf kappa v closing the flux balance
        weights[0] = 0.5 * h
        diag[0] = 2 * flux[1] / h2 + 2 * profile.tail_value * kappa / h + reaction[0] * xi**2
        off[0] = -math.sqrt(2.0) * flux[1] / h2
        flux = flux[1:]
    return TridiagonalSystem(diag, off, z, weights, flux, reaction, h, bottom_bc, kappa)


def decay_rate(profile, xi, lam):
    """Tail decay ``kappa = sqrt(xi^2 - lam / N_inf)``."""
    return math.sqrt(max(xi * xi - lam / profile.tail_value, 0.0))


def assemble_operator(profile, xi, disc, lam=None):
    """Discrete operator for wavenumber ``xi``.

    Under ``exact-decay`` the bottom row depends on the eigenvalue through
    ``kappa``; ``lam`` selects it and defaults to the guard threshold.
    """
    xi = float(xi)
    if not xi > 0:
        raise InputError(f"xi must be positive, got {xi}", field="xi")
    disc.check(profile)
    kappa = None
    if disc.bottom_bc == EXACT_DECAY:
        if lam is None:
            lam = (1 - disc.continuum_guard) * profile.tail_value * xi**2
        kappa = decay_rate(profile, xi, lam)
    return _assemble(profile, xi, disc.z_min, disc.n_points, disc.bottom_bc,
                     disc.coefficients, kappa)


# -- counting -------------------------------------------------------------------

def sturm_count(diagonal, offdiagonal, shifts, first_diagonal=None):
    """Number of eigenvalues ``<= s`` of a symmetric tridiagonal matrix for
    each shift, from the signs of the LDL^T pivots of ``B - s I``.

    ``first_diagonal`` optionally overrides ``B[0, 0]`` per shift.
    """
    shifts = np.atleast_1d(np.asarray(shifts, dtype=float))
    scale = max(float(np.max(np.abs(diagonal))), 1.0)
    pivmin = np.finfo(float).tiny / np.finfo(float).eps * scale
    e2 = np.asarray(offdiagonal, dtype=float) ** 2
    d = np.asarray(diagonal, dtype=float)
    q = (d[0] if first_diagonal is None else np.asarray(first_diagonal, float)) - shifts
    q = np.where(np.abs(q) < pivmin, -pivmin, q)
    count = (q < 0).astype(np.int64)
    for i in range(1, d.size):
        q = (d[i] - shifts) - e2[i - 1] / q
        q = np.where(np.abs(q) < pivmin, -pivmin, q)
        count += q < 0
    return count


def count_below(profile, xi, E_scaled, disc):
    """Number of discrete eigenvalues ``<= E_scaled * xi^2``.

    ``E_scaled`` may be a scalar or an array; the result has the same shape.
    Eigenvectors are never formed.
    """
    xi = float(xi)
    E = np.asarray(E_scaled, dtype=float)
    if np.any(E >= profile.tail_value):
        raise AboveContinuumError(
            f"E_scaled must stay below N_inf={profile.tail_value}", field="E_scaled")
    system = assemble_operator(profile, xi, disc)
    shifts = E.ravel() * xi**2
    first = None
    if disc.bottom_bc == EXACT_DECAY:
        kappas = np.sqrt(np.maximum(xi**2 - shifts / profile.tail_value, 0.0))
        base = system.diagonal[0] - 2 * profile.tail_value * system.kappa / system.spacing
        first = base + 2 * profile.tail_value * kappas / system.spacing
    counts = sturm_count(system.diagonal, system.offdiagonal, shifts, first)
    if E.ndim == 0:
        return int(counts[0])
    return counts.reshape(E.shape)


# -- eigenpairs -------------------------------------------------------------------

def _eigvals_below(system, upper):
    if system.size == 0:
        return np.empty(0)
    return eigh_tridiagonal(system.diagonal, system.offdiagonal, eigvals_only=True,
                            select="v", select_range=(0.0, upper),
                            tol=_EIG_TOL * upper)


def _eigval_index(system, j, tol):
    return eigh_tridiagonal(system.diagonal, system.offdiagonal, eigvals_only=True,
                            select="i", select_range=(j, j), tol=tol)[0]


def _eigpair_index(system, j, tol):
    w, v = eigh_tridiagonal(system.diagonal, system.offdiagonal, select="i",
                            select_range=(j, j), tol=tol)
    return w[0], v[:, 0]


def _refine(system, lam, y):
    """Inverse iteration until the residual reaches the rounding floor."""
    target = 1e-10 * system.norm()
    for _ in range(3):
        if np.linalg.norm(system.matvec(y) - lam * y) <= target:
            break
        ab = np.zeros((3, system.size))
        ab[0, 1:] = system.offdiagonal
        ab[1] = system.diagonal - lam * (1 + 4 * np.finfo(float).eps)
        ab[2, :-1] = system.offdiagonal
        y = solve_banded((1, 1), ab, y)
        y /= np.linalg.norm(y)
    return y


def _grid_eigenvalues(profile, xi, z_min, n, disc, want_vectors):
    """Eigenvalues (and vectors) below the guard on one grid."""
    cap = (1 - disc.continuum_guard) * profile.tail_value * xi**2
    tol = _EIG_TOL * cap
    if disc.bottom_bc == DIRICHLET:
        system = _assemble(profile, xi, z_min, n, DIRICHLET, disc.coefficients, None)
        lams = _eigvals_below(system, cap)
        pairs = []
        for j, lam in enumerate(lams):
            if want_vectors:
                lam, y = _eigpair_index(system, j, tol)
                pairs.append((lam, _refine(system, lam, y), system))
            else:
                pairs.append((lam, None, system))
        return pairs

    def system_at(lam):
        return _assemble(profile, xi, z_min, n, EXACT_DECAY, disc.coefficients,
                         decay_rate(profile, xi, lam))

    guard_system = system_at(cap)
    n_modes = _eigvals_below(guard_system, cap).size
    lo_lam = profile.infimum * xi**2
    low_system = system_at(lo_lam)
    pairs = []
    for j in range(n_modes):
        # mu_j(kappa(lam)) - lam is decreasing in lam; its root is the eigenvalue
        a = _eigval_index(guard_system, j, tol)
        b = min(_eigval_index(low_system, j, tol), cap)

        def gap(lam):
            return _eigval_index(system_at(lam), j, tol) - lam

        # a mode that barely reaches the bottom leaves a bracket at noise level
        if a >= b or gap(b) >= 0:
            lam = b
        elif gap(a) <= 0:
            lam = a
        else:
            try:
                lam = brentq(gap, a, b, xtol=tol, rtol=1e-15, maxiter=200)
            except (RuntimeError, ValueError) as exc:
                raise ConvergenceError(f"bottom-condition iteration failed for mode {j + 1}",
                                       bracket=(a, b)) from exc
        system = system_at(lam)
        if want_vectors:
            _, y = _eigpair_index(system, j, tol)
            pairs.append((lam, _refine(system, lam, y), system))
        else:
            pairs.append((lam, None, system))
    return pairs


def partner_points(profile, z_min, n_points, search=24):
    """Finer grid for Richardson extrapolation.

    Close to ``2 n + 1`` points, chosen so that every jump of N sits at the
    same fractional cell position as on the base grid; the leading error
    constant depends on that position.
    """
    target = 2 * n_points + 1
    jumps = [j for j in profile.jumps if z_min < j < 0]
    if not jumps:
        return target
    length = abs(z_min)

    def offsets(m):
        h = length / (m + 1)
        return np.array([((j - z_min) / h) % 1.0 for j in jumps])

    base = offsets(n_points)
    best, best_score = target, None
    for m in range(target - search, target + search + 1):
        d = np.abs(offsets(m) - base)
        score = float(np.sum(np.minimum(d, 1 - d)))
        key = (round(score, 12), abs(m - target))
        if best_score is None or key < best_score:
            best, best_score = m, key
    return best


def solve_modes(profile, xi, disc):
    """All eigenpairs with ``lam < (1 - guard) N_inf xi^2``, ascending.

    With ``disc.extrapolate`` the eigenvalues are Richardson-extrapolated
    against :func:`partner_points`; eigenfunctions always come from the base
    grid and ``grid_lam`` keeps the unextrapolated value.
    """
    xi = float(xi)
    if not xi > 0:
        raise InputError(f"xi must be positive, got {xi}", field="xi")
    disc.check(profile)
    threshold = profile.tail_value * xi**2
    base = [(lam, *_normalised(profile, xi, disc, j, lam, y, system), system)
            for j, (lam, y, system) in enumerate(
                _grid_eigenvalues(profile, xi, disc.z_min, disc.n_points, disc, True))]
    lams = np.array([b[0] for b in base])
    moments = np.array([b[3] for b in base])
    extrapolated, ext_moments = lams, np.full(lams.size, np.nan)
    if disc.extrapolate and lams.size:
        m = partner_points(profile, disc.z_min, disc.n_points)
        fine = [(lam, _normalised(profile, xi, disc, j, lam, y, system)[2])
                for j, (lam, y, system) in enumerate(
                    _grid_eigenvalues(profile, xi, disc.z_min, m, disc, True))]
        r2 = ((m + 1) / (disc.n_points + 1)) ** 2
        k = min(len(fine), lams.size)
        extrapolated = lams.copy()
        fine_lam = np.array([f[0] for f in fine[:k]])
        fine_mom = np.array([f[1] for f in fine[:k]])
        extrapolated[:k] = (r2 * fine_lam - lams[:k]) / (r2 - 1)
        ext_moments[:k] = (r2 * fine_mom - moments[:k]) / (r2 - 1)
    modes = []
    for j, ((grid_lam, phi, tail, _, system), lam) in enumerate(zip(base, extrapolated)):
        modes.append(ModePair(
            branch_index=j + 1,
            lam=float(lam),
            eigenfunction=phi,
            z=system.z,
            weights=system.weights,
            coefficient=system.reaction,
            decay_rate=decay_rate(profile, xi, lam),
            edge_flag=bool(lam >= (1 - disc.edge_band) * threshold),
            tail_value=profile.tail_value,
            tail_mass=float(tail),
            grid_lam=float(grid_lam),
            extrapolated_moment=float(ext_moments[j]),
        ))
    return modes


def _normalised(profile, xi, disc, j, grid_lam, y, system):
    """Unit-norm eigenfunction, analytic tail mass and ``int N phi^2``."""
    phi = y / np.sqrt(system.weights)
    tail = 0.0
    if disc.bottom_bc == EXACT_DECAY:
        kappa = decay_rate(profile, xi, grid_lam)
        if not kappa > 0:
            raise ConvergenceError(f"mode {j + 1} is not decaying",
                                   bracket=(grid_lam, profile.tail_value * xi**2))
        tail = phi[0] ** 2 / (2 * kappa)
        scale = 1.0 / math.sqrt(1.0 + tail)
        phi = phi * scale
        tail *= scale**2
    if phi[-1] < 0:
        phi = -phi
    moment = float(np.sum(system.weights * system.reaction * phi**2) + profile.tail_value * tail)
    return phi, tail, moment


def eigen_residual(profile, xi, mode, disc):
    """Relative residual ``|B y - lam y| / |y|`` of a grid eigenpair."""
    system = assemble_operator(profile, xi, disc, lam=mode.grid_lam)
    y = mode.eigenfunction * np.sqrt(system.weights)
    return float(np.linalg.norm(system.matvec(y) - mode.grid_lam * y) / np.linalg.norm(y))


# -- independent oracle --------------------------------------------------------------

def step_oracle(n_layer, n_halfspace, thickness, xi):
    """Eigenvalues of the step medium from the Love-type matching condition.

    Roots of ``tan(q h) = -(n_layer q) / (n_halfspace kappa)`` with
    ``q = sqrt(lam / n_layer - xi^2)`` and ``kappa = sqrt(xi^2 - lam / n_halfspace)``,
    one per branch of the tangent.
    """
    a, b, h, xi = float(n_layer), float(n_halfspace), float(thickness), float(xi)
    if not 0 < a < b:
        raise InputError("step oracle needs 0 < n_layer < n_halfspace", field="n_layer")
    q_max = xi * math.sqrt(b / a - 1.0)

    def matching(q):
        kappa = math.sqrt(max(xi * xi - a * (q * q + xi * xi) / b, 0.0))
        return a * q * math.cos(q * h) + b * kappa * math.sin(q * h)

    roots = []
    k = 1
    while (k - 0.5) * math.pi / h < q_max:
        left = (k - 0.5) * math.pi / h
        right = min((k + 0.5) * math.pi / h, q_max)
        if matching(left) * matching(right) < 0:
            q = bisect(matching, left, right, xtol=1e-300, rtol=1e-14, maxiter=400)
            roots.append(a * (q * q + xi * xi))
        k += 1
    return roots


def with_options(disc, **changes):
    return replace(disc, **changes)
