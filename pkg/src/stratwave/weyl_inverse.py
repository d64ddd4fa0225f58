"""Profile recovery from eigenvalue asymptotics.

For a medium decreasing in ``Z`` the counting function grows like
``xi * V(E) / pi`` with

    V(E) = int_{N <= E} sqrt(E / N(Z) - 1) dZ = (K f)(E),
    K f(E) = int_{N0}^{E} sqrt(E - u) f(u) du,     f(u) = -z'(u) / sqrt(u),

where ``z(E)`` is the depth at which ``N = E``.  Since
``d^3/dE^3 (K K f) = (pi / 4) f``, the depth law follows from three
derivatives of ``K V``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad
from scipy.optimize import brentq
from scipy.signal import savgol_filter

from .errors import AboveContinuumError, InputError, ReconstructionFailed

INVERSION_CONSTANT = 4.0 / math.pi


# -- forward quantities --------------------------------------------------------------

def _sublevel_intervals(profile, E):
    """Maximal intervals of [Z0, 0] where N(Z) <= E."""
    grid = np.union1d(np.linspace(profile.cutoff_depth, 0.0, 4001),
                      [b for b in profile.breakpoints if profile.cutoff_depth <= b <= 0])
    grid = np.union1d(grid, np.nextafter(np.asarray(profile.breakpoints), 0.0))
    grid = grid[(grid >= profile.cutoff_depth) & (grid <= 0)]
    inside = profile.evaluate(grid) <= E
    intervals = []
    start = None
    for k, flag in enumerate(inside):
        if flag and start is None:
            start = k
        if start is not None and (not flag or k == len(grid) - 1):
            stop = k if flag else k - 1
            lo = grid[start]
            if start > 0:
                lo = _crossing(profile, E, grid[start - 1], grid[start])
            hi = grid[stop]
            if stop < len(grid) - 1:
                hi = _crossing(profile, E, grid[stop], grid[stop + 1])
            intervals.append((lo, hi))
            start = None
    return intervals


def _crossing(profile, E, a, b):
    fa = profile.evaluate(a) - E
    fb = profile.evaluate(b) - E
    if fa == 0:
        return a
    if fb == 0:
        return b
    if fa * fb > 0:
        return a if abs(fa) < abs(fb) else b
    return brentq(lambda t: float(profile.evaluate(t)) - E, a, b, xtol=1e-15, rtol=1e-15)


def _momentum(profile, E, z):
    return math.sqrt(max(E / float(profile.evaluate(z)) - 1.0, 0.0))


def _interval_integral(profile, E, lo, hi):
    # Z = lo + s^2 (and the mirror at hi) removes the square-root edge
    mid = 0.5 * (lo + hi)
    inner = [b for b in profile.breakpoints if lo < b < hi]

    def left(s):
        return 2 * s * _momentum(profile, E, lo + s * s)

    def right(s):
        return 2 * s * _momentum(profile, E, hi - s * s)

    opts = dict(epsabs=1e-14, epsrel=1e-12, limit=400)
    pts_l = [math.sqrt(b - lo) for b in inner if b <= mid]
    pts_r = [math.sqrt(hi - b) for b in inner if b > mid]
    total = quad(left, 0.0, math.sqrt(mid - lo), points=pts_l or None, **opts)[0]
    total += quad(right, 0.0, math.sqrt(hi - mid), points=pts_r or None, **opts)[0]
    return total


def action(profile, E):
    """``V(E)``: depth integral of ``sqrt(E / N - 1)`` over the sublevel set."""
    E = float(E)
    if E >= profile.tail_value:
        raise AboveContinuumError(f"E={E} is not below N_inf={profile.tail_value}", field="E")
    if E <= profile.infimum:
        return 0.0
    return sum(_interval_integral(profile, E, lo, hi)
               for lo, hi in _sublevel_intervals(profile, E) if hi > lo)


def area_sublevel(profile, E):
    """Phase-space area of ``{N(Z) (1 + zeta^2) <= E}``, equal to ``2 V(E)``."""
    return 2.0 * action(profile, E)


def action_curve(profile, E_grid):
    return np.array([action(profile, E) for E in np.asarray(E_grid, dtype=float)])


# -- counting-function fit --------------------------------------------------------------

@dataclass
class ReconstructionConfig:
    E_grid: np.ndarray
    n0: float
    n_inf: float | None = None
    fit_fraction: float = 1.0 / 3.0
    window: int = 9
    degree: int = 4
    inversion_constant: float = INVERSION_CONSTANT
    margin: float = 0.02
    extension_points: int = 8
    monotone_tol: float = 1e-3
    failure_fraction: float = 0.25
    depth_points: int = 201
    fit_intercept: bool = False

    def __post_init__(self):
        self.E_grid = np.asarray(self.E_grid, dtype=float)
        if self.window % 2 == 0:
            raise InputError("smoothing window must be odd", field="window")
        if self.window < self.degree + 2:
            raise InputError("smoothing window must be at least degree + 2", field="window")
        if self.degree < 4:
            raise InputError("local fit degree must be at least 4", field="degree")
        if not 0 < self.monotone_tol <= self.failure_fraction:
            raise InputError("need 0 < monotone_tol <= failure_fraction", field="monotone_tol")
        if not 0 < self.fit_fraction <= 1:
            raise InputError("fit_fraction must lie in (0, 1]", field="fit_fraction")
        if self.E_grid.ndim != 1 or self.E_grid.size < 2 or np.any(np.diff(self.E_grid) <= 0):
            raise InputError("E grid must be strictly ascending", field="E_grid")
        if self.E_grid[0] <= self.n0:
            raise InputError("E grid must lie above the surface value N0", field="E_grid")
        if self.n_inf is not None:
            gap = self.n_inf - self.n0
            lo, hi = self.n0 + self.margin * gap, self.n_inf - self.margin * gap
            if self.E_grid[0] < lo - 1e-12 or self.E_grid[-1] > hi + 1e-12:
                raise InputError(
                    f"E grid must stay inside ({lo:.6g}, {hi:.6g}) (margin {self.margin} of the gap)",
                    field="E_grid")


@dataclass
class VEstimate:
    value: float
    slope: float
    intercept: float
    n_fit: int
    low_confidence: bool


def _fit_window(counting, config):
    xi = np.asarray(counting.xi_grid, dtype=float)
    cut = (1.0 - config.fit_fraction) * xi.max()
    keep = xi >= cut - 1e-12 * xi.max()
    if keep.sum() < 4:
        raise InputError(f"only {int(keep.sum())} wavenumbers in the fit window (need 4)",
                         field="fit_fraction")
    return keep


def estimate_v(counting, E, config):
    """``V`` from the slope of ``count ~ xi * V / pi`` over the largest wavenumbers."""
    E_grid = np.asarray(counting.E_grid, dtype=float)
    hits = np.nonzero(np.isclose(E_grid, E, rtol=0, atol=1e-12 * max(1.0, abs(E))))[0]
    if hits.size == 0:
        raise InputError(f"E={E} is not on the counting grid", field="E")
    keep = _fit_window(counting, config)
    return _fit_column(np.asarray(counting.xi_grid, float)[keep],
                       np.asarray(counting.counts)[keep, hits[0]].astype(float), config)


def _fit_column(xi, c, config):
    if not np.any(c):
        return VEstimate(0.0, 0.0, 0.0, xi.size, True)
    if config.fit_intercept:
        design = np.column_stack([xi, np.ones_like(xi)])
        (slope, intercept), *_ = np.linalg.lstsq(design, c, rcond=None)
    else:
        slope, intercept = float(np.dot(xi, c) / np.dot(xi, xi)), 0.0
    low = bool(c.max() < 4)
    return VEstimate(math.pi * slope, float(slope), float(intercept), xi.size, low)


def estimate_v_curve(counting, config):
    keep = _fit_window(counting, config)
    xi = np.asarray(counting.xi_grid, float)[keep]
    counts = np.asarray(counting.counts)[keep].astype(float)
    return [_fit_column(xi, counts[:, m], config) for m in range(counts.shape[1])]


# -- Abel-type transform and regularised derivative ----------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def k_transform(f, E_grid, n0):
    """``K f(E) = int_{n0}^{E} sqrt(E - u) f(u) du`` at every grid point.

    ``f`` is piecewise linear between the samples; on ``[n0, E_grid[0]]`` it is
    held at ``f[0]``.  The kernel is integrated exactly on cells touching
    ``u = E`` and by 8-point Gauss-Legendre elsewhere (exact to rounding).
    """
    f = np.asarray(f, dtype=float)
    u = np.asarray(E_grid, dtype=float)
    if f.shape != u.shape:
        raise InputError("f and E grid differ in length", field="f")
    if np.any(np.diff(u) <= 0):
        raise InputError("E grid must be strictly ascending", field="E_grid")
    if u[0] < n0:
        raise InputError("E grid starts below N0", field="E_grid")
    nodes = u
    vals = f
    if u[0] > n0:
        nodes = np.concatenate([[n0], u])
        vals = np.concatenate([[f[0]], f])
    out = np.empty(u.size)
    offset = nodes.size - u.size
    for m in range(u.size):
        top = m + offset
        E = nodes[top]
        lo, hi = nodes[:top], nodes[1:top + 1]
        flo, fhi = vals[:top], vals[1:top + 1]
        out[m] = float(np.sum(_cell_moments(E, lo, hi, flo, fhi)))
    return out


def _cell_moments(E, lo, hi, flo, fhi):
    width = hi - lo
    t0 = E - lo
    t1 = E - hi
    near = t1 < 8 * width
    res = np.empty(lo.size)
    # exact: int sqrt(t) * (c0 + c1 t) dt over [t1, t0]
    if np.any(near):
        a, b = t0[near], np.maximum(t1[near], 0.0)
        w = width[near]
        i1 = (2.0 / 3.0) * (a**1.5 - b**1.5)
        i2 = (2.0 / 5.0) * (a**2.5 - b**2.5)
        # f(u) along t = E - u: f = flo at t0, fhi at t1
        w_lo = (i2 - b * i1) / w
        w_hi = (a * i1 - i2) / w
        res[near] = flo[near] * w_lo + fhi[near] * w_hi
    far = ~near
    if np.any(far):
        half = 0.5 * width[far]
        centre = 0.5 * (lo[far] + hi[far])
        uq = centre[:, None] + half[:, None] * _GL_NODES[None, :]
        s = (uq - lo[far][:, None]) / width[far][:, None]
        fq = flo[far][:, None] * (1 - s) + fhi[far][:, None] * s
        res[far] = half * np.sum(_GL_WEIGHTS[None, :] * np.sqrt(E - uq) * fq, axis=1)
    return res


def third_derivative(g, E_grid, config=None, window=None, degree=None):
    """Third derivative from sliding local least-squares polynomials.

    Returns ``(values, low_confidence)``; points within half a window of
    either end use one-sided fits and are flagged.
    """
    if config is not None:
        window = window or config.window
        degree = degree or config.degree
    window = window or 9
    degree = degree or 4
    g = np.asarray(g, dtype=float)
    E_grid = np.asarray(E_grid, dtype=float)
    steps = np.diff(E_grid)
    if g.size < window:
        raise InputError(f"grid of {g.size} points is shorter than the window {window}",
                         field="window")
    h = steps.mean()
    if np.max(np.abs(steps - h)) > 1e-8 * h:
        raise InputError("third_derivative needs a uniform grid", field="E_grid")
    values = savgol_filter(g, window, degree, deriv=3, delta=h, mode="interp")
    low = np.zeros(g.size, dtype=bool)
    half = window // 2
    low[:half] = True
    low[-half:] = True
    return values, low


# -- pipeline ----------------------------------------------------------------------------

@dataclass
class ReconstructionResult:
    E_grid: np.ndarray
    V_hat: np.ndarray
    KV: np.ndarray
    f_hat: np.ndarray
    z_of_E: np.ndarray
    depth_grid: np.ndarray
    profile_out: np.ndarray
    resolved_range: tuple
    flags: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)
    low_confidence: np.ndarray | None = None

    def to_dict(self):
        return {
            "E_grid": self.E_grid.tolist(),
            "V_hat": self.V_hat.tolist(),
            "f_hat": self.f_hat.tolist(),
            "z_of_E": self.z_of_E.tolist(),
            "depth_grid": self.depth_grid.tolist(),
            "N_reconstructed": self.profile_out.tolist(),
            "errors": self.errors,
            "flags": self.flags,
        }


def _surface_extension(E, V, n0, h, n_fit):
    """Model ``V = K(a + b (u - n0))`` fitted to the first samples and the
    uniform grid continued down towards ``n0``."""
    k = min(n_fit, E.size)
    t = E[:k] - n0
    design = np.column_stack([(2.0 / 3.0) * t**1.5, (4.0 / 15.0) * t**2.5])
    (a, b), *_ = np.linalg.lstsq(design, V[:k], rcond=None)
    n_ext = int(math.floor((E[0] - n0) / h + 1e-9))
    ext = E[0] - h * np.arange(n_ext, 0, -1)
    te = np.maximum(ext - n0, 0.0)
    v_ext = a * (2.0 / 3.0) * te**1.5 + b * (4.0 / 15.0) * te**2.5
    return ext, v_ext, (a, b)


def _depth_at_first(E0, n0, a, b):
    # z(E0) = -int_{n0}^{E0} sqrt(u) (a + b (u - n0)) du
    return -quad(lambda u: math.sqrt(u) * (a + b * (u - n0)), n0, E0, epsabs=1e-15)[0]


def recover_profile(V_hat, config, reference=None):
    """Rebuild ``N(Z)`` from ``V(E)`` sampled on ``config.E_grid``.

    Steps: continue ``V`` to the surface value, apply ``K``, take a
    regularised third derivative times ``inversion_constant`` to get
    ``f = -z'/sqrt(E)``, integrate ``z(E)`` and invert it on a uniform depth
    grid.
    """
    E = config.E_grid
    V = np.asarray(V_hat, dtype=float)
    if V.shape != E.shape:
        raise InputError("V_hat and E grid differ in length", field="V_hat")
    steps = np.diff(E)
    h = steps.mean()
    if np.max(np.abs(steps - h)) > 1e-8 * h:
        raise InputError("recover_profile needs a uniform E grid", field="E_grid")
    flags = []
    if np.any(V < 0):
        flags.append("negative V_hat clipped to 0")
        V = np.maximum(V, 0.0)
    if not np.any(V > 0):
        flags.append("empty reconstruction: V is identically zero")
        empty = np.empty(0)
        return ReconstructionResult(E, V, np.zeros_like(E), np.zeros_like(E), np.zeros_like(E),
                                    empty, empty, (0.0, 0.0), flags)

    ext_E, ext_V, (a, b) = _surface_extension(E, V, config.n0, h, config.extension_points)
    full_E = np.concatenate([ext_E, E])
    full_V = np.concatenate([ext_V, V])
    # K starts at n0 where V vanishes
    nodes = np.concatenate([[config.n0], full_E]) if full_E[0] > config.n0 else full_E
    vals = np.concatenate([[0.0], full_V]) if full_E[0] > config.n0 else full_V
    KV_all = k_transform(vals, nodes, config.n0)[nodes.size - full_E.size:]
    d3, low = third_derivative(KV_all, full_E, config)
    f_all = config.inversion_constant * d3
    n_ext = ext_E.size
    f_hat = f_all[n_ext:]
    low = low[n_ext:]

    negative = f_hat < 0
    if np.any(negative):
        flags.append(f"clipped {int(negative.sum())} points with z'(E) > 0")
    f_pos = np.maximum(f_hat, 0.0)
    z0 = _depth_at_first(E[0], config.n0, a, b)
    z = z0 - cumulative_trapezoid(np.sqrt(E) * f_pos, E, initial=0.0)
    # depth travelled in the wrong direction, relative to the recovered span
    excursion = -cumulative_trapezoid(np.sqrt(E) * np.minimum(f_hat, 0.0), E, initial=0.0)[-1]
    span = abs(z[-1] - z[0])
    if span == 0 or excursion > config.failure_fraction * span:
        raise ReconstructionFailed(
            "recovered z(E) is not monotone; the medium must be a decreasing function of Z")
    if excursion > config.monotone_tol * span:
        flags.append(f"non-monotone excursion {excursion / span:.3g} of the depth span "
                     f"exceeds tolerance {config.monotone_tol:g}")

    # invert E -> z on a uniform depth grid; extension supplies [z(E0), 0]
    zz = np.concatenate([[0.0], [z0], z]) if z0 < 0 else z
    EE = np.concatenate([[config.n0], [E[0]], E]) if z0 < 0 else E
    order = np.argsort(zz, kind="stable")
    depth = np.linspace(z[-1], 0.0, config.depth_points)
    profile_out = np.interp(depth, zz[order], EE[order])
    result = ReconstructionResult(E, V, KV_all[n_ext:], f_hat, z, depth, profile_out,
                                  (float(z[-1]), float(z[0])), flags, low_confidence=low)
    if reference is not None:
        result.errors = reconstruction_error(reference, result)
    return result


def profile_error(reference, depth, values, window=None):
    """Relative L2 and sup errors of sampled values against a reference profile."""
    depth = np.asarray(depth, dtype=float)
    values = np.asarray(values, dtype=float)
    if window is not None:
        lo, hi = window
        keep = (depth >= lo) & (depth <= hi)
        depth, values = depth[keep], values[keep]
    if depth.size == 0:
        raise InputError("no overlap between the reconstruction and the reference", field="reference")
    ref = reference.evaluate(depth)
    diff = values - ref
    return {
        "l2": float(np.linalg.norm(diff) / np.linalg.norm(ref)),
        "sup": float(np.max(np.abs(diff)) / np.max(np.abs(ref))),
        "points": int(depth.size),
    }


def reconstruction_error(reference, result):
    """Errors over the depth window resolved by the E grid (no extrapolation)."""
    if result.depth_grid.size == 0:
        raise InputError("empty reconstruction", field="result")
    lo, hi = result.resolved_range
    depth = np.linspace(lo, hi, max(result.depth_grid.size, 2))
    values = np.interp(depth, result.depth_grid, result.profile_out)
    return profile_error(reference, depth, values)
