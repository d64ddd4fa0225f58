"""Dispersion branches, group speeds and counting-function grids."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .sturm import Discretization, count_below, solve_modes

WORKERS_ENV = "STRATWAVE_WORKERS"


def worker_count(workers=None):
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    return max(1, int(workers))


def _map(func, items, workers):
    workers = worker_count(workers)
    if workers == 1 or len(items) < 2:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def _resolve_disc(disc, profile, xi):
    if disc is None:
        return Discretization.auto(profile, xi)
    if callable(disc) and not isinstance(disc, Discretization):
        return disc(xi)
    return disc


@dataclass
class DispersionBranch:
    branch_index: int
    xi_grid: np.ndarray
    lam: np.ndarray
    group_speed: np.ndarray
    edge_flags: np.ndarray = field(default=None)

    @property
    def omega(self):
        return np.sqrt(self.lam)

    @property
    def phase_speed(self):
        return self.omega / self.xi_grid

    @property
    def birth_xi(self):
        return float(self.xi_grid[0])


def group_speed(mode, profile, xi):
    """Group speed ``(xi / omega) * int N phi^2 dZ`` of a normalised mode."""
    drift = abs(mode.norm_squared() - 1.0)
    if drift > 1e-9:
        raise InputError(f"mode {mode.branch_index} is not normalised (drift {drift:.3g})",
                         field="mode")
    if mode.tail_value != profile.tail_value:
        raise InputError("mode was computed for a different profile", field="profile")
    return float(xi) / mode.omega * mode.coefficient_moment()


def trace_branches(profile, xi_grid, disc=None, workers=None):
    """Solve on every wavenumber and stitch modes into branches by index.

    ``disc`` is a :class:`Discretization`, a callable ``xi -> Discretization``
    or ``None`` for a grid adapted to the largest wavenumber.
    """
    xi_grid = np.asarray(xi_grid, dtype=float)
    if xi_grid.ndim != 1 or xi_grid.size == 0 or np.any(xi_grid <= 0):
        raise InputError("xi grid must be a non-empty vector of positive values", field="xi")
    if np.any(np.diff(xi_grid) <= 0):
        raise InputError("xi grid must be strictly ascending", field="xi")
    if disc is None:
        disc = Discretization.auto(profile, xi_grid[-1])

    def solve(xi):
        modes = solve_modes(profile, xi, _resolve_disc(disc, profile, xi))
        return [(m.lam, group_speed(m, profile, xi), m.edge_flag) for m in modes]

    spectra = _map(solve, list(xi_grid), workers)
    n_branches = max((len(s) for s in spectra), default=0)
    branches = []
    for j in range(n_branches):
        rows = [(xi, *spec[j]) for xi, spec in zip(xi_grid, spectra) if len(spec) > j]
        arr = np.array([r[:3] for r in rows], dtype=float)
        branches.append(DispersionBranch(
            branch_index=j + 1,
            xi_grid=arr[:, 0],
            lam=arr[:, 1],
            group_speed=arr[:, 2],
            edge_flags=np.array([r[3] for r in rows], dtype=bool),
        ))
    return branches


def branch_counts(branches, xi_grid):
    """Number of branches alive at each wavenumber."""
    xi_grid = np.asarray(xi_grid, dtype=float)
    return np.array([sum(bool(np.any(b.xi_grid == xi)) for b in branches) for xi in xi_grid])


@dataclass
class SpeedReport:
    violations: list
    min_group_margin: float
    min_body_margin: float
    max_phase_speed: float
    branch_min_margin: dict

    @property
    def ok(self):
        return not self.violations

    def to_dict(self):
        return {
            "violations": self.violations,
            "min_group_margin": self.min_group_margin,
            "min_body_margin": self.min_body_margin,
            "max_phase_speed": self.max_phase_speed,
            "branch_min_margin": {str(k): v for k, v in self.branch_min_margin.items()},
        }


def speed_bound_check(branches, profile):
    """Verify ``v < omega / |xi| < sqrt(N_inf)`` at every traced point."""
    body = math.sqrt(profile.tail_value)
    violations = []
    group_margins, body_margins, per_branch = [], [], {}
    max_phase = 0.0
    for b in branches:
        c = b.phase_speed
        v = b.group_speed
        margin = c - v
        per_branch[b.branch_index] = float(margin.min())
        group_margins.append(margin.min())
        body_margins.append((body - c).min())
        max_phase = max(max_phase, float(c.max()))
        for xi, ci, vi in zip(b.xi_grid, c, v):
            if not vi < ci:
                violations.append({"branch": b.branch_index, "xi": float(xi),
                                   "kind": "group>=phase", "group": float(vi), "phase": float(ci)})
            if not ci < body:
                violations.append({"branch": b.branch_index, "xi": float(xi),
                                   "kind": "phase>=body", "phase": float(ci), "body": body})
    return SpeedReport(
        violations=violations,
        min_group_margin=float(min(group_margins)) if group_margins else math.inf,
        min_body_margin=float(min(body_margins)) if body_margins else math.inf,
        max_phase_speed=max_phase,
        branch_min_margin=per_branch,
    )


def body_wave_speeds(n):
    """Phase and group speed of body waves in a homogeneous medium ``n |xi|^2 = omega^2``."""
    c = math.sqrt(n)
    return c, c


@dataclass
class CountingData:
    xi_grid: np.ndarray
    E_grid: np.ndarray
    counts: np.ndarray

    def monotonicity_flags(self):
        """Violations of the expected monotonicity along E and along xi."""
        return {
            "along_E": int(np.sum(np.diff(self.counts, axis=1) < 0)),
            "along_xi": int(np.sum(np.diff(self.counts, axis=0) < 0)),
        }

    def restricted(self, xi_min):
        keep = self.xi_grid >= xi_min
        return CountingData(self.xi_grid[keep], self.E_grid, self.counts[keep])


def counting_grid(profile, xi_grid, E_grid, disc=None, workers=None):
    """Counting function ``#{lam_j(xi) <= E xi^2}`` over a (xi, E) grid.

    Without ``disc`` each wavenumber gets its own adapted grid.
    """
    xi_grid = np.asarray(xi_grid, dtype=float)
    E_grid = np.asarray(E_grid, dtype=float)
    if np.any(xi_grid <= 0) or np.any(np.diff(xi_grid) <= 0):
        raise InputError("xi grid must be positive and strictly ascending", field="xi")
    if np.any(np.diff(E_grid) <= 0):
        raise InputError("E grid must be strictly ascending", field="E")
    if np.any(E_grid <= profile.infimum) or np.any(E_grid >= profile.tail_value):
        raise InputError(
            f"E grid must lie in (inf N, N_inf) = ({profile.infimum}, {profile.tail_value})",
            field="E")

    def count(xi):
        d = _resolve_disc(disc, profile, xi)
        return count_below(profile, xi, E_grid, Discretization(
            d.z_min, d.n_points, d.bottom_bc, d.continuum_guard, d.coefficients, False))

    rows = _map(count, list(xi_grid), workers)
    return CountingData(xi_grid, E_grid, np.array(rows, dtype=np.int64))
