"""Stratified media: vertical profiles N(Z), lateral media N(x, z, Z).

``N`` carries a squared speed, ``Z`` is the stretched depth ``z / eps`` and
the medium occupies ``Z <= 0``.  Every profile is exactly constant below its
cutoff depth ``Z0``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import AssumptionViolation, InputError, ProfileFormatError

STEP = "step"
SMOOTH = "smooth-analytic"
SAMPLED = "sampled"

ASSUMPTION_A = "assumption-A"
ASSUMPTION_B = "assumption-B"


@dataclass(frozen=True)
class VerticalProfile:
    """Frozen vertical law ``Z -> N(x, 0, Z)``.

    ``data`` holds the kind-specific parameters:

    * step: ``(n_layer, n_halfspace, thickness)``
    * smooth-analytic: ``(tail, surface, decay_length, cutoff)``
    * sampled: ``(z_samples, n_samples)`` as tuples
    """

    kind: str
    surface_value: float
    tail_value: float
    cutoff_depth: float
    data: tuple
    monotone_decreasing: bool

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == STEP:
            a, b, h = self.data
            return np.where(z > -h, a, b).astype(float)
        if self.kind == SMOOTH:
            tail, surface, delta, z0 = self.data
            with np.errstate(over="ignore", under="ignore"):
                inner = tail - (tail - surface) * np.exp(np.minimum(z, 0.0) / delta)
            return np.where(z > z0, inner, tail)
        zs, ns = (np.asarray(v) for v in self.data)
        return np.interp(z, zs, ns, left=ns[0], right=ns[-1])

    __call__ = evaluate

    def antiderivative(self, z):
        """Signed integral of N from 0 to ``z``."""
        z = np.asarray(z, dtype=float)
        if self.kind == STEP:
            a, b, h = self.data
            return np.where(z > -h, a * z, -a * h + b * (z + h))
        if self.kind == SMOOTH:
            tail, surface, delta, z0 = self.data
            amp = tail - surface

            def inner(t):
                return tail * t - amp * delta * np.expm1(t / delta)

            zc = np.maximum(z, z0)
            return np.where(z > z0, inner(zc), inner(z0) + tail * (z - z0))
        return self._sampled_integral(z, harmonic=False)

    def inverse_antiderivative(self, z):
        """Signed integral of 1/N from 0 to ``z``."""
        z = np.asarray(z, dtype=float)
        if self.kind == STEP:
            a, b, h = self.data
            return np.where(z > -h, z / a, -h / a + (z + h) / b)
        if self.kind == SMOOTH:
            tail, surface, delta, z0 = self.data
            amp = tail - surface

            def inner(t):
                with np.errstate(under="ignore"):
                    nval = tail - amp * np.exp(t / delta)
                return (t - delta * np.log(nval / surface)) / tail

            zc = np.maximum(z, z0)
            return np.where(z > z0, inner(zc), inner(z0) + (z - z0) / tail)
        return self._sampled_integral(z, harmonic=True)

    def _sampled_integral(self, z, harmonic):
        zs, ns = (np.asarray(v) for v in self.data)
        widths = np.diff(zs)
        a, b = ns[:-1], ns[1:]
        if harmonic:
            seg = _log_mean_inverse(a, b) * widths
        else:
            seg = 0.5 * (a + b) * widths
        # cumulative integral from each node up to 0
        to_surface = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
        out = np.empty_like(z)
        below = z <= zs[0]
        tail = ns[0]
        out[below] = -to_surface[0] - (zs[0] - z[below]) * (1.0 / tail if harmonic else tail)
        inside = ~below
        if np.any(inside):
            zi = np.minimum(z[inside], zs[-1])
            k = np.clip(np.searchsorted(zs, zi, side="right") - 1, 0, len(zs) - 2)
            nz = np.interp(zi, zs, ns)
            part = zi - zs[k]
            if harmonic:
                piece = _log_mean_inverse(ns[k], nz) * part
            else:
                piece = 0.5 * (ns[k] + nz) * part
            out[inside] = -to_surface[k] + piece
        return out

    def cell_average(self, lo, hi):
        """Mean of N over each interval ``[lo, hi]``."""
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        return (self.antiderivative(hi) - self.antiderivative(lo)) / (hi - lo)

    def harmonic_average(self, lo, hi):
        """Harmonic mean of N over each interval ``[lo, hi]``."""
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        return (hi - lo) / (self.inverse_antiderivative(hi) - self.inverse_antiderivative(lo))

    # -- structure ----------------------------------------------------------

    @property
    def infimum(self):
        if self.kind == STEP:
            return min(self.data[0], self.data[1])
        if self.kind == SMOOTH:
            return min(self.surface_value, self.tail_value)
        return float(min(self.data[1]))

    @property
    def breakpoints(self):
        """Depths where N or its derivative is discontinuous."""
        if self.kind == STEP:
            return (-self.data[2],)
        if self.kind == SMOOTH:
            return (self.data[3],)
        return tuple(self.data[0][:-1])

    @property
    def jumps(self):
        """Depths where N itself is discontinuous."""
        if self.kind == STEP:
            return () if self.data[0] == self.data[1] else (-self.data[2],)
        if self.kind == SMOOTH:
            return (self.data[3],)
        return ()

    def scaled(self, factor):
        """The profile multiplied by a positive constant."""
        c = float(factor)
        if self.kind == STEP:
            a, b, h = self.data
            data = (a * c, b * c, h)
        elif self.kind == SMOOTH:
            tail, surface, delta, z0 = self.data
            data = (tail * c, surface * c, delta, z0)
        else:
            zs, ns = self.data
            data = (zs, tuple(v * c for v in ns))
        return VerticalProfile(self.kind, self.surface_value * c, self.tail_value * c,
                               self.cutoff_depth, data, self.monotone_decreasing)

    def sample_grid(self, n=2001):
        """Evaluation depths covering [Z0 - 1, 0] plus all breakpoints."""
        z0 = self.cutoff_depth
        grid = np.linspace(z0 - max(1.0, 0.25 * abs(z0)), 0.0, n)
        extra = [b for bp in self.breakpoints for b in (bp, np.nextafter(bp, 0.0))]
        return np.unique(np.concatenate([grid, extra]))


def _log_mean_inverse(a, b):
    """Mean of 1/N over a segment where N goes linearly from a to b."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    d = b - a
    close = np.abs(d) <= 1e-9 * np.abs(a)
    safe_d = np.where(close, 1.0, d)
    return np.where(close, 2.0 / (a + b), np.log(b / a) / safe_d)


# -- constructors -------------------------------------------------------------

def make_step_profile(n_layer, n_halfspace, thickness):
    """Low-speed layer of given thickness over a faster half-space."""
    n_layer, n_halfspace, thickness = float(n_layer), float(n_halfspace), float(thickness)
    if not thickness > 0:
        raise InputError(f"layer thickness must be positive, got {thickness}", field="thickness")
    if not n_layer > 0:
        raise AssumptionViolation(f"N must be positive, got n_layer={n_layer}",
                                  assumption="positivity", field="n_layer")
    if n_layer > n_halfspace:
        raise AssumptionViolation(
            f"slow-layer condition violated: n_layer={n_layer} > n_halfspace={n_halfspace}",
            assumption="slow-layer", field="n_layer")
    if n_layer == n_halfspace:
        raise AssumptionViolation(
            f"slow-layer condition violated: inf N = N_inf = {n_halfspace}, no slow layer",
            assumption="slow-layer", field="n_layer")
    return VerticalProfile(STEP, n_layer, n_halfspace, -thickness,
                           (n_layer, n_halfspace, thickness), True)


def make_constant_profile(value, cutoff_depth=-1.0):
    """Homogeneous reference medium; deliberately violates the slow-layer condition (inf N < N_inf)."""
    value = float(value)
    if not value > 0:
        raise AssumptionViolation(f"N must be positive, got {value}", assumption="positivity")
    return VerticalProfile(STEP, value, value, cutoff_depth, (value, value, -cutoff_depth), True)


def make_smooth_profile(tail_value, surface_value, decay_length, clip_tol=1e-2,
                        family="exponential"):
    """Exponential relaxation ``N = N_inf - (N_inf - N_s) exp(Z / delta)``.

    The profile is set exactly to ``N_inf`` below the depth where the
    deviation ``(N_inf - N_s) exp(Z / delta)`` drops to ``clip_tol``.
    """
    if family != "exponential":
        raise InputError(f"unsupported profile family {family!r}", field="family")
    tail, surface, delta = float(tail_value), float(surface_value), float(decay_length)
    if not delta > 0:
        raise InputError(f"decay length must be positive, got {delta}", field="decay_length")
    if not clip_tol > 0:
        raise InputError(f"clip tolerance must be positive, got {clip_tol}", field="clip_tol")
    if not surface > 0:
        raise AssumptionViolation(f"N must be positive, got surface value {surface}",
                                  assumption="positivity", field="surface_value")
    if not surface < tail:
        raise AssumptionViolation(
            f"slow-layer condition violated: surface value {surface} >= N_inf {tail}",
            assumption="slow-layer", field="surface_value")
    contrast = tail - surface
    if clip_tol >= contrast:
        raise InputError("clip tolerance exceeds the velocity contrast", field="clip_tol")
    cutoff = delta * math.log(clip_tol / contrast)
    return VerticalProfile(SMOOTH, surface, tail, cutoff, (tail, surface, delta, cutoff), True)


def make_sampled_profile(z, n):
    """Piecewise-linear profile from samples (Z ascending, last Z = 0)."""
    zs = np.asarray(z, dtype=float)
    ns = np.asarray(n, dtype=float)
    if zs.ndim != 1 or zs.shape != ns.shape or zs.size == 0:
        raise ProfileFormatError("Z and N columns must be equal-length vectors", field="Z")
    if not np.all(np.isfinite(zs)) or not np.all(np.isfinite(ns)):
        raise ProfileFormatError("non-finite sample", field="N")
    bad = np.nonzero(np.diff(zs) <= 0)[0]
    if bad.size:
        raise ProfileFormatError(
            f"Z not strictly increasing at row {bad[0] + 2} (Z={zs[bad[0] + 1]})", field="Z")
    if zs[-1] != 0.0:
        raise ProfileFormatError("last row must have Z = 0", field="Z")
    if np.any(ns <= 0):
        row = int(np.nonzero(ns <= 0)[0][0])
        raise AssumptionViolation(f"N must be positive (row {row + 1}, N={ns[row]})",
                                  assumption="positivity", field="N")
    if zs.size < 2 or not ns.min() < ns[0]:
        raise AssumptionViolation(
            f"slow-layer condition violated: inf N = {ns.min()} is not below the tail value {ns[0]}",
            assumption="slow-layer", field="N")
    monotone = bool(np.all(np.diff(ns) <= 0))
    return VerticalProfile(SAMPLED, float(ns[-1]), float(ns[0]), float(zs[0]),
                           (tuple(zs.tolist()), tuple(ns.tolist())), monotone)


def load_profile(source, format="csv"):
    """Read a sampled profile from a CSV with header ``Z,N``.

    ``source`` may be bytes, text, a path-like string ending in ``.csv`` or a
    file object.
    """
    if format != "csv":
        raise ProfileFormatError(f"unsupported profile format {format!r}", field="format")
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str) and "\n" not in source and source.endswith(".csv"):
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows or [c.strip() for c in rows[0]] != ["Z", "N"]:
        raise ProfileFormatError("expected header 'Z,N'", field="header")
    z, n = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise ProfileFormatError(f"line {lineno}: expected 2 columns", field=f"line {lineno}")
        try:
            z.append(float(row[0]))
            n.append(float(row[1]))
        except ValueError:
            raise ProfileFormatError(f"line {lineno}: not a number", field=f"line {lineno}") from None
    if not z:
        raise ProfileFormatError("no data rows", field="Z")
    return make_sampled_profile(z, n)


def parse_profile_spec(spec):
    """Inline profile syntax used by the CLI: ``step:a,b,h``, ``exp:ninf,ns,delta[,tol]``,
    ``const:n`` or a CSV path."""
    if ":" in spec and not spec.endswith(".csv"):
        name, _, args = spec.partition(":")
        try:
            vals = [float(v) for v in args.split(",")]
        except ValueError:
            raise InputError(f"bad numbers in profile spec {spec!r}", field="profile") from None
        if name == "step" and len(vals) == 3:
            return make_step_profile(*vals)
        if name == "exp" and len(vals) in (3, 4):
            return make_smooth_profile(*vals)
        if name == "const" and len(vals) == 1:
            return make_constant_profile(vals[0])
        raise InputError(f"unrecognised profile spec {spec!r}", field="profile")
    return load_profile(spec)


# -- validation ---------------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    positivity: bool
    tail_constant: bool
    assumption3_margin: float
    monotone: bool
    inverse_eligible: bool

    @property
    def slow_layer(self):
        return self.assumption3_margin > 0

    @property
    def passed(self):
        return self.positivity and self.tail_constant and self.slow_layer

    def to_dict(self):
        return {
            "positivity": self.positivity,
            "tail_constant": self.tail_constant,
            "assumption3_margin": self.assumption3_margin,
            "monotone": self.monotone,
            "inverse_eligible": self.inverse_eligible,
        }


def validate(profile):
    """Check positivity, tail constancy, the slow-layer condition and monotonicity."""
    if profile.kind == SAMPLED:
        grid = np.union1d(profile.sample_grid(), np.asarray(profile.data[0]))
    else:
        grid = profile.sample_grid()
    values = profile.evaluate(grid)
    positivity = bool(np.all(values > 0))
    tail = grid <= profile.cutoff_depth
    tail_constant = bool(np.all(values[tail] == profile.tail_value))
    margin = float(profile.tail_value - values.min())
    if profile.kind == SAMPLED:
        monotone = bool(np.all(np.diff(np.asarray(profile.data[1])) <= 0))
    else:
        monotone = bool(np.all(np.diff(values) <= 0))
    inf_at_surface = bool(values[-1] == values.min())
    eligible = positivity and tail_constant and margin > 0 and monotone and inf_at_surface
    return ValidationReport(positivity, tail_constant, margin, monotone, eligible)


# -- lateral media --------------------------------------------------------------

@dataclass(frozen=True)
class LateralMedium:
    """Medium ``N(x, z, Z) = N(x, 0, Z) * (1 + sum_l c_l z^l)``.

    ``base`` maps a horizontal position to the frozen vertical profile.  Under
    assumption-B the depth coefficients must be empty.
    """

    base: Callable[[float], VerticalProfile]
    regularity: str = ASSUMPTION_B
    depth_coefficients: Sequence[float] = field(default=())

    def __post_init__(self):
        if self.regularity not in (ASSUMPTION_A, ASSUMPTION_B):
            raise InputError(f"unknown regularity {self.regularity!r}", field="regularity")
        if self.regularity == ASSUMPTION_B and any(self.depth_coefficients):
            raise InputError("assumption-B media carry no z-dependence", field="depth_coefficients")

    @classmethod
    def uniform(cls, profile, regularity=ASSUMPTION_B, depth_coefficients=()):
        return cls(lambda x: profile, regularity, tuple(depth_coefficients))

    @classmethod
    def modulated(cls, profile, amplitude=0.1, wavenumber=1.0, regularity=ASSUMPTION_B,
                  depth_coefficients=()):
        """Profile scaled laterally by ``1 + amplitude * sin(wavenumber * x)``."""
        if not abs(amplitude) < 1:
            raise InputError("lateral amplitude must be below 1 to keep N positive",
                             field="amplitude")

        def base(x):
            return profile.scaled(1.0 + amplitude * math.sin(wavenumber * x))

        return cls(base, regularity, tuple(depth_coefficients))

    def profile_at(self, x):
        return self.base(float(x))

    def depth_factor(self, z):
        """``1 + sum_l c_l z^l`` at physical depth ``z``."""
        z = np.asarray(z, dtype=float)
        out = np.ones_like(z)
        for power, c in enumerate(self.depth_coefficients, start=1):
            out = out + c * z**power
        return out

    def evaluate(self, x, z, Z):
        return self.profile_at(x).evaluate(Z) * self.depth_factor(z)
