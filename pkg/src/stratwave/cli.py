"""Command-line front end.

Exit codes: 0 success, 1 invalid input, 2 numerical failure.  Errors are
reported as one JSON line on standard error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import io as sio
from .dispersion import counting_grid, speed_bound_check, trace_branches
from .errors import InputError, NumericalError, StratwaveError
from .profiles import ASSUMPTION_A, ASSUMPTION_B, LateralMedium, parse_profile_spec, validate
from .sturm import DIRICHLET, EXACT_DECAY, Discretization, solve_modes
from .weyl_inverse import (ReconstructionConfig, action_curve, estimate_v_curve,
                           recover_profile)
from .wkb import PlaneGrid, expansion_columns, residual_decay


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message, field="argv")


def parse_grid(text, name):
    """``start:stop:count`` (inclusive linspace) or a comma-separated list."""
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            count = int(count)
            if count < 1:
                raise ValueError
            return np.linspace(float(start), float(stop), count)
        values = np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError as exc:
        raise InputError(f"cannot parse {name} grid {text!r}", field=name) from exc
    if values.size == 0:
        raise InputError(f"empty {name} grid", field=name)
    return values


def _emit(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        sio.atomic_write(path, text)


def _discretization(args, profile, xi):
    bc = EXACT_DECAY if args.bc == "exact-decay" else DIRICHLET
    if args.n is None and args.z_min is None:
        return Discretization.auto(profile, xi, bottom_bc=bc)
    auto = Discretization.auto(profile, xi, bottom_bc=bc)
    z_min = auto.z_min if args.z_min is None else args.z_min
    n = auto.n_points if args.n is None else args.n
    return Discretization(z_min, n, bottom_bc=bc)


# -- subcommands ---------------------------------------------------------------------

def cmd_validate(args):
    report = validate(parse_profile_spec(args.profile))
    _emit(args.out, sio.json_text(report.to_dict()))
    return 0


def cmd_solve(args):
    profile = parse_profile_spec(args.profile)
    disc = _discretization(args, profile, args.xi)
    modes = solve_modes(profile, args.xi, disc)
    rows = [(m.branch_index, m.lam, m.omega, m.decay_rate, m.edge_flag) for m in modes]
    _emit(args.out, sio.csv_text(["j", "lambda", "omega", "kappa", "edge_flag"], rows))
    if args.eigenfunctions:
        z = modes[0].z if modes else np.empty(0)
        header = ["Z"] + [f"phi_{m.branch_index}" for m in modes]
        cols = [m.eigenfunction for m in modes]
        sio.write_csv(args.eigenfunctions, header,
                      [(zz, *(c[i] for c in cols)) for i, zz in enumerate(z)])
    return 0


def cmd_dispersion(args):
    profile = parse_profile_spec(args.profile)
    xi = parse_grid(args.xi, "xi")
    disc = None
    if args.n is not None or args.z_min is not None:
        disc = _discretization(args, profile, xi.max())
    branches = trace_branches(profile, xi, disc, workers=args.workers)
    rows = []
    for b in branches:
        for k in range(b.xi_grid.size):
            rows.append((b.branch_index, b.xi_grid[k], b.lam[k], b.omega[k],
                         b.phase_speed[k], b.group_speed[k]))
    _emit(args.out, sio.csv_text(["j", "xi", "lambda", "omega", "phase_speed", "group_speed"], rows))
    if args.speed_report:
        sio.write_json(args.speed_report, speed_bound_check(branches, profile).to_dict())
    return 0


def cmd_count(args):
    profile = parse_profile_spec(args.profile)
    xi = parse_grid(args.xi, "xi")
    E = parse_grid(args.E, "E")
    data = counting_grid(profile, xi, E, workers=args.workers)
    _emit(args.out, sio.csv_text(["xi", "E", "count"], sio.counting_rows(data)))
    return 0


def cmd_invert(args):
    if (args.counting is None) == (args.profile is None):
        raise InputError("give exactly one of --counting or --profile", field="counting")
    options = dict(fit_fraction=args.fit_fraction, window=args.window, degree=args.degree,
                   depth_points=args.depth_points)
    if args.counting is not None:
        data = sio.read_counting_csv(args.counting)
        config = ReconstructionConfig(data.E_grid, args.n0, args.ninf, **options)
        V = np.array([e.value for e in estimate_v_curve(data, config)])
    else:
        if args.E is None:
            raise InputError("--profile needs --E", field="E")
        profile = parse_profile_spec(args.profile)
        E = parse_grid(args.E, "E")
        config = ReconstructionConfig(E, args.n0, args.ninf, **options)
        V = action_curve(profile, E)
    reference = parse_profile_spec(args.reference) if args.reference else None
    result = recover_profile(V, config, reference=reference)
    # counting law count ~ (xi V / pi)^weyl_exponent and the constant in front of d^3/dE^3
    _emit(args.out, sio.json_text(result.to_dict(), weyl_exponent=1,
                                  inversion_constant=config.inversion_constant))
    return 0


def cmd_wkb(args):
    profile = parse_profile_spec(args.profile)
    regularity = ASSUMPTION_A if args.depth_coefficients else ASSUMPTION_B
    coeffs = tuple(parse_grid(args.depth_coefficients, "depth-coefficients")) \
        if args.depth_coefficients else ()
    if args.amplitude == 0:
        medium = LateralMedium.uniform(profile, regularity, coeffs)
    else:
        medium = LateralMedium.modulated(profile, args.amplitude, args.wavenumber,
                                         regularity, coeffs)
    period = 2 * math.pi / args.wavenumber
    grid = PlaneGrid.for_medium(medium, args.xi, n_x=args.nx, period=period)
    eps = parse_grid(args.eps, "eps")
    report = residual_decay(medium, 0.0, args.xi, epsilons=eps, grid=grid, branch=args.branch,
                            window=args.window, workers=args.workers)
    payload = report.to_dict()
    _emit(args.out, sio.json_text(payload))
    if args.dump_field:
        if grid.n_x * grid.n_points > 200_000:
            raise InputError("field dump is limited to small grids", field="dump-field")
        cols, _ = expansion_columns(medium, grid, args.xi, args.branch)
        e = float(eps.min())
        rows = []
        for j, x in enumerate(grid.x):
            carrier = np.exp(1j * args.xi * x / e)
            psi = carrier * (cols.phi0[j] + e * cols.phi1[j])
            for i, Z in enumerate(grid.Z):
                rows.append((x, e * Z, psi[i].real, psi[i].imag))
        sio.write_csv(args.dump_field, ["x", "z", "re_psi", "im_psi"], rows)
    return 0


# -- parser ------------------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="stratwave", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--out", default=None, help="output file (default: stdout)")
        return p

    def disc_flags(p):
        p.add_argument("--n", type=int, default=None, help="interior grid points")
        p.add_argument("--z-min", type=float, default=None, help="bottom of the depth grid")
        p.add_argument("--bc", choices=["exact-decay", "dirichlet"], default="exact-decay")

    def workers(p):
        p.add_argument("--workers", type=int, default=None,
                       help="thread count (default: $STRATWAVE_WORKERS or 1)")

    p = add("validate", cmd_validate, "check a profile against the standing assumptions")
    p.add_argument("--profile", required=True)

    p = add("solve", cmd_solve, "surface-wave modes at one wavenumber")
    p.add_argument("--profile", required=True)
    p.add_argument("--xi", type=float, required=True)
    p.add_argument("--eigenfunctions", default=None, help="eigenfunction CSV path")
    disc_flags(p)

    p = add("dispersion", cmd_dispersion, "dispersion branches over a wavenumber grid")
    p.add_argument("--profile", required=True)
    p.add_argument("--xi", required=True, help="start:stop:count or comma list")
    p.add_argument("--speed-report", default=None, help="speed-ordering JSON path")
    disc_flags(p)
    workers(p)

    p = add("count", cmd_count, "counting function on a (xi, E) grid")
    p.add_argument("--profile", required=True)
    p.add_argument("--xi", required=True)
    p.add_argument("--E", required=True)
    workers(p)

    p = add("invert", cmd_invert, "recover N(Z) from counting data or exact V(E)")
    p.add_argument("--counting", default=None, help="long-form counting CSV")
    p.add_argument("--profile", default=None, help="profile for exact V(E)")
    p.add_argument("--E", default=None, help="E grid when using --profile")
    p.add_argument("--n0", type=float, required=True)
    p.add_argument("--ninf", type=float, default=None)
    p.add_argument("--reference", default=None, help="profile to score against")
    p.add_argument("--fit-fraction", type=float, default=1.0 / 3.0)
    p.add_argument("--window", type=int, default=9)
    p.add_argument("--degree", type=int, default=4)
    p.add_argument("--depth-points", type=int, default=201)

    p = add("wkb-residual", cmd_wkb, "residual decay of the first-order ansatz")
    p.add_argument("--profile", required=True)
    p.add_argument("--xi", type=float, required=True)
    p.add_argument("--branch", type=int, default=1)
    p.add_argument("--amplitude", type=float, default=0.1, help="lateral modulation (0: none)")
    p.add_argument("--wavenumber", type=float, default=1.0)
    p.add_argument("--depth-coefficients", default=None, help="c_1,c_2,... of 1 + c_1 z + ...")
    p.add_argument("--nx", type=int, default=128)
    p.add_argument("--eps", default="0.03125,0.015625,0.0078125")
    p.add_argument("--window", action="store_true", help="plateau window around x = 0")
    p.add_argument("--dump-field", default=None, help="CSV of the first-order field")
    workers(p)
    return parser


def run(argv=None):
    """Run one subcommand; returns the exit code."""
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "func", None) is None:
            raise InputError("missing subcommand", field="command")
        return args.func(args)
    except (InputError, ValueError) as exc:
        _report(exc)
        return 1
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        _report(exc)
        return 2
    except OSError as exc:
        _report(exc, field=getattr(exc, "filename", None))
        return 1


def _report(exc, field=None):
    if isinstance(exc, StratwaveError):
        record = exc.to_record()
    else:
        record = {"error": type(exc).__name__, "message": str(exc)}
        if field is not None:
            record["field"] = str(field)
    sys.stderr.write(json.dumps(record) + "\n")


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
