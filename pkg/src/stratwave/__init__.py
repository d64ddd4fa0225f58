"""Surface waves in stratified media: transverse spectra, dispersion,
eigenvalue-asymptotic profile recovery and first-order WKB checks."""

__version__ = "0.1.0"

from .errors import (AboveContinuumError, AssumptionViolation, ConvergenceError, InputError,
                     NumericalError, ReconstructionFailed, StratwaveError)
from .profiles import (LateralMedium, VerticalProfile, load_profile, make_constant_profile,
                       make_sampled_profile, make_smooth_profile, make_step_profile,
                       parse_profile_spec, validate)
from .sturm import Discretization, ModePair, count_below, solve_modes, step_oracle

__all__ = [
    "AboveContinuumError", "AssumptionViolation", "ConvergenceError", "Discretization",
    "InputError", "LateralMedium", "ModePair", "NumericalError", "ReconstructionFailed",
    "StratwaveError", "VerticalProfile", "count_below", "load_profile", "make_constant_profile",
    "make_sampled_profile", "make_smooth_profile", "make_step_profile", "parse_profile_spec",
    "solve_modes", "step_oracle", "validate",
]
