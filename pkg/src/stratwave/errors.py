"""Exception hierarchy.

Input problems derive from :class:`ValueError`, numerical failures from
:class:`RuntimeError`; the CLI maps the two families onto exit codes 1 and 2.
"""


class StratwaveError(Exception):
    """Base class for all package errors."""

    field = None

    def to_record(self):
        record = {"error": type(self).__name__, "message": str(self)}
        if self.field is not None:
            record["field"] = self.field
        return record


class InputError(StratwaveError, ValueError):
    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class AssumptionViolation(InputError):
    """A medium breaks one of the standing assumptions on N."""

    def __init__(self, message, assumption, field=None):
        super().__init__(message, field=field)
        self.assumption = assumption


class ProfileFormatError(InputError):
    pass


class DiscretizationError(InputError):
    pass


class AboveContinuumError(InputError):
    pass


class NumericalError(StratwaveError, RuntimeError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class ReconstructionFailed(NumericalError):
    pass
