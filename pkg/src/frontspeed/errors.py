"""Exception hierarchy for frontspeed.

Errors split into two families so the CLI can map them onto exit codes:
configuration/input problems (exit 1) and numerical non-convergence (exit 2).
"""


class FrontSpeedError(Exception):
    """Base class for all package errors."""


class InputError(FrontSpeedError, ValueError):
    """Invalid user input or configuration."""


class NumericalError(FrontSpeedError, RuntimeError):
    """A numerical procedure failed to converge or was ill-posed."""


class InvalidField(InputError):
    pass


class InvalidPeriod(InputError):
    pass


class NotMeanZero(InputError):
    pass


class InvalidNonlinearity(InputError):
    pass


class InvalidMatrix(InputError):
    pass


class InvalidCone(InputError):
    pass


class OutsideExistenceRegime(InputError):
    """alpha + beta > pi: the conical speed formula is not established there."""


class SpeedMismatch(InputError):
    pass


class EigenNoConverge(NumericalError):
    pass


class BracketError(NumericalError):
    pass


class ProfileNoConverge(NumericalError):
    def __init__(self, message, profile=None):
        super().__init__(message)
        self.profile = profile


class DomainTooSmall(NumericalError):
    pass


class StepRejected(NumericalError):
    def __init__(self, message, suggested_dt=None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class DomainEscape(NumericalError):
    pass


class ProbeEmpty(NumericalError):
    pass
