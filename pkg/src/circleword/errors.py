"""Exception hierarchy for the circleword package."""


class CirclewordError(Exception):
    """Base class for all package errors."""


class ConstructionError(CirclewordError):
    """A primitive map or field could not be built with the given parameters."""


class InvalidDiffeoError(ConstructionError):
    """A map failed validation (non-positive derivative at some probe)."""


class NumericalError(CirclewordError):
    """An iterative numerical procedure failed to converge."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class SearchExhaustedError(CirclewordError):
    """An integer search hit its cap without finding a solution."""


class PreconditionError(CirclewordError):
    """An operation's documented precondition was violated."""


class VerificationError(CirclewordError):
    """A built object failed its post-construction identity check."""

    def __init__(self, message, residual=None, location=None):
        super().__init__(message)
        self.residual = residual
        self.location = location


class NotDiophantineError(CirclewordError):
    """Rotation number fails the continued-fraction quality cap."""


class GateError(CirclewordError):
    """Input map is too far from the identity for the solver pipeline."""


class MarginError(CirclewordError):
    """A support landed outside its allowed (margin-enlarged) interval."""

    def __init__(self, message, overshoot=None):
        super().__init__(message)
        self.overshoot = overshoot


class ScanRangeError(CirclewordError):
    """The t-scan did not contain a usable rotation-number target."""


class ResourceError(CirclewordError):
    """A search exceeded its memory / frontier budget."""

    def __init__(self, message, radius_reached=None):
        super().__init__(message)
        self.radius_reached = radius_reached
