"""Exception hierarchy shared across the package."""


class QchomError(Exception):
    """Base class for all package errors."""


class StructuralError(QchomError, ValueError):
    """A projection matrix is malformed (wrong shape, rank deficient)."""


class SingularModeError(QchomError):
    """A grid mode k != 0 projects to a zero wavevector R^T k."""

    def __init__(self, modes, message=None):
        self.modes = [tuple(int(c) for c in k) for k in modes]
        if message is None:
            shown = ", ".join(str(k) for k in self.modes[:8])
            more = "" if len(self.modes) <= 8 else f" (+{len(self.modes) - 8} more)"
            message = f"R^T k vanishes for nonzero modes: {shown}{more}"
        super().__init__(message)


class SolvabilityError(QchomError, ValueError):
    """Right-hand side is outside the range of the operator."""


class CoercivityError(QchomError, ValueError):
    """Material tensor is not symmetric positive definite everywhere."""


class ConvergenceError(QchomError):
    """Iterative cell solver did not reach its tolerance."""

    def __init__(self, message, residual_history=(), iterations=0):
        super().__init__(message)
        self.residual_history = list(residual_history)
        self.iterations = iterations


class UnresolvedMicroscaleError(QchomError, ValueError):
    """Fine-scale mesh too coarse for the oscillation period."""
