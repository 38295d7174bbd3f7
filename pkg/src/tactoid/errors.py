"""Exception types shared across the package."""


class TactoidError(Exception):
    """Base class for all package errors."""


class MalformedCurveError(TactoidError, ValueError):
    pass


class DomainError(TactoidError, ValueError):
    """A parameter is outside the range an operation accepts."""


class VerticalTangentError(TactoidError, ValueError):
    pass


class DegenerateDomainError(TactoidError, ValueError):
    """The droplet is too thin for the requested grid."""


class SolverFailure(TactoidError, RuntimeError):
    """Linear solve did not reach its tolerance within the iteration cap."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations
