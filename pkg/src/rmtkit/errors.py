"""Exception hierarchy shared by all modules."""

from __future__ import annotations

__all__ = [
    "RMTError",
    "InvalidMeasure",
    "MeasureTooLarge",
    "InvalidGrid",
    "InversionFailed",
    "DegenerateMeasure",
    "NonConvergence",
    "AmbiguousFixedPoint",
    "EvaluationPole",
    "InvalidScenario",
    "SpectralEdge",
    "InvalidDimensions",
    "NotHermitian",
    "UnsupportedFactorSign",
    "SingularCorrelation",
    "UnsupportedDiagnostic",
]


class RMTError(Exception):
    """Base class for every error raised by rmtkit."""


class InvalidMeasure(RMTError, ValueError):
    pass


class MeasureTooLarge(RMTError, ValueError):
    pass


class InvalidGrid(RMTError, ValueError):
    pass


class InversionFailed(RMTError):
    pass


class DegenerateMeasure(RMTError, ValueError):
    """A factor or channel law has all of its mass at zero."""


class NonConvergence(RMTError):
    """Iteration budget exhausted, or no admissible step could be found.

    ``index`` is set when the failure happened at one point of a grid or sweep.
    """

    def __init__(self, message: str, *, index: int | None = None,
                 residual: float | None = None, iterations: int | None = None):
        super().__init__(message)
        self.index = index
        self.residual = residual
        self.iterations = iterations


class AmbiguousFixedPoint(RMTError):
    pass


class EvaluationPole(RMTError, ZeroDivisionError):
    pass


class InvalidScenario(RMTError, ValueError):
    pass


class SpectralEdge(RMTError):
    pass


class InvalidDimensions(RMTError, ValueError):
    pass


class NotHermitian(RMTError, ValueError):
    pass


class UnsupportedFactorSign(RMTError, ValueError):
    pass


class SingularCorrelation(RMTError):
    pass


class UnsupportedDiagnostic(RMTError, ValueError):
    pass
