"""Exception hierarchy.

Every error raised by the package derives from :class:`ShilnikovError`, so
callers can catch the whole family at once.  The CLI maps
:class:`UsageError` to exit code 2 and every other subclass to exit code 1.
"""


from __future__ import annotations


class ShilnikovError(Exception):
    """Base class for all package errors."""


class UsageError(ShilnikovError, ValueError):
    """Malformed configuration or invalid user input."""


class ParameterError(UsageError):
    """A numeric parameter is outside its admissible range.

    ``condition`` optionally names the violated admissibility condition.
    """

    def __init__(self, message: str, condition: str | None = None):
        if condition is not None:
            message = f"{condition}: {message}"
        super().__init__(message)
        self.condition = condition


class DomainError(ShilnikovError, ValueError):
    """A point lies outside the domain of the requested operation."""


class ChartCutError(DomainError):
    """Point sits on the excluded antipodal ray of the cylinder chart."""


class NotOnSectionError(DomainError):
    """Point is not on the requested Poincare section."""


class OutOfDomainError(DomainError):
    """Point outside the declared domain of the outer map."""


class DegenerateRadiusError(ShilnikovError, ArithmeticError):
    """Polar radius vanished (or a zero vector was given an angle)."""


class UndersamplingError(ShilnikovError):
    """Consecutive samples of a curve subtend an angle of pi or more."""


class FieldEvaluationError(ShilnikovError):
    """A user supplied vector field raised or returned garbage."""


class SpectrumError(ShilnikovError, ValueError):
    """Matrix spectrum is not of saddle-focus type."""


class IntegrationError(ShilnikovError):
    """ODE integration failed."""


class StiffnessError(IntegrationError):
    """Step size underflow."""


class BlowupError(IntegrationError):
    """State norm exceeded the blowup threshold."""


class InitializationError(IntegrationError):
    """Inconsistent initial data for the polar system."""


class EscapeFailureError(IntegrationError):
    """The trajectory did not reach the exit plane in time."""


class OuterExcursionError(IntegrationError):
    """No return to the entry cylinder inside the search window."""


class HypothesisError(ShilnikovError):
    """A standing hypothesis of the construction is violated.

    ``condition`` names the violated condition, e.g. ``"hypothesis_H"``.
    """

    def __init__(self, condition: str, message: str):
        super().__init__(f"{condition}: {message}")
        self.condition = condition


class CalibrationError(ShilnikovError):
    """Base class for calibration problems."""


class CalibrationFailure(CalibrationError):
    """A calibrated bound was observed to fail (config inconsistent with field)."""


class CalibrationInfeasible(CalibrationError):
    """No admissible constant could be found."""

    def __init__(self, condition: str, message: str):
        super().__init__(f"{condition}: {message}")
        self.condition = condition


class PrecisionInfeasible(CalibrationInfeasible):
    """The level condition cannot be met above the precision floor."""


class GapFailureError(ShilnikovError):
    """The angle gap m2 - m1 is smaller than 4 pi."""


class ResolutionError(ShilnikovError):
    """Crossing structure not resolved along a curve."""

    def __init__(self, message: str, step: int | None = None):
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
        self.step = step


class RefinementInconsistencyError(ShilnikovError):
    """A realized orbit failed re-verification."""

    def __init__(self, message: str, step: int | None = None):
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
        self.step = step
        self.step = step
