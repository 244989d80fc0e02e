"""
Exception hierarchy for octool
"""

from typing import Optional, Sequence, Tuple


class OctoolError(Exception):
    """Base class of every error raised by octool"""


class ConfigurationError(OctoolError, ValueError):
    """Invalid problem file, flag, or declaration"""


class ExprSyntaxError(ConfigurationError):
    """Expression source that does not parse"""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ConfigurationError):
    """Expression referencing a name outside the declared dimensions"""

    def __init__(self, name: str, offset: int, suggestion: Optional[str] = None):
        message = f"Unknown identifier '{name}' at offset {offset}"
        if suggestion:
            message += f" (did you mean '{suggestion}'?)"
        super().__init__(message)
        self.name = name
        self.offset = offset
        self.suggestion = suggestion


class DomainError(OctoolError, ValueError):
    """Argument outside the domain of an operation"""


class NumericError(OctoolError):
    """Numerical procedure that failed to deliver a result"""

    def __init__(self, message: str, segment: Optional[Tuple[float, float]] = None):
        if segment is not None:
            message = f"{message} (segment [{segment[0]:.6g}, {segment[1]:.6g}])"
        super().__init__(message)
        self.segment = segment


class EvaluationError(NumericError):
    """Domain fault while evaluating an expression"""

    def __init__(self, message: str, span: Tuple[int, int]):
        super().__init__(f"{message} in subexpression [{span[0]}:{span[1]}]")
        self.span = span


class CallbackError(NumericError):
    """A problem callback raised or returned garbage"""

    def __init__(self, message: str, location: Optional[float] = None):
        if location is not None:
            message = f"{message} at t={location:.6g}"
        super().__init__(message)
        self.location = location


class IntegrationError(NumericError):
    """Integrator failure or exit from the state guard"""

    def __init__(self, message: str, escape_time: Optional[float] = None):
        if escape_time is not None:
            message = f"{message} (escape time t={escape_time:.6g})"
        super().__init__(message)
        self.escape_time = escape_time


class NoConvergenceError(NumericError):
    """Newton iteration that did not converge"""

    def __init__(self, message: str, history: Sequence[float] = ()):
        super().__init__(message)
        self.history = list(history)


class LIViolatedError(OctoolError):
    """Terminal-gradient family composed with the control Jacobian is not linearly free"""

    def __init__(self, message: str, singular_values: Sequence[float] = ()):
        super().__init__(message)
        self.singular_values = list(singular_values)


class SignConditionError(OctoolError):
    """Inequality multiplier with the wrong sign"""

    def __init__(self, message: str, values: Sequence[float] = ()):
        super().__init__(message)
        self.values = list(values)


class UnsupportedProblemError(OctoolError):
    """Problem outside the class an operation handles"""
