"""Exception types shared across the package.

Exit-code mapping used by the CLI: ValidationError family -> 1,
numerical failures (StabilityError, ConvergenceError, ...) -> 2.
"""


class StodynError(Exception):
    """Base class for all package errors."""


class ValidationError(StodynError):
    """Bad user input: parameter out of range, missing field, shape mismatch."""


class ExprSyntaxError(ValidationError):
    """Expression could not be parsed.

    Carries the byte offset of the failure and the set of token kinds that
    would have been accepted there.
    """

    def __init__(self, message, offset, expected=()):
        super().__init__(f"{message} at offset {offset}"
                         + (f" (expected {', '.join(sorted(expected))})" if expected else ""))
        self.offset = offset
        self.expected = frozenset(expected)


class ExprEvalError(StodynError):
    """Checked evaluation failed: unbound variable, division by zero, sqrt of a negative."""


class StabilityError(StodynError):
    """Numerical instability: non-finite values, negative mass beyond tolerance, bad step size."""


class ConvergenceError(StodynError):
    """Iteration failed to reach tolerance; carries the residual history."""

    def __init__(self, message, residual_history=()):
        super().__init__(message)
        self.residual_history = list(residual_history)


class CoverageError(StodynError):
    """An orbit left the region a graph or path covers."""


class HorizonError(StodynError):
    """Equilibrium detection horizon too short: tail trend not established."""


class MeanUndefinedError(ValidationError):
    """Mean requested for a law without a first moment (stable, alpha <= 1)."""
