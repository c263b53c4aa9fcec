"""Exception types shared across the package.

The CLI maps these onto exit codes: ValueError subclasses (bad inputs) exit
with 2, ArithmeticError subclasses (numerical failures) with 3, OSError
with 4.
"""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ValidationError(ValueError):
    """A configuration, partition, or data file violates its schema."""


class ParseError(ValidationError):
    """A malformed record in an input file; carries the 1-based line number."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ConvergenceError(ArithmeticError):
    """An iterative numerical routine exhausted its budget.

    Carries the best available estimate and the error bound at the point of
    failure so callers can decide whether the partial answer is usable.
    """

    def __init__(self, message, estimate=None, error_bound=None):
        super().__init__(message)
        self.estimate = estimate
        self.error_bound = error_bound


class NumericalError(ArithmeticError):
    """A numerical computation produced an unusable result (under/overflow,
    degenerate variance, all-zero weights)."""
