"""Exception hierarchy shared by all modules."""


class QMCError(Exception):
    """Base class for library errors."""


class ValidationError(QMCError, ValueError):
    """Invalid input data or violated invariant."""


class ShapeError(ValidationError):
    """Dimension or site mismatch between operands."""


class CapacityError(QMCError):
    """Dense materialization would exceed the configured size guard."""


class ConvergenceError(QMCError, ArithmeticError):
    """An iterative method hit its iteration cap."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NumericalInstabilityError(QMCError, ArithmeticError):
    """Norm drift or similar loss of accuracy beyond tolerance."""


class InvalidCollapseError(ValidationError):
    """Collapse requested onto an outcome with zero probability."""
