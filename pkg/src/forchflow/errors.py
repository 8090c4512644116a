"""Exception taxonomy shared across the package."""


class ConfigurationError(ValueError):
    """Invalid model or run configuration (bounds, ordering, step gate)."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class ShapeError(ValueError):
    """Mismatched grids or array shapes."""


class NumericalError(RuntimeError):
    """Numerical failure (NaN, overflow, broken bracket)."""


class NonConvergenceError(NumericalError):
    """An iteration exhausted its budget; carries diagnostics in args."""


class ConsistencyError(NumericalError):
    """An internal identity check failed beyond tolerance."""
