"""Exception types shared across the package."""


class CollapseSimError(Exception):
    """Base class."""


class DomainError(CollapseSimError, ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigurationError(CollapseSimError, ValueError):
    """A configuration value violates an invariant."""


class NumericalError(CollapseSimError, ArithmeticError):
    """A quadrature or root search failed to reach its tolerance."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InfeasiblePlan(CollapseSimError):
    """No finite trial count reaches the requested significance."""
