"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class UnsupportedError(NotImplementedError):
    """The requested combination has no analytic route in this package."""


class ConvergenceError(RuntimeError):
    """A numerical procedure failed to reach its tolerance."""
