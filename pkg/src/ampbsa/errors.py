"""Exception hierarchy shared by all analysis modules."""


class AmpbsaError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(AmpbsaError, ValueError):
    """A physical or numerical parameter violates its admissible range."""


class CTLViolationError(ParameterError):
    """The channel lies on or beyond the classical teleportation limit."""

    def __init__(self, eta: float, delta: float):
        self.eta = eta
        self.delta = delta
        super().__init__(
            f"delta >= 2*eta: beyond classical teleportation limit "
            f"(eta={eta!r}, delta={delta!r})"
        )


class DomainError(ParameterError):
    """An evaluation point lies outside the validity domain of a formula."""


class ConvergenceError(AmpbsaError, ArithmeticError):
    """A numerical routine failed to reach the requested tolerance."""


class EmptyAcceptanceError(AmpbsaError):
    """A postselection window accepted no simulated rounds."""
