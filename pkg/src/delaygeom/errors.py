"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the requested quantity."""


class UnsupportedCriterion(DomainError):
    """The requested method does not apply to the given coverage criterion."""


class NumericalError(ArithmeticError):
    """A numerical routine failed to reach its accuracy target.

    ``diagnostics`` carries whatever partial state the routine had (partial
    sums, error estimates, iteration counts) so callers can log or inspect it.
    """

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class IntegralDiverges(NumericalError):
    """A semi-infinite integral grows without bound."""


class NumericalInstability(NumericalError):
    """Cancellation destroyed the result (e.g. long alternating binomial sums)."""


class QuadratureCancelled(NumericalError):
    """A quadrature was interrupted through its cancellation token."""
