"""Exception types shared across the package."""


class RobustDomainsError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(RobustDomainsError, ValueError):
    """An argument violates a precondition (non-finite, empty, wrong shape...)."""


class ContractViolationError(RobustDomainsError, ValueError):
    """A documented contract between components was broken (e.g. negative losses)."""


class SupportMismatchError(RobustDomainsError, ValueError):
    """A divergence was requested where the support condition p_k > 0 => q_k > 0 fails."""


class ConfigurationError(RobustDomainsError, ValueError):
    """A run configuration is inconsistent or incomplete."""


class UnsupportedModelError(RobustDomainsError, TypeError):
    """The operation is only defined for a restricted class of models."""


class SolverFailureError(RobustDomainsError, RuntimeError):
    """An iterative solver did not reach its tolerance within its budget."""

    def __init__(self, message, marginal_error=None, iterations=None):
        super().__init__(message)
        self.marginal_error = marginal_error
        self.iterations = iterations


class DivergenceError(RobustDomainsError, RuntimeError):
    """Training produced a non-finite or absurdly large quantity."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration
