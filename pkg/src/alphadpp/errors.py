"""Exception and warning types shared across the package."""


class DPPError(Exception):
    """Base class for all sampler errors."""


class KappaBoundViolated(DPPError):
    """A kernel entry exceeded the declared bound on |L_ij|."""


class NumericalFailure(DPPError):
    """A factorization or probability computation broke down."""


class NotPSD(NumericalFailure):
    """Matrix has eigenvalues below the PSD tolerance."""


class EmptyDictionary(DPPError):
    """A dictionary with no items was produced or supplied."""


class InfeasibleSize(DPPError):
    """Requested subset size cannot be reached (k above the rank)."""


class Unsupported(DPPError):
    """Operation refused for this input size or configuration."""


class ConfigError(DPPError):
    """Invalid sampler configuration."""


class BudgetExhausted(DPPError):
    """A retry/rejection budget ran out before success.

    ``trace`` carries whatever statistics were collected up to that point.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class AccuracyWarning(UserWarning):
    """A quantity that is bounded in exact arithmetic overshot its bound."""


class LowConfidenceWarning(UserWarning):
    """A search loop ran out of steps and fell back to a safe default."""
