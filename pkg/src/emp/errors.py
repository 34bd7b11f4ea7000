"""Exception types shared across the package."""


class EmpError(Exception):
    """Base class for all errors raised by this package."""


class ZeroScoreVector(EmpError, ValueError):
    """Every score entry is zero, so no normalization exists.

    ``group`` identifies the offending partition group when the error comes
    out of a partitioned decision.
    """

    def __init__(self, message: str = "all score entries are zero", group: int | None = None):
        if group is not None:
            message = f"{message} (partition group {group})"
        super().__init__(message)
        self.group = group


class NonFiniteScore(EmpError, ValueError):
    """A score entry is NaN or infinite."""


class NonPositiveBeta(EmpError, ValueError):
    """The scale coefficient must be a finite positive real."""


class LengthMismatch(EmpError, ValueError):
    """Two sequences that must align have different lengths."""


class IndexOutOfRange(EmpError, IndexError):
    """A keep-count or index lies outside [1, N]."""


class DomainError(EmpError, ValueError):
    """Arguments lie outside the mathematical domain of a formula."""


class MissingDeltaTheta(EmpError, ValueError):
    """The squared parameter displacement is required but absent."""


class NotOnHyperplane(EmpError, ValueError):
    """Point coordinates do not sum to 1 within tolerance."""


class InfeasibleRegion(EmpError, RuntimeError):
    """No sampled point landed in the requested level set within budget."""


class DimensionMismatch(EmpError, ValueError):
    """Images or arrays with incompatible shapes were combined."""


class DivergenceDetected(EmpError, RuntimeError):
    """Training loss became non-finite."""


class NonFiniteEstimate(EmpError, RuntimeError):
    """A stochastic estimator produced NaN or infinity."""
