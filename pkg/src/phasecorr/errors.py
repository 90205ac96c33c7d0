"""Exception types shared across the package."""


class PhasecorrError(ValueError):
    """Base class for all model errors raised by this package."""


class InvalidModelError(PhasecorrError):
    """A vector/matrix pair does not satisfy the invariants of its type."""


class MarginalMismatchError(PhasecorrError):
    """A coupling, transfer matrix or joint vector violates its marginals."""


class NotCanonicalError(PhasecorrError):
    """An operation that needs a canonical bidiagonal form got something else."""


class InfeasibleTargetError(PhasecorrError):
    """A requested correlation or utilisation target is not attainable."""
