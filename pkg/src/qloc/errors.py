"""Exception hierarchy shared by all modules."""


class QlocError(Exception):
    """Base class for package errors."""


class CapacityError(QlocError):
    """A site count or Hilbert-space dimension exceeds the configured cap."""


class DomainError(QlocError, ValueError):
    """An argument lies outside the domain of an operation."""


class PreconditionError(QlocError, ValueError):
    """A documented precondition does not hold."""


class ValidationError(QlocError, ValueError):
    """Input failed a sampled invariant check."""


class DivergenceError(QlocError):
    """A series does not appear to converge."""


class ConvergenceError(QlocError):
    """A numerical scheme missed its tolerance after refinement."""


class AmbiguousCutError(QlocError):
    """A spectral window endpoint sits on an eigenvalue."""


class ConfigurationError(QlocError, ValueError):
    """Missing or inconsistent configuration."""


class GridError(QlocError):
    """A requested time lies off the stored grid."""


class AuditFailure(QlocError, AssertionError):
    """A checked inequality or identity was violated."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record
