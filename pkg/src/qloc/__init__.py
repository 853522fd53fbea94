"""Locality audits for quantum lattice dynamics: Lieb-Robinson bounds, quasi-local maps and spectral flow."""

from . import (algebra, decay, dynamics, harness, interactions, lattice, models, quasilocal, spectralflow,
               weightfn)
from .audit import AuditRecord
from .errors import (AmbiguousCutError, AuditFailure, CapacityError, ConfigurationError, ConvergenceError,
                     DivergenceError, DomainError, GridError, PreconditionError, QlocError, ValidationError)

__version__ = harness.VERSION

__all__ = [
    "algebra", "decay", "dynamics", "harness", "interactions", "lattice", "models", "quasilocal",
    "spectralflow", "weightfn", "AuditRecord", "AmbiguousCutError", "AuditFailure", "CapacityError",
    "ConfigurationError", "ConvergenceError", "DivergenceError", "DomainError", "GridError",
    "PreconditionError", "QlocError", "ValidationError", "__version__",
]
