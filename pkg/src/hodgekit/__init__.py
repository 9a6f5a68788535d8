"""hodgekit: finite-dimensional linear algebra of tt*-geometry.

Polarized mixed Hodge structures and nilpotent-orbit tests, regular
singular lattices of elementary sections with their pairing invariants,
the pointwise Hodge <-> CV dictionary, and symbolic verification of the
tt*/Frobenius equation systems.
"""

from .scalars import ExactField, FloatField
from .core import FlatModel, Subspace, Filtration, InputError, ModelError
from .report import Report

__all__ = [
    "ExactField",
    "FloatField",
    "FlatModel",
    "Subspace",
    "Filtration",
    "Report",
    "InputError",
    "ModelError",
]

__version__ = "0.1.0"
