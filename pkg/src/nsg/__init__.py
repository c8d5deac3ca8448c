"""Completing partial Cayley tables of finite semigroups.

Exact side: a backtracking enumerator and completer for all semigroups of
cardinality up to 6. Learned side: a denoising autoencoder over probability
cubes, trained with either plain KL reconstruction or the associator loss,
on top of a small reverse-mode autodiff engine.
"""

__version__ = "0.1.0"

from .algebra import (
    CayleyTable,
    PartialTable,
    Permutation,
    ProbabilityCube,
    canonical_form,
    cube_to_table,
    is_associative,
    opposite,
    partial_to_cube,
    relabel,
    table_to_cube,
)
from .enumeration import (
    CompletionQuery,
    EnumerationReport,
    complete_partial,
    enumerate_classes,
    enumerate_tables,
    orbit,
)
from .objective import associator_loss, kl_divergence

__all__ = [
    "CayleyTable",
    "PartialTable",
    "Permutation",
    "ProbabilityCube",
    "CompletionQuery",
    "EnumerationReport",
    "associator_loss",
    "canonical_form",
    "complete_partial",
    "cube_to_table",
    "enumerate_classes",
    "enumerate_tables",
    "is_associative",
    "kl_divergence",
    "opposite",
    "orbit",
    "partial_to_cube",
    "relabel",
    "table_to_cube",
]
