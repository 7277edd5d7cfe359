"""
Block matrix algebra, flux catalog and parabolicity sampling.
"""

from nonunique.core.blocks import (
    BlockMatrix,
    DiagPoint,
    ProblemDims,
    admissible_block,
    block_compose,
    block_from_dense,
    block_to_dense,
    lift_diag,
    numeric_rank,
    project_dense,
    project_diag,
    zero_block,
)
from nonunique.core.flux import (
    FLUX_LABELS,
    ConstraintReport,
    FluxFunction,
    cubic_flux,
    get_flux,
    graph_lift,
    graph_point,
    identity_flux,
    in_constraint_set,
    linear_flux,
    perona_malik_flux,
)
from nonunique.core.sampling import (
    Sampler,
    SamplingReport,
    monotonicity_sample,
    parabolicity_sample,
)

__all__ = [
    "BlockMatrix",
    "ConstraintReport",
    "DiagPoint",
    "FLUX_LABELS",
    "FluxFunction",
    "ProblemDims",
    "Sampler",
    "SamplingReport",
    "admissible_block",
    "block_compose",
    "block_from_dense",
    "block_to_dense",
    "cubic_flux",
    "get_flux",
    "graph_lift",
    "graph_point",
    "identity_flux",
    "in_constraint_set",
    "lift_diag",
    "linear_flux",
    "monotonicity_sample",
    "numeric_rank",
    "parabolicity_sample",
    "perona_malik_flux",
    "project_dense",
    "project_diag",
    "zero_block",
]
