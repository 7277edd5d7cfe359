"""
Refinement of subsolutions: divergence inversion, rescaling and certified refinement steps.
"""

from nonunique.refine.divergence import (
    DivInverseReport,
    div_inverse,
    div_inverse_report,
    rescale,
    rescale_div,
)
from nonunique.refine.steps import (
    CubeAudit,
    CubeUpdate,
    MultiRefineResult,
    RefineOptions,
    RefineParams,
    RefineReport,
    RefineResult,
    cube_update,
    multi_refine,
    refine_step,
    select_parameters,
    vitali_cover,
    write_checkpoint,
)
from nonunique.refine.subsolution import (
    ModuliReport,
    Subsolution,
    compute_moduli,
    instability_witness,
    make_subsolution,
    measure_div_constant,
    pm1d_demo_provider,
    pm1d_demo_subsolution,
    residual_hminus1_bound,
    residual_l2,
)

__all__ = [
    "CubeAudit",
    "CubeUpdate",
    "DivInverseReport",
    "ModuliReport",
    "MultiRefineResult",
    "RefineOptions",
    "RefineParams",
    "RefineReport",
    "RefineResult",
    "Subsolution",
    "compute_moduli",
    "cube_update",
    "div_inverse",
    "div_inverse_report",
    "instability_witness",
    "make_subsolution",
    "measure_div_constant",
    "multi_refine",
    "pm1d_demo_provider",
    "pm1d_demo_subsolution",
    "refine_step",
    "rescale",
    "rescale_div",
    "residual_hminus1_bound",
    "residual_l2",
    "select_parameters",
    "vitali_cover",
    "write_checkpoint",
]
