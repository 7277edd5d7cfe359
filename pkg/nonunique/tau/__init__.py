"""
tau_N-configurations: residuals and solver, the scalar open-set machinery and the planar
special families.
"""

from nonunique.tau.planar import (
    DimensionCheck,
    PQKernel,
    SpecialTau,
    dimension_check,
    map_L,
    map_L_inverse,
    solve_pq_kernel,
    special_tau_n2,
)
from nonunique.tau.residual import (
    GaugeOptions,
    SolverOptions,
    TauNConfig,
    TauSolution,
    lift_tau,
    make_tau,
    solve_tau,
    tau_residual,
    tau_residual_parts,
)
from nonunique.tau.scalar import (
    Decomposition,
    EqualFluxPair,
    M1Scalars,
    ScalarSigmaSet,
    SigmaSet,
    decompose_many,
    decompose_sigma_point,
    find_equal_flux_pair,
    m1_delta,
    m1_G,
    scalar_sigma_set,
    scalar_tau2,
)

__all__ = [
    "Decomposition",
    "DimensionCheck",
    "EqualFluxPair",
    "GaugeOptions",
    "M1Scalars",
    "PQKernel",
    "ScalarSigmaSet",
    "SigmaSet",
    "SolverOptions",
    "SpecialTau",
    "TauNConfig",
    "TauSolution",
    "decompose_many",
    "decompose_sigma_point",
    "dimension_check",
    "find_equal_flux_pair",
    "lift_tau",
    "m1_G",
    "m1_delta",
    "make_tau",
    "map_L",
    "map_L_inverse",
    "scalar_sigma_set",
    "scalar_tau2",
    "solve_pq_kernel",
    "solve_tau",
    "special_tau_n2",
    "tau_residual",
    "tau_residual_parts",
]
