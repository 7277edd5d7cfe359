"""
T_N-configurations and lamination hulls.
"""

from nonunique.geometry.hulls import (
    MembershipResult,
    PointCloud,
    RankOneSearchReport,
    convex_membership,
    lamination_hull,
    lamination_step,
    rank_one_connected,
    search_rank_one_in_K,
)
from nonunique.geometry.tn_config import (
    AdmissibleReport,
    TNConfig,
    admissible_check,
    build_tn,
    collinear_legs,
    convex_coeffs,
    dist_to_segments,
    locate_on_segments,
    scale_family,
    shrink,
    tartar_fixture,
    tn_from_json,
    tn_to_json,
)

__all__ = [
    "AdmissibleReport",
    "MembershipResult",
    "PointCloud",
    "RankOneSearchReport",
    "TNConfig",
    "admissible_check",
    "build_tn",
    "collinear_legs",
    "convex_coeffs",
    "convex_membership",
    "dist_to_segments",
    "lamination_hull",
    "lamination_step",
    "locate_on_segments",
    "rank_one_connected",
    "scale_family",
    "search_rank_one_in_K",
    "shrink",
    "tartar_fixture",
    "tn_from_json",
    "tn_to_json",
]
