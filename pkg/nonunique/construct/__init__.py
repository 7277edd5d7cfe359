"""
Grid fields, the elementary oscillation and the nested staircase.
"""

from nonunique.construct.grid import CubeCover, DyadicCube, GridField, GridSpec, dyadic_cover, erode
from nonunique.construct.oscillation import (
    AdmissibleDirection,
    CutoffJet,
    OscillationProfile,
    OscillationReport,
    OscillationResult,
    build_oscillation,
    cube_cutoff,
    oscillation_gradient,
    oscillation_profile,
    potential_field,
    region_cutoff,
)
from nonunique.construct.staircase import (
    CoverMode,
    StaircaseReport,
    StaircaseResult,
    StaircaseSchedule,
    build_staircase,
    staircase_schedule,
)

__all__ = [
    "AdmissibleDirection",
    "CoverMode",
    "CutoffJet",
    "CubeCover",
    "DyadicCube",
    "GridField",
    "GridSpec",
    "OscillationProfile",
    "OscillationReport",
    "OscillationResult",
    "StaircaseReport",
    "StaircaseResult",
    "StaircaseSchedule",
    "build_oscillation",
    "build_staircase",
    "cube_cutoff",
    "dyadic_cover",
    "erode",
    "oscillation_gradient",
    "oscillation_profile",
    "potential_field",
    "region_cutoff",
    "staircase_schedule",
]
