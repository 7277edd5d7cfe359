"""
Domain models for run configuration and certified reports.
"""

from __future__ import annotations

import json
from enum import Enum
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from nonunique.config import GRID_MAX, GRID_MIN, OUTPUT_DIR, THREADS
from nonunique.core.flux import FLUX_LABELS


class Command(str, Enum):
    """Pipelines reachable from the command line."""
    VERIFY_TN = "verify-tn"        # Validate a T_N-configuration file
    TARTAR_DEMO = "tartar-demo"    # Four-corner fixture without rank-one connections
    HULLS = "hulls"                # Lamination hull of a point cloud
    SEARCH_TAU = "search-tau"      # Equal-flux pair, tau_2 solve and rank-one search
    OSCILLATE = "oscillate"        # Single oscillation block on the unit cube
    STAIRCASE = "staircase"        # Nested staircase on a lifted double well
    REFINE = "refine"              # One refinement step of the demo subsolution
    DEMO_PM1D = "demo-pm1d"        # Refinement along an eps schedule


class CertificateStatus(str, Enum):
    """Verdict of a single certificate."""
    PASS = "pass"
    NEAR_MISS = "near_miss"  # Misses only by the grid slack
    FAIL = "fail"


class Certificate(BaseModel):
    """A named bound with its target and the achieved value."""
    name: str
    target: float
    achieved: float
    status: CertificateStatus
    detail: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.status == CertificateStatus.PASS

    @classmethod
    def upper(
        cls,
        name: str,
        achieved: float,
        target: float,
        slack: float = 0.0,
        detail: Optional[str] = None,
    ) -> "Certificate":
        """Certificate for achieved <= target, near miss within slack."""
        status = _classify(target - achieved, slack)
        return cls(name=name, target=target, achieved=achieved, status=status, detail=detail)

    @classmethod
    def lower(
        cls,
        name: str,
        achieved: float,
        target: float,
        slack: float = 0.0,
        detail: Optional[str] = None,
    ) -> "Certificate":
        """Certificate for achieved >= target, near miss within slack."""
        status = _classify(achieved - target, slack)
        return cls(name=name, target=target, achieved=achieved, status=status, detail=detail)


def _classify(margin: float, slack: float) -> CertificateStatus:
    if margin >= 0.0:
        return CertificateStatus.PASS
    if margin >= -slack:
        return CertificateStatus.NEAR_MISS
    return CertificateStatus.FAIL


def all_passed(certificates: list[Certificate]) -> bool:
    return all(c.passed for c in certificates)


class RunConfig(BaseModel):
    """
    Validated configuration of one command-line run.

    Attributes:
        command: Pipeline to run.
        flux: Flux catalog label.
        flux_matrix: Coefficient matrix for the linear flux.
        grid: Nodes per axis.
        eps: Strictly decreasing tolerances in (0, 1).
        rho: Strictly decreasing proximity budgets.
        seed: Random seed for sampling.
        out: Output directory.
        threads: Worker cap for parallel sections.
        csv: Dump fields as CSV instead of WCIF blocks.
        config_path: JSON file the configuration was read from.
        extra: Command-specific options from the config file.
    """

    model_config = ConfigDict(use_enum_values=False)

    command: Command
    flux: str = "perona-malik"
    flux_matrix: Optional[list[list[float]]] = None
    grid: int = 256
    eps: list[float] = Field(default_factory=lambda: [0.1])
    rho: list[float] = Field(default_factory=lambda: [0.05])
    seed: int = 0
    out: str = OUTPUT_DIR
    threads: int = THREADS
    csv: bool = False
    config_path: Optional[str] = None
    extra: dict[str, Any] = Field(default_factory=dict)

    @field_validator("flux")
    @classmethod
    def _known_flux(cls, value: str) -> str:
        if value not in FLUX_LABELS:
            raise ValueError(f"unknown flux '{value}', expected one of {list(FLUX_LABELS)}")
        return value

    @field_validator("grid")
    @classmethod
    def _power_of_two(cls, value: int) -> int:
        if value < GRID_MIN or value > GRID_MAX or value & (value - 1):
            raise ValueError(
                f"grid must be a power of two in [{GRID_MIN}, {GRID_MAX}], got {value}"
            )
        return value

    @field_validator("eps")
    @classmethod
    def _eps_schedule(cls, value: list[float]) -> list[float]:
        if not value:
            raise ValueError("eps schedule must not be empty")
        if any(not 0.0 < e < 1.0 for e in value):
            raise ValueError(f"eps values must lie in (0, 1), got {value}")
        if any(b >= a for a, b in zip(value, value[1:])):
            raise ValueError(f"eps schedule must be strictly decreasing, got {value}")
        return value

    @field_validator("rho")
    @classmethod
    def _rho_schedule(cls, value: list[float]) -> list[float]:
        if not value or any(r <= 0.0 for r in value):
            raise ValueError(f"rho values must be positive, got {value}")
        if any(b >= a for a, b in zip(value, value[1:])):
            raise ValueError(f"rho schedule must be strictly decreasing, got {value}")
        return value

    @field_validator("threads")
    @classmethod
    def _threads(cls, value: int) -> int:
        if value < 1:
            raise ValueError(f"threads must be at least 1, got {value}")
        return value

    @model_validator(mode="after")
    def _linear_needs_matrix(self) -> "RunConfig":
        if self.flux == "linear" and self.flux_matrix is None:
            raise ValueError("flux 'linear' needs flux_matrix")
        return self

    @classmethod
    def from_sources(cls, flags: dict[str, Any], config_path: Optional[str] = None) -> "RunConfig":
        """Merge a JSON config file under explicit flags; flags win."""
        doc: dict[str, Any] = {}
        if config_path:
            doc = json.loads(Path(config_path).read_text())
        known = set(cls.model_fields)
        merged = {k: v for k, v in doc.items() if k in known}
        extra = {k: v for k, v in doc.items() if k not in known}
        merged.update({k: v for k, v in flags.items() if v is not None})
        merged.setdefault("extra", {}).update(extra)
        merged["config_path"] = config_path
        return cls(**merged)
