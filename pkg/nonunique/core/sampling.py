"""
Sampling checks of strong parabolicity and full monotonicity of a flux.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from nonunique.config import SAMPLE_MARGIN_TOL
from nonunique.core.flux import FluxFunction
from nonunique.errors import PreconditionError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Sampler:
    """Seeded source of random matrices; entries are scale * N(0, 1)."""

    count: int
    seed: int = 0
    scale: float = 2.0

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


@dataclass
class SamplingReport:
    """
    Smallest normalized margin found and a violating witness, if any.

    Attributes:
        condition: "parabolicity" or "monotonicity".
        nu: The constant tested against.
        count: Number of samples evaluated.
        min_margin: Smallest normalized margin minus nu.
        violations: Number of samples with margin below -SAMPLE_MARGIN_TOL.
        witness: Arrays of the worst violating sample, or None.
    """

    condition: str
    nu: float
    count: int
    min_margin: float
    violations: int
    witness: Optional[dict] = field(default=None)

    @property
    def passed(self) -> bool:
        return self.violations == 0


def _summarize(condition: str, nu: float, margins: np.ndarray, samples: dict) -> SamplingReport:
    worst = int(np.argmin(margins))
    bad = margins < -SAMPLE_MARGIN_TOL
    witness = None
    if bad.any():
        witness = {key: value[worst].tolist() for key, value in samples.items()}
        witness["margin"] = float(margins[worst])
        logger.info("%s violated on %d of %d samples", condition, int(bad.sum()), margins.size)
    return SamplingReport(
        condition=condition,
        nu=nu,
        count=int(margins.size),
        min_margin=float(margins[worst]),
        violations=int(bad.sum()),
        witness=witness,
    )


def parabolicity_sample(
    sigma: FluxFunction,
    sampler: Sampler,
    nu: float,
    extra: Optional[list[tuple]] = None,
) -> SamplingReport:
    """
    Evaluate <sigma(A + p (x) alpha) - sigma(A), p (x) alpha> / (|p|^2 |alpha|^2) - nu.

    Args:
        sigma: Flux under test.
        sampler: Sample count, seed and scale.
        nu: Parabolicity constant.
        extra: Optional explicit (A, p, alpha) triples appended to the random samples.
    """
    if sampler.count < 1:
        raise PreconditionError(f"sample count must be at least 1, got {sampler.count}")
    rng = sampler.rng()
    m, n = sigma.m, sigma.n
    A = sampler.scale * rng.standard_normal((sampler.count, m, n))
    p = rng.standard_normal((sampler.count, m))
    alpha = rng.standard_normal((sampler.count, n))
    if extra:
        A = np.concatenate([A, np.array([np.reshape(t[0], (m, n)) for t in extra], dtype=float)])
        p = np.concatenate([p, np.array([np.reshape(t[1], m) for t in extra], dtype=float)])
        alpha = np.concatenate([alpha, np.array([np.reshape(t[2], n) for t in extra], dtype=float)])
    C = p[:, :, None] * alpha[:, None, :]
    gain = np.sum((sigma(A + C) - sigma(A)) * C, axis=(1, 2))
    norms = np.sum(p * p, axis=1) * np.sum(alpha * alpha, axis=1)
    margins = gain / norms - nu
    return _summarize("parabolicity", nu, margins, {"A": A, "p": p, "alpha": alpha})


def monotonicity_sample(
    sigma: FluxFunction,
    sampler: Sampler,
    nu: float,
    extra: Optional[list[tuple]] = None,
) -> SamplingReport:
    """As parabolicity_sample with an unrestricted increment B; extra holds (A, B) pairs."""
    if sampler.count < 1:
        raise PreconditionError(f"sample count must be at least 1, got {sampler.count}")
    rng = sampler.rng()
    m, n = sigma.m, sigma.n
    A = sampler.scale * rng.standard_normal((sampler.count, m, n))
    B = rng.standard_normal((sampler.count, m, n))
    if extra:
        A = np.concatenate([A, np.array([np.reshape(t[0], (m, n)) for t in extra], dtype=float)])
        B = np.concatenate([B, np.array([np.reshape(t[1], (m, n)) for t in extra], dtype=float)])
    gain = np.sum((sigma(A + B) - sigma(A)) * B, axis=(1, 2))
    margins = gain / np.sum(B * B, axis=(1, 2)) - nu
    return _summarize("monotonicity", nu, margins, {"A": A, "B": B})
