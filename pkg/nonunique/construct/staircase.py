"""
The nested staircase: from an admissible T_N-configuration and Y on its segment set, build
omega with Y + grad omega on the corners {X_i} up to a set of small measure.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel
from scipy.optimize import brentq

from nonunique.config import (
    DEFAULT_GROWTH,
    MEASURE_SLACK,
    MIN_PERIOD_NODES,
    MIN_RESOLUTION,
    NEST_LAYERS,
    THREADS,
)
from nonunique.construct.grid import GridField, GridSpec, boundary_layer_mask, dyadic_cover, erode
from nonunique.construct.oscillation import (
    AdmissibleDirection,
    build_oscillation,
    gradient_lipschitz,
)
from nonunique.core.blocks import BlockMatrix, block_to_dense
from nonunique.errors import DimensionError, PreconditionError
from nonunique.geometry.tn_config import (
    TNConfig,
    admissible_check,
    convex_coeffs,
    locate_on_segments,
)
from nonunique.schema import Certificate, all_passed

logger = logging.getLogger(__name__)

# Minimum width in nodes of the first minus band
NEST_SPAN = 2.0 * (NEST_LAYERS + 5) / MEASURE_SLACK


class CoverMode(str, Enum):
    """How a nested level oscillates on the current anchor region."""
    REGION = "region"  # One oscillation with a distance-based cutoff
    CUBES = "cubes"    # One oscillation per dyadic cube of the region


class StaircaseSchedule(BaseModel):
    """
    Nesting depth and inner tolerance.

    Attributes:
        eps: Target tolerance.
        k: Number of full rounds beyond the first is k (k + 1 rounds in total).
        eps_prime: Tolerance handed to every oscillation.
        mu: Product of lambda_j = 1 - 1 / kappa_j.
        N: Number of legs.
    """

    eps: float
    k: int
    eps_prime: float
    mu: float
    N: int

    def checks(self) -> dict[str, bool]:
        root = np.sqrt(1.0 - self.eps)
        return {
            "depth": 1.0 - self.mu ** (self.k + 1) >= root,
            "amplitude": (self.k + 1) * (self.N + 1) * self.eps_prime < self.eps,
            "measure": (1.0 - self.eps_prime) ** ((self.k + 2) * self.N) >= root,
        }


def staircase_schedule(kappa: Union[list[float], np.ndarray], eps: float) -> StaircaseSchedule:
    """Smallest depth meeting the mu bound, then the largest eps' meeting both eps' bounds."""
    kappa = np.asarray(kappa, dtype=float).reshape(-1)
    if kappa.size < 2 or np.any(kappa <= 1.0):
        raise PreconditionError(f"need at least two factors greater than one, got {kappa.tolist()}")
    if not 0.0 < eps < 1.0:
        raise PreconditionError(f"eps must lie in (0, 1), got {eps}")
    N = int(kappa.size)
    mu = float(np.prod(1.0 - 1.0 / kappa))
    root = float(np.sqrt(1.0 - eps))
    k = 0
    while 1.0 - mu ** (k + 1) < root:
        k += 1
    amplitude_bound = eps / ((k + 1) * (N + 1))
    power = (k + 2) * N
    measure_bound = brentq(lambda e: (1.0 - e) ** power - root, 0.0, 1.0, xtol=1e-12)
    while (1.0 - measure_bound) ** power < root:
        measure_bound = np.nextafter(measure_bound, 0.0)
    eps_prime = min(measure_bound, amplitude_bound * (1.0 - 1e-12))
    logger.debug("staircase schedule: k=%d eps'=%.6e mu=%.4f", k, eps_prime, mu)
    return StaircaseSchedule(eps=eps, k=k, eps_prime=float(eps_prime), mu=mu, N=N)


class LevelAudit(BaseModel):
    """One nesting level: which segment it split on and what it achieved."""

    level: int
    round: int
    segment: int
    frequency: float
    lam: float
    region_fraction: float
    plus_fraction: float
    minus_fraction: float
    skipped: bool = False
    reason: str = ""


class StaircaseReport(BaseModel):
    eps: float
    k: int
    eps_prime: float
    segment: int
    position: float
    requested_frequency: float
    first_frequency: float
    nu: list[float]
    fractions: list[float]
    sup_omega: float
    max_inclusion_distance: float
    flat_inclusion_distance: float
    inclusion_slack: float
    node_tol: float
    levels: list[LevelAudit]
    certificates: list[Certificate]

    @property
    def passed(self) -> bool:
        return all_passed(self.certificates)


@dataclass
class StaircaseResult:
    field: GridField
    masks: np.ndarray
    schedule: StaircaseSchedule
    report: StaircaseReport
    levels: list[LevelAudit] = field(default_factory=list)

    @property
    def fractions(self) -> list[float]:
        return self.report.fractions


def _step(direction: AdmissibleDirection, grid: GridSpec) -> float:
    """Increase of alpha . x + s t across one node in every direction."""
    h = grid.spacing
    return float(np.sum(np.abs(direction.alpha) * h[: grid.n]) + abs(direction.s) * h[grid.n])


def _period_nodes(direction: AdmissibleDirection, grid: GridSpec, frequency: float) -> float:
    step = _step(direction, grid)
    return (1.0 / frequency) / step if step > 0 else float("inf")


def _first_frequency(
    frequency: float,
    growth: float,
    depth: int,
    steps: list[float],
    first_span: Optional[float],
) -> float:
    """
    Frequency of the first level: frequency / growth^r for the smallest r >= 0 such that the
    level `depth` levels deeper still has MIN_PERIOD_NODES nodes per period and the first minus
    band is NEST_SPAN nodes wide. Never lowered below one period per unit length.

    Args:
        first_span: lam_0 / step of the first level, None without a first level.
    """
    finest = 1.0 / (MIN_PERIOD_NODES * max(steps)) if max(steps) > 0 else float("inf")

    def fits(f: float) -> bool:
        if f * growth**depth > finest:
            return False
        return first_span is None or first_span / f >= NEST_SPAN

    f = float(frequency)
    while f / growth >= 1.0 and not fits(f):
        f /= growth
    if f != frequency:
        logger.info("staircase: first frequency lowered from %g to %g", frequency, f)
    if not fits(f):
        logger.warning(
            "staircase: grid cannot resolve %d nested levels at frequency %g, deep levels skip",
            depth,
            f,
        )
    return f


def _segment_distances(cfg: TNConfig, Z: np.ndarray) -> np.ndarray:
    """Node-wise distance from Z (shape (..., p, q)) to the union of the segments [X_j, P_j]."""
    best = np.full(Z.shape[:-2], np.inf)
    for j in range(cfg.N):
        d = cfg.anchors[j] - cfg.X[j]
        rel = Z - cfg.X[j]
        t = np.clip(np.einsum("...ij,ij->...", rel, d) / float(np.sum(d * d)), 0.0, 1.0)
        dist = np.linalg.norm((rel - t[..., None, None] * d).reshape(Z.shape[:-2] + (-1,)), axis=-1)
        best = np.minimum(best, dist)
    return best


@dataclass
class _Level:
    """One oscillation level summed over its cubes."""

    field: GridField
    gradient: np.ndarray
    band: np.ndarray
    plus: np.ndarray
    minus: np.ndarray


def _oscillate_on_cubes(
    direction: AdmissibleDirection,
    lam: float,
    grid: GridSpec,
    eps: float,
    frequency: float,
    region: np.ndarray,
    m: int,
    workers: int,
) -> _Level:
    cover = dyadic_cover(region, max(grid.shape), budget=eps, min_size=MIN_RESOLUTION)
    out = _Level(
        field=GridField.zeros(grid, m),
        gradient=np.zeros(grid.shape + direction.dense().shape),
        band=np.zeros(grid.shape, dtype=bool),
        plus=np.zeros(grid.shape, dtype=bool),
        minus=np.zeros(grid.shape, dtype=bool),
    )

    def _one(cube):
        return cube, build_oscillation(direction, lam, cube.subgrid(grid), eps, frequency)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for cube, res in pool.map(_one, cover.cubes):
            sl = cube.slices()
            out.field.u[sl] += res.field.u
            out.field.v[sl] += res.field.v
            out.gradient[sl] += res.gradient
            out.band[sl] |= ~res.cutoff.flat
            out.plus[sl] |= res.g_plus
            out.minus[sl] |= res.g_minus
    logger.debug("cube level: %d cubes, uncovered %.4f", len(cover.cubes), cover.uncovered_fraction)
    return out


def _oscillate_on_region(
    direction: AdmissibleDirection,
    lam: float,
    grid: GridSpec,
    eps: float,
    frequency: float,
    region: Optional[np.ndarray] = None,
) -> _Level:
    res = build_oscillation(direction, lam, grid, eps, frequency, region=region)
    return _Level(res.field, res.gradient, ~res.cutoff.flat, res.g_plus, res.g_minus)


def build_staircase(
    cfg: TNConfig,
    Y: Union[np.ndarray, BlockMatrix],
    grid: GridSpec,
    eps: float,
    frequency: float,
    growth: float = DEFAULT_GROWTH,
    mode: CoverMode = CoverMode.REGION,
    tol: float = 1e-9,
    workers: int = THREADS,
    schedule: Optional[StaircaseSchedule] = None,
) -> StaircaseResult:
    """
    Nested oscillations landing Y + grad omega on the corners of cfg.

    The first level splits Y between X_j and P_j. Every later level takes the region where the
    gradient sits at an anchor P_a, writes P_a = (1/kappa) X_{a-1} + (1 - 1/kappa) P_{a-1} and
    splits it again at growth times the previous frequency. The first frequency is lowered
    until the deepest level resolves on the grid; a level that still cannot is skipped with a
    warning and ends the nesting.

    The gradient of omega is the sum of the exact level gradients; masks and the inclusion
    certificates read it at the nodes.

    Raises:
        PreconditionError: cfg is not admissible or Y is off the segment set.
    """
    if cfg.dims is None:
        raise DimensionError("the staircase needs a structured (m + nm) x (n + 1) configuration")
    if not 0.0 < eps < 1.0:
        raise PreconditionError(f"eps must lie in (0, 1), got {eps}")
    if growth <= 1.0:
        raise PreconditionError(f"frequency growth must exceed 1, got {growth}")
    dims = cfg.dims
    if grid.n != dims.n:
        raise DimensionError(f"configuration has n = {dims.n}, grid has n = {grid.n}")
    report = admissible_check(cfg)
    if not report.admissible:
        bad = [leg.index for leg in report.legs if not leg.admissible]
        raise PreconditionError(f"configuration is not admissible (legs {bad})")
    Y = block_to_dense(Y) if isinstance(Y, BlockMatrix) else np.asarray(Y, dtype=float)
    j, t = locate_on_segments(cfg, Y, tol)
    schedule = schedule or staircase_schedule(cfg.kappa, eps)
    eps_prime = schedule.eps_prime
    N = cfg.N
    nu = t * convex_coeffs(cfg, j)
    nu[j] += 1.0 - t
    directions = [
        AdmissibleDirection(leg.p, leg.alpha, leg.s, leg.beta).scaled(float(k))
        for leg, k in zip(report.legs, cfg.kappa)
    ]
    steps = [_step(d, grid) for d in directions]
    has_first = tol < t < 1.0 - tol
    first_span = t / steps[j] if has_first and steps[j] > 0 else None
    freq = _first_frequency(frequency, growth, (schedule.k + 1) * N, steps, first_span)
    first_frequency = freq

    omega = GridField.zeros(grid, dims.m)
    grad = np.zeros(grid.shape + Y.shape)
    band = np.zeros(grid.shape, dtype=bool)
    levels: list[LevelAudit] = []
    total_nodes = float(np.prod(grid.shape))
    anchor: Optional[np.ndarray] = None
    a = j
    if t >= 1.0 - tol:
        anchor = np.ones(grid.shape, dtype=bool)
    elif has_first:
        first = _oscillate_on_region(directions[j], t, grid, eps_prime, freq)
        omega = omega + first.field
        grad += first.gradient
        band |= first.band
        anchor = first.minus
        levels.append(
            LevelAudit(
                level=0,
                round=-1,
                segment=j,
                frequency=freq,
                lam=t,
                region_fraction=1.0,
                plus_fraction=float(first.plus.sum()) / total_nodes,
                minus_fraction=float(first.minus.sum()) / total_nodes,
            )
        )

    level = len(levels)
    stop = anchor is None
    for rnd in range(schedule.k + 1):
        if stop:
            break
        for _ in range(N):
            seg = (a - 1) % N
            lam = 1.0 - 1.0 / float(cfg.kappa[seg])
            freq *= growth
            region = erode(anchor, NEST_LAYERS)
            audit = dict(level=level, round=rnd, segment=seg, frequency=freq, lam=lam)
            region_fraction = float(region.sum()) / total_nodes
            reason = ""
            if not region.any():
                reason = "empty region"
            elif _period_nodes(directions[seg], grid, freq) < MIN_PERIOD_NODES:
                reason = "under-resolved"
                logger.warning(
                    "staircase level %d skipped: period under %d nodes at frequency %g",
                    level,
                    MIN_PERIOD_NODES,
                    freq,
                )
            if reason:
                levels.append(
                    LevelAudit(
                        **audit,
                        region_fraction=region_fraction,
                        plus_fraction=0.0,
                        minus_fraction=0.0,
                        skipped=True,
                        reason=reason,
                    )
                )
                stop = True
                break
            if mode == CoverMode.CUBES:
                part = _oscillate_on_cubes(
                    directions[seg], lam, grid, eps_prime, freq, region, dims.m, workers
                )
            else:
                part = _oscillate_on_region(directions[seg], lam, grid, eps_prime, freq, region)
            omega = omega + part.field
            grad += part.gradient
            band |= part.band
            levels.append(
                LevelAudit(
                    **audit,
                    region_fraction=region_fraction,
                    plus_fraction=float(part.plus.sum()) / total_nodes,
                    minus_fraction=float(part.minus.sum()) / total_nodes,
                )
            )
            anchor = part.minus
            a = seg
            level += 1

    Z = Y + grad
    dist = np.stack(
        [np.linalg.norm((Z - cfg.X[i]).reshape(grid.shape + (-1,)), axis=-1) for i in range(N)]
    )
    leg_sizes = [float(np.linalg.norm(d.dense())) for d in directions]
    node_tol = 0.25 * eps_prime * min(1.0, min(leg_sizes))
    nearest = np.argmin(dist, axis=0)
    masks = np.stack([(nearest == i) & (dist[i] <= node_tol) for i in range(N)])
    if t <= tol:
        masks[:] = False
        masks[j] = True
    fractions = [float(mk.sum()) / total_nodes for mk in masks]

    sup_omega = omega.sup_norm()
    distance = _segment_distances(cfg, Z)
    inclusion = float(np.max(distance))
    flat_inclusion = float(np.max(distance[~band], initial=0.0))
    inclusion_slack = 5.0 * float(grid.spacing.max()) * gradient_lipschitz(grad, grid)
    boundary = boundary_layer_mask(grid.shape, 2)
    support = float(max(np.max(np.abs(omega.u[boundary])), np.max(np.abs(omega.v[boundary]))))
    phi = omega.u
    phi_max = float(np.max(np.abs(phi)))
    slice_sums = np.abs(phi.sum(axis=tuple(range(grid.n)))) * float(np.prod(grid.spacing[: grid.n]))
    slice_rel = float(slice_sums.max()) / (phi_max * grid.volume) if phi_max > 0 else 0.0

    certificates = [
        Certificate.upper("sup_omega", sup_omega, eps),
        Certificate.upper("support", support, 0.0),
        Certificate.upper("slice_mean", slice_rel, 1e-10),
        Certificate.upper("inclusion", inclusion, eps + inclusion_slack),
        Certificate.upper("inclusion_flat", flat_inclusion, eps),
        Certificate.lower("fraction_total", sum(fractions), 1.0 - eps, slack=MEASURE_SLACK),
    ]
    for i in range(N):
        certificates.append(
            Certificate.lower(
                f"fraction_{i}", fractions[i], (1.0 - eps) * float(nu[i]), slack=MEASURE_SLACK
            )
        )
    staircase_report = StaircaseReport(
        eps=eps,
        k=schedule.k,
        eps_prime=eps_prime,
        segment=j,
        position=t,
        requested_frequency=float(frequency),
        first_frequency=first_frequency,
        nu=[float(x) for x in nu],
        fractions=fractions,
        sup_omega=sup_omega,
        max_inclusion_distance=inclusion,
        flat_inclusion_distance=flat_inclusion,
        inclusion_slack=inclusion_slack,
        node_tol=node_tol,
        levels=levels,
        certificates=certificates,
    )
    logger.info(
        "staircase: %d levels from frequency %g, fractions %s, sup %.3e",
        len(levels),
        first_frequency,
        ", ".join(f"{f:.3f}" for f in fractions),
        sup_omega,
    )
    return StaircaseResult(
        field=omega, masks=masks, schedule=schedule, report=staircase_report, levels=levels
    )
