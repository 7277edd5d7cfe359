"""
One refinement step of a subsolution: parameter selection, dyadic covering of the partition
cells, per-cube staircase corrections and the certificates of the refined subsolution.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel

from nonunique.config import (
    DEFAULT_GROWTH,
    MAX_REDUCTIONS,
    MIN_PERIOD_NODES,
    MIN_RESOLUTION,
    SAFETY,
    THREADS,
)
from nonunique.construct.grid import (
    DyadicCube,
    GridField,
    GridSpec,
    boundary_layer_mask,
    dyadic_cover,
    erode,
)
from nonunique.construct.staircase import CoverMode, build_staircase
from nonunique.core.blocks import DiagPoint, ProblemDims, project_dense
from nonunique.core.flux import FluxFunction
from nonunique.errors import DecompositionError, PreconditionError, RefinementError
from nonunique.geometry.tn_config import locate_on_segments, scale_family, shrink
from nonunique.refine.divergence import div_inverse, div_inverse_report, rescale, rescale_div
from nonunique.refine.subsolution import (
    ModuliReport,
    Subsolution,
    compute_moduli,
    residual_field,
    residual_l2,
)
from nonunique.reports.serialize import mask_runs, to_primitive, write_field_csv
from nonunique.reports.wcif import write_wcif
from nonunique.schema import Certificate, CertificateStatus
from nonunique.tau.residual import TauNConfig, lift_tau
from nonunique.tau.scalar import SigmaSet

logger = logging.getLogger(__name__)


class RefineParams(BaseModel):
    """
    The small numbers of one refinement step.

    Attributes:
        eps: Target L2 residual.
        rho: Proximity budget for ||u~ - u||.
        eps_prime: Tolerance handed to the staircases.
        s: Time scaling of the lifted configurations.
        tau_budget: Largest graph distance allowed for shrunk corners, eps / (8 sqrt|Omega_T|).
        delta_tau: Tube radius.
        l_max: Cube-size cap.
        a: Bound for ||u_t||.
        uncovered_budget: Share of every cell the cover may leave out.
        reductions: Times eps_prime was reduced by SAFETY.
        checks: The re-verified inequalities.
    """

    eps: float
    rho: float
    eps_prime: float
    s: float
    tau_budget: float
    delta_tau: float
    l_max: float
    a: float
    uncovered_budget: float
    reductions: int = 0
    checks: dict[str, bool] = {}


def select_parameters(
    a: float,
    ut_max: float,
    delta_tau: float,
    M: float,
    M_tilde: float,
    div_constant: float,
    eps: float,
    rho: float,
    volume: float,
    l_max: float = 0.25,
) -> RefineParams:
    """
    Solve the parameter inequalities of one step by explicit formulas.

    eps' starts at SAFETY min{1, rho, (a - ||u_t||) / 2, delta_tau / (3 (1 + C_n))} and is reduced
    by SAFETY until (1 + 3M + M~) sqrt(eps') + C_n eps' < eps / (16 sqrt|Omega_T|);
    s = SAFETY min{(a - ||u_t||) / (4M), eps / (32 sqrt|Omega_T| C_n M), delta_tau / (6 C_n M)}.

    Raises:
        PreconditionError: a <= ||u_t|| or a nonpositive input.
    """
    gap = a - ut_max
    if gap <= 0.0:
        raise PreconditionError(f"time-derivative bound a = {a} must exceed ||u_t|| = {ut_max}")
    positives = {
        "delta_tau": delta_tau,
        "M": M,
        "C_n": div_constant,
        "eps": eps,
        "rho": rho,
        "volume": volume,
    }
    for name, value in positives.items():
        if value <= 0.0:
            raise PreconditionError(f"{name} must be positive, got {value}")
    root = math.sqrt(volume)
    target = eps / (16.0 * root)

    def lhs(e: float) -> float:
        return (1.0 + 3.0 * M + M_tilde) * math.sqrt(e) + div_constant * e

    start = SAFETY * min(1.0, rho, gap / 2.0, delta_tau / (3.0 * (1.0 + div_constant)))
    eps_prime = start
    reductions = 0
    while lhs(eps_prime) >= target and reductions < MAX_REDUCTIONS:
        eps_prime *= SAFETY
        reductions += 1
    s = SAFETY * min(
        gap / (4.0 * M),
        eps / (32.0 * root * div_constant * M),
        delta_tau / (6.0 * div_constant * M),
    )
    uncovered = min(0.5, eps * eps / (4.0 * M * M * volume))
    checks = {
        "eps_prime_bounds": eps_prime <= start / SAFETY,
        "eps_prime_residual": lhs(eps_prime) < target,
        "s_time_derivative": 4.0 * M * s < gap,
        "s_residual": 32.0 * root * div_constant * M * s < eps,
        "s_tube": 6.0 * div_constant * M * s < delta_tau,
        "uncovered": M * M * uncovered * volume <= eps * eps / 4.0,
    }
    params = RefineParams(
        eps=eps,
        rho=rho,
        eps_prime=eps_prime,
        s=s,
        tau_budget=eps / (8.0 * root),
        delta_tau=delta_tau,
        l_max=l_max,
        a=a,
        uncovered_budget=uncovered,
        reductions=reductions,
        checks=checks,
    )
    logger.debug("parameters: eps'=%.3e after %d reductions, s=%.3e", eps_prime, reductions, s)
    return params


def vitali_cover(
    mask: np.ndarray, grid: GridSpec, delta: float, l_max: float, min_size: int = 1
) -> list[DyadicCube]:
    """
    Disjoint dyadic cubes inside a node mask with edge at most l_max, covering all but a delta
    share of the mask when min_size allows it.

    Raises:
        PreconditionError: delta outside (0, 1) or l_max below one node.
    """
    if not 0.0 < delta < 1.0:
        raise PreconditionError(f"uncovered budget must lie in (0, 1), got {delta}")
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return []
    nodes = int(math.floor(l_max / float(grid.spacing.max()) + 1e-9))
    if nodes < 1:
        raise PreconditionError(f"l_max = {l_max} is below the grid spacing")
    max_size = 1 << (nodes.bit_length() - 1)
    return dyadic_cover(mask, max_size, budget=delta, min_size=min_size).cubes


class CubeAudit(BaseModel):
    start: list[int]
    size: int
    status: str
    reason: str = ""
    segment: int = -1
    position: float = 0.0
    tau: float = 0.0
    delta_tau: float = 0.0
    frequency: float = 0.0
    modulus: float = 0.0
    div_constant: float = 0.0
    residual_before: float = 0.0
    residual: float = 0.0
    target: float = 0.0
    certificates: list[Certificate] = []


@dataclass
class CubeUpdate:
    """
    Correction of one cube, in cube-local arrays.

    Attributes:
        cube: The node block.
        du: Correction of u, shape (size,)*ndim + (m,).
        dv: Correction of v, shape (size,)*ndim + (m, n).
        audit: Certificates and measured quantities.
    """

    cube: DyadicCube
    du: Optional[np.ndarray]
    dv: Optional[np.ndarray]
    audit: CubeAudit

    @property
    def accepted(self) -> bool:
        return self.audit.status == "accepted"


def _skip(cube: DyadicCube, reason: str, **extra) -> CubeUpdate:
    logger.warning("cube %s skipped: %s", cube.start, reason)
    audit = CubeAudit(
        start=list(cube.start), size=cube.size, status="skipped", reason=reason, **extra
    )
    return CubeUpdate(cube, None, None, audit)


def _frequency(alpha: np.ndarray, s: float, size: int) -> float:
    """Largest first-level frequency with MIN_PERIOD_NODES nodes per period on the unit cube."""
    step = float(np.sum(np.abs(alpha)) + abs(s))
    return max(1.0, size / (MIN_PERIOD_NODES * step))


def _locate_diag(cfg: TauNConfig, point: DiagPoint, tol: float = 1e-7) -> tuple[int, float]:
    """(j, t) with point = (1 - t) X_j + t P_j on the diagonal segments, smallest j first."""
    y = point.vector()
    scale = 1.0 + float(np.linalg.norm(y))
    best = (float("inf"), -1, 0.0)
    for j, (X, P) in enumerate(zip(cfg.corners(), cfg.anchors())):
        x, d = X.vector(), P.vector() - X.vector()
        t = float(np.clip((y - x) @ d / float(d @ d), 0.0, 1.0))
        dist = float(np.linalg.norm(y - x - t * d))
        if dist <= tol * scale:
            return j, t
        best = min(best, (dist, j, t))
    raise PreconditionError(f"point is off the diagonal segment set (distance {best[0]:.3e})")


def cube_update(
    sub: Subsolution,
    cube: DyadicCube,
    provider: SigmaSet,
    params: RefineParams,
    sigma: FluxFunction,
    frequency: Optional[float] = None,
    growth: float = DEFAULT_GROWTH,
    gradient: Optional[np.ndarray] = None,
) -> CubeUpdate:
    """
    Staircase correction of the subsolution on one cube.

    The configuration through the diagonal part of the gradient at the cube centre is lifted,
    scaled by s and shrunk by (1 - tau); the staircase is built on the unit cube and moved into
    the cube: u~ = u + L phi and v~ = v + L psi + R_{ybar,l} phi.

    Raises:
        PreconditionError: the cube straddles two partition cells or the grid is anisotropic.
    """
    grid = sub.grid
    sl = cube.slices()
    labels = np.unique(sub.partition[sl])
    if labels.size != 1:
        raise PreconditionError(f"cube {cube.start} straddles partition cells {labels.tolist()}")
    if not np.allclose(grid.spacing, grid.spacing[0]):
        raise PreconditionError(f"cube updates need equal spacing on all axes, got {grid.spacing}")
    m, n = sub.m, sub.n
    dims = ProblemDims(m, n)
    local = cube.subgrid(grid)
    l = float(local.edges[0])
    ybar = np.asarray(local.origin)
    grad = gradient if gradient is not None else sub.field.gradient()
    centre = tuple(s + cube.size // 2 for s in cube.start)
    Y = grad[centre]
    point = project_dense(Y, dims)
    r_before = residual_field(GridField(local, sub.field.u[sl], sub.field.v[sl]), sigma)
    residual_before = float(np.sqrt(np.sum(r_before**2) * local.cell_volume))
    cube_target = params.eps / (2.0 * math.sqrt(grid.volume)) * math.sqrt(local.volume)

    if not bool(np.all(provider.contains(point.A, point.b))):
        return _skip(cube, "centre gradient outside the Sigma set", residual_before=residual_before)
    try:
        tau_cfg = provider.configure(point)
        lifted = scale_family(lift_tau(tau_cfg), params.s)
        j, t = _locate_diag(tau_cfg, point)
    except (DecompositionError, ValueError) as exc:
        return _skip(cube, f"no configuration: {exc}", residual_before=residual_before)
    if t <= 1e-9:
        return _skip(cube, "centre gradient sits on a corner", residual_before=residual_before)
    Y_seg = (1.0 - t) * lifted.X[j] + t * lifted.anchors[j]

    reach = np.array(
        [k * np.linalg.norm(g.vector()) for k, g in zip(tau_cfg.kappa, tau_cfg.gammas())]
    )
    tau = SAFETY * min(
        t,
        params.tau_budget / float(reach.max()),
        float(np.min(1.0 - 1.0 / tau_cfg.kappa)),
    )
    delta_tau = min(provider.tube_radius, 0.5 * tau * float(reach.min()))
    try:
        shrunk = shrink(lifted, (1.0 - tau) * lifted.kappa)
        locate_on_segments(shrunk, Y_seg, tol=1e-7)
    except ValueError as exc:
        return _skip(cube, f"shrink failed: {exc}", residual_before=residual_before)

    unit = GridSpec.cube(n, cube.size)
    leg = tau_cfg.alpha[j]
    freq = frequency or _frequency(leg, float(tau_cfg.s[j] * params.s), cube.size)
    resolvable = 1.0 / float(np.prod(unit.shape))
    if params.eps_prime < resolvable:
        return _skip(
            cube,
            f"eps' = {params.eps_prime:.3e} is below grid resolution ({resolvable:.3e} per node)",
            residual_before=residual_before,
        )
    try:
        stair = build_staircase(
            shrunk,
            Y_seg,
            unit,
            params.eps_prime,
            freq,
            growth=growth,
            mode=CoverMode.REGION,
            tol=1e-7,
        )
    except ValueError as exc:
        return _skip(cube, f"staircase failed: {exc}", residual_before=residual_before)

    omega = stair.field
    moved = rescale(omega, ybar, l, local)
    corr_v = moved.v + rescale_div(omega.u, unit, ybar, l, local)
    du, dv = moved.u, corr_v
    new_local = GridField(local, sub.field.u[sl] + du, sub.field.v[sl] + dv)

    r_after = residual_field(new_local, sigma)
    residual = float(np.sqrt(np.sum(r_after**2) * local.cell_volume))
    A_loc, b_loc = new_local.Du(), new_local.v_t()
    inner = erode(np.ones(local.shape, dtype=bool), 1)
    on_corners = np.any(stair.masks, axis=0) & inner
    member = provider.contains(A_loc, b_loc)
    outside_corners = int(np.count_nonzero(on_corners & ~member))
    outside_share = float(np.count_nonzero(inner & ~member)) / float(inner.sum())
    boundary = boundary_layer_mask(local.shape, 1)
    support = float(max(np.max(np.abs(du[boundary])), np.max(np.abs(dv[boundary]))))
    A0, b0 = sub.field.Du()[sl], sub.field.v_t()[sl]
    drift = np.sum((A0 - point.A) ** 2, axis=(-2, -1)) + np.sum((b0 - point.b) ** 2, axis=(-2, -1))
    modulus = float(np.sqrt(drift.max()))
    corner_gap = max(
        float(np.linalg.norm(sigma(X_diag.A) - X_diag.b))
        for X_diag in (project_dense(X, dims) for X in shrunk.X)
    )
    ut_max = float(np.max(np.abs(new_local.u_t())))
    div_report = div_inverse_report(omega.u, div_inverse(omega.u, unit), unit)

    certificates = [
        Certificate.upper("support", support, 0.0),
        Certificate.upper("sup_change", float(np.max(np.abs(du))), params.rho),
        Certificate.upper("time_derivative", ut_max, params.a),
        Certificate.upper("corner_distance", corner_gap, params.tau_budget),
        Certificate.upper("sigma_on_corners", float(outside_corners), 0.0),
        Certificate.upper("sigma_outside_share", outside_share, 0.0, slack=params.uncovered_budget),
        Certificate.upper("cube_residual", residual, cube_target),
    ]
    failed = [c.name for c in certificates if c.status == CertificateStatus.FAIL]
    audit = CubeAudit(
        start=list(cube.start),
        size=cube.size,
        status="rejected" if failed else "accepted",
        reason=", ".join(failed),
        segment=j,
        position=t,
        tau=tau,
        delta_tau=delta_tau,
        frequency=freq,
        modulus=modulus,
        div_constant=div_report.time_constant,
        residual_before=residual_before,
        residual=residual,
        target=cube_target,
        certificates=certificates,
    )
    if failed:
        logger.info("cube %s rejected: %s", cube.start, audit.reason)
        return CubeUpdate(cube, None, None, audit)
    return CubeUpdate(cube, du, dv, audit)



class RefineOptions(BaseModel):
    """
    Knobs of a refinement step.

    Attributes:
        a: Bound for ||u_t||; defaults to the current bound plus one.
        l_max: Cube-size cap.
        frequency: First-level staircase frequency on the unit cube; resolution-limited if None.
        growth: Frequency factor between staircase levels.
        min_cube: Smallest cube in nodes per axis.
        workers: Threads for the per-cube updates.
        seed: Seed for sampling the moduli.
    """

    a: Optional[float] = None
    l_max: float = 0.25
    frequency: Optional[float] = None
    growth: float = DEFAULT_GROWTH
    min_cube: int = MIN_RESOLUTION
    workers: int = THREADS
    seed: int = 0


class RefineReport(BaseModel):
    eps: float
    rho: float
    params: RefineParams
    moduli: ModuliReport
    residual_before: float
    residual_l2: float
    rho_used: float
    cubes: int
    skipped: int
    rejected: int
    uncovered_measure: float
    cube_sum_sq: float
    uncovered_sq: float
    seam_jump: float
    cube_audits: list[CubeAudit] = []
    certificates: list[Certificate] = []

    @property
    def passed(self) -> bool:
        return all(c.status != CertificateStatus.FAIL for c in self.certificates)


@dataclass
class RefineResult:
    subsolution: Subsolution
    report: RefineReport


def _seam_jump(sub: Subsolution) -> float:
    """Largest jump of Du between neighbouring nodes in different partition cells."""
    Du = sub.field.Du()
    out = 0.0
    for k in range(sub.grid.ndim):
        a = np.take(sub.partition, range(sub.partition.shape[k] - 1), axis=k)
        b = np.take(sub.partition, range(1, sub.partition.shape[k]), axis=k)
        seam = a != b
        if seam.any():
            jump = np.abs(np.diff(Du, axis=k)).max(axis=(-2, -1))
            out = max(out, float(jump[seam].max()))
    return out


def _certify(
    sub: Subsolution,
    refined: Subsolution,
    sigma: FluxFunction,
    params: RefineParams,
    updates: list[CubeUpdate],
) -> tuple[list[Certificate], dict[str, float]]:
    grid = sub.grid
    covered = np.zeros(grid.shape, dtype=bool)
    for upd in updates:
        if upd.accepted:
            covered[upd.cube.slices()] = True
    r = residual_field(refined.field, sigma)
    sq = np.sum(r * r, axis=(-2, -1)) * grid.cell_volume
    cube_sum_sq = float(sq[covered].sum())
    uncovered_sq = float(sq[~covered].sum())
    residual = residual_l2(refined, sigma)
    rho_used = float(np.max(np.abs(refined.field.u - sub.field.u)))
    ut_max = float(np.max(np.abs(refined.field.u_t())))
    off_sigma = sum(
        c.achieved for upd in updates if upd.accepted for c in upd.audit.certificates
        if c.name == "sigma_on_corners"
    )
    boundary = boundary_layer_mask(grid.shape, 1)
    trace_changes = int(np.count_nonzero(refined.field.u[boundary] != sub.base.u[boundary]))
    certificates = [
        Certificate.upper("sup_change", rho_used, params.rho),
        Certificate.upper("time_derivative", ut_max, params.a),
        Certificate.upper("sigma_membership", float(off_sigma), 0.0),
        Certificate.upper("residual_l2", residual, params.eps),
        Certificate.upper(
            "residual_budget", float(np.sqrt(cube_sum_sq + uncovered_sq)), params.eps
        ),
        Certificate.upper("traces", float(trace_changes), 0.0),
        Certificate.upper("divergence", refined.div_residual(), refined.div_tolerance()),
    ]
    measured = {
        "residual": residual,
        "rho_used": rho_used,
        "cube_sum_sq": cube_sum_sq,
        "uncovered_sq": uncovered_sq,
        "uncovered_measure": float(np.count_nonzero(~covered)) * grid.cell_volume,
    }
    return certificates, measured


def refine_step(
    sub: Subsolution,
    sigma: FluxFunction,
    provider: SigmaSet,
    eps: float,
    rho: float,
    options: Optional[RefineOptions] = None,
) -> RefineResult:
    """
    Cover every partition cell by dyadic cubes, correct each cube and certify the result.

    The input is never modified. A subsolution whose residual is already below eps is returned
    unchanged with zero cubes.

    Raises:
        RefinementError: a certificate of the refined subsolution failed; the report lists the
            rejected and skipped cubes.
    """
    options = options or RefineOptions()
    if eps <= 0.0 or rho <= 0.0:
        raise PreconditionError(f"eps and rho must be positive, got {eps} and {rho}")
    residual_before = residual_l2(sub, sigma)
    moduli = compute_moduli(sub, sigma, seed=options.seed)
    a = options.a if options.a is not None else moduli.ut_max + 1.0
    params = select_parameters(
        a,
        moduli.ut_max,
        provider.tube_radius,
        moduli.M,
        moduli.M_tilde,
        moduli.div_constant,
        eps,
        rho,
        moduli.volume,
        options.l_max,
    )

    updates: list[CubeUpdate] = []
    if residual_before >= eps:
        grad = sub.field.gradient()
        cubes = []
        for label in sub.cells():
            cubes.extend(
                vitali_cover(
                    sub.cell_mask(label),
                    sub.grid,
                    params.uncovered_budget,
                    options.l_max,
                    min_size=options.min_cube,
                )
            )
        logger.info("refine: %d cubes over %d cells", len(cubes), len(sub.cells()))

        def _one(cube: DyadicCube) -> CubeUpdate:
            return cube_update(
                sub, cube, provider, params, sigma, options.frequency, options.growth, grad
            )

        with ThreadPoolExecutor(max_workers=max(1, options.workers)) as pool:
            updates = list(pool.map(_one, cubes))

    field_new = sub.field.copy()
    partition = sub.partition.copy()
    label = int(partition.max()) + 1
    for upd in updates:
        if upd.accepted:
            sl = upd.cube.slices()
            field_new.u[sl] += upd.du
            field_new.v[sl] += upd.dv
            partition[sl] = label
            label += 1
    refined = Subsolution(
        field_new,
        partition,
        sub.base,
        sub.perturb,
        sub.history + [f"refine eps={eps:g} rho={rho:g}"],
    )
    certificates, measured = _certify(sub, refined, sigma, params, updates)
    report = RefineReport(
        eps=eps,
        rho=rho,
        params=params,
        moduli=moduli,
        residual_before=residual_before,
        residual_l2=measured["residual"],
        rho_used=measured["rho_used"],
        cubes=sum(1 for u in updates if u.accepted),
        skipped=sum(1 for u in updates if u.audit.status == "skipped"),
        rejected=sum(1 for u in updates if u.audit.status == "rejected"),
        uncovered_measure=measured["uncovered_measure"],
        cube_sum_sq=measured["cube_sum_sq"],
        uncovered_sq=measured["uncovered_sq"],
        seam_jump=_seam_jump(refined),
        cube_audits=[u.audit for u in updates],
        certificates=certificates,
    )
    if not report.passed:
        failed = [c.name for c in certificates if c.status == CertificateStatus.FAIL]
        offending = [u.audit.start for u in updates if not u.accepted]
        raise RefinementError(
            f"refinement to eps={eps:g} failed certificates {failed}; "
            f"{len(offending)} cubes rejected or skipped: {offending[:8]}",
            report=report,
        )
    logger.info(
        "refine: residual %.4e -> %.4e with %d cubes",
        residual_before,
        report.residual_l2,
        report.cubes,
    )
    return RefineResult(refined if updates else sub, report)


@dataclass
class MultiRefineResult:
    iterates: list[Subsolution] = field(default_factory=list)
    reports: list[RefineReport] = field(default_factory=list)
    failure: Optional[RefineReport] = None

    @property
    def passed(self) -> bool:
        return self.failure is None


def multi_refine(
    sub: Subsolution,
    sigma: FluxFunction,
    provider: SigmaSet,
    eps_schedule: list[float],
    rho_schedule: list[float],
    options: Optional[RefineOptions] = None,
) -> MultiRefineResult:
    """Compose refinement steps along the schedules; stops at the first failed step."""
    result = MultiRefineResult()
    current = sub
    for k, eps in enumerate(eps_schedule):
        rho = rho_schedule[min(k, len(rho_schedule) - 1)]
        try:
            step = refine_step(current, sigma, provider, eps, rho, options)
        except RefinementError as exc:
            logger.warning("schedule stopped at eps=%g: %s", eps, exc)
            result.failure = exc.report
            break
        current = step.subsolution
        result.iterates.append(current)
        result.reports.append(step.report)
    return result


def write_checkpoint(
    directory: Union[str, Path],
    sub: Subsolution,
    report: Optional[RefineReport] = None,
    csv: bool = False,
) -> Path:
    """Fields as WCIF blocks (or CSV), partition.json, certificates.json and manifest.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    grid = sub.grid
    if csv:
        write_field_csv(directory / "u.csv", grid.coords(), sub.field.u)
        write_field_csv(directory / "v.csv", grid.coords(), sub.field.v)
    else:
        extra = [1.0] * (sub.field.u.ndim - grid.ndim)
        write_wcif(directory / "u.wcif", sub.field.u, list(grid.spacing) + extra)
        write_wcif(directory / "v.wcif", sub.field.v, list(grid.spacing) + extra + [1.0])
    cells = [
        {"label": label, "nodes": int(np.count_nonzero(mask)), "runs": mask_runs(mask)}
        for label, mask in ((label, sub.cell_mask(label)) for label in sub.cells())
    ]
    (directory / "partition.json").write_text(
        json.dumps({"shape": list(grid.shape), "cells": cells}, sort_keys=True)
    )
    certificates = to_primitive(report.certificates) if report is not None else []
    (directory / "certificates.json").write_text(json.dumps(certificates, sort_keys=True, indent=2))
    manifest = {
        "grid": {"origin": grid.origin, "edges": grid.edges, "resolution": grid.resolution},
        "perturb": sub.perturb,
        "history": sub.history,
        "params": to_primitive(report.params) if report is not None else None,
        "moduli": to_primitive(report.moduli) if report is not None else None,
    }
    manifest_text = json.dumps(to_primitive(manifest), sort_keys=True, indent=2)
    (directory / "manifest.json").write_text(manifest_text)
    logger.info("checkpoint written to %s", directory)
    return directory
