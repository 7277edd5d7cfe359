"""
T_N-configurations: construction, convex coefficients, segment geometry, shrinking,
admissibility of space-time legs and the admissible scaling family.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from nonunique.config import RANK_TOL
from nonunique.core.blocks import (
    ProblemDims,
    admissible_block,
    lift_diag,
    numeric_rank,
    project_dense,
)
from nonunique.errors import DimensionError, PreconditionError

logger = logging.getLogger(__name__)

CLOSURE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class TNConfig:
    """
    Base P, rank-one legs C_j and factors kappa_j > 1 with derived corners and anchors.

    Attributes:
        P: Base matrix.
        C: Legs stacked as an (N, p, q) array.
        kappa: Factors, shape (N,).
        X: Corners X_j = P_j + kappa_j C_j.
        anchors: P_1 = P and P_{j+1} = P_j + C_j.
        dims: Set for structured (m + nm) x (n + 1) configurations.
    """

    P: np.ndarray
    C: np.ndarray
    kappa: np.ndarray
    X: np.ndarray
    anchors: np.ndarray
    dims: Optional[ProblemDims] = None

    @property
    def N(self) -> int:
        return int(self.kappa.size)

    @property
    def lambdas(self) -> np.ndarray:
        return 1.0 - 1.0 / self.kappa

    @property
    def mu(self) -> float:
        return float(np.prod(self.lambdas))

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.P.shape)  # type: ignore[return-value]


def build_tn(
    P: np.ndarray,
    legs: Sequence[tuple[np.ndarray, float]],
    dims: Optional[ProblemDims] = None,
    tol: float = CLOSURE_TOL,
) -> TNConfig:
    """Validate legs and derive corners and anchors."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if len(legs) < 2:
        raise PreconditionError(f"a T_N-configuration needs N >= 2 legs, got {len(legs)}")
    C = np.stack([np.atleast_2d(np.asarray(leg[0], dtype=float)) for leg in legs])
    kappa = np.array([float(leg[1]) for leg in legs])
    if C.shape[1:] != P.shape:
        raise DimensionError(f"legs have shape {C.shape[1:]} but base has shape {P.shape}")
    if dims is not None and P.shape != dims.block_shape:
        raise DimensionError(
            f"structured configuration needs shape {dims.block_shape}, got {P.shape}"
        )
    for j, k in enumerate(kappa):
        if not k > 1.0:
            raise PreconditionError(f"leg {j}: factor not greater than one (kappa={k})")
    for j in range(C.shape[0]):
        if numeric_rank(C[j], RANK_TOL) != 1:
            rank = numeric_rank(C[j], RANK_TOL)
            raise PreconditionError(f"leg {j}: leg not rank-one (rank {rank})")
    scale = 1.0 + max(float(np.linalg.norm(c)) for c in C)
    closure = float(np.linalg.norm(C.sum(axis=0)))
    if closure > tol * scale:
        raise PreconditionError(f"legs do not close (|sum C_j| = {closure:.3e})")
    anchors = P + np.concatenate([np.zeros((1,) + P.shape), np.cumsum(C, axis=0)[:-1]])
    X = anchors + kappa[:, None, None] * C
    return TNConfig(P=P, C=C, kappa=kappa, X=X, anchors=anchors, dims=dims)


def convex_coeffs(cfg: TNConfig, j: int) -> np.ndarray:
    """
    Coefficients nu^j with P_j = sum_i nu_i^j X_i (0-based j).

    The closed form for the first anchor is applied to the configuration relabeled
    cyclically so that leg j comes first.
    """
    N = cfg.N
    if not 0 <= j < N:
        raise PreconditionError(f"anchor index must lie in [0, {N}), got {j}")
    lam = cfg.lambdas
    order = [(j + r) % N for r in range(N)]
    nu = np.zeros(N)
    for r, i in enumerate(order):
        nu[i] = (1.0 - lam[i]) * np.prod(lam[order[r + 1 :]])
    return nu / (1.0 - cfg.mu)


def _segment_projection(cfg: TNConfig, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-segment distances and positions t with projection (1 - t) X_j + t P_j."""
    X = np.asarray(X, dtype=float)
    if X.shape != cfg.P.shape:
        raise DimensionError(f"point has shape {X.shape}, configuration has {cfg.P.shape}")
    d = cfg.anchors - cfg.X
    rel = X[None] - cfg.X
    t = np.sum(rel * d, axis=(1, 2)) / np.sum(d * d, axis=(1, 2))
    t = np.clip(t, 0.0, 1.0)
    proj = cfg.X + t[:, None, None] * d
    dist = np.linalg.norm((X[None] - proj).reshape(cfg.N, -1), axis=1)
    return dist, t


def dist_to_segments(cfg: TNConfig, X: np.ndarray) -> float:
    """Frobenius distance from X to the union of the closed segments [X_j, P_j]."""
    dist, _ = _segment_projection(cfg, X)
    return float(dist.min())


def locate_on_segments(cfg: TNConfig, Y: np.ndarray, tol: float = 1e-9) -> tuple[int, float]:
    """Recover (j, lambda) with Y = (1 - lambda) X_j + lambda P_j; ties go to the smallest j."""
    dist, t = _segment_projection(cfg, Y)
    scale = 1.0 + float(np.linalg.norm(Y))
    hits = np.flatnonzero(dist <= tol * scale)
    if hits.size == 0:
        raise PreconditionError(f"point is off the segment set (distance {dist.min():.3e})")
    j = int(hits[0])
    return j, float(t[j])


def shrink(cfg: TNConfig, kappa_new: Sequence[float]) -> TNConfig:
    """Same base and legs with factors 1 < kappa'_j < kappa_j."""
    kappa_new = np.asarray(kappa_new, dtype=float)
    if kappa_new.shape != cfg.kappa.shape:
        raise DimensionError(f"expected {cfg.N} factors, got {kappa_new.size}")
    bad = np.flatnonzero((kappa_new <= 1.0) | (kappa_new >= cfg.kappa))
    if bad.size:
        j = int(bad[0])
        raise PreconditionError(
            f"shrunk factor {kappa_new[j]} for leg {j} must lie in (1, {cfg.kappa[j]})"
        )
    return build_tn(cfg.P, list(zip(cfg.C, kappa_new)), dims=cfg.dims)


def collinear_legs(cfg: TNConfig, tol: float = RANK_TOL) -> list[tuple[int, int]]:
    """Pairs of legs that are parallel as matrices."""
    flat = cfg.C.reshape(cfg.N, -1)
    pairs = []
    for i in range(cfg.N):
        for j in range(i + 1, cfg.N):
            if numeric_rank(np.stack([flat[i], flat[j]]), tol) <= 1:
                pairs.append((i, j))
    return pairs


@dataclass
class LegFactor:
    """Recovered factors (p, alpha, s, beta) of one structured leg, |alpha| = 1."""

    index: int
    p: np.ndarray
    alpha: np.ndarray
    s: float
    beta: np.ndarray
    orthogonality: float
    admissible: bool
    reason: str = ""


@dataclass
class AdmissibleReport:
    admissible: bool
    legs: list[LegFactor] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.admissible


def factor_leg(
    C: np.ndarray, dims: ProblemDims, index: int = 0, tol: float = RANK_TOL
) -> LegFactor:
    """Factor a rank-one structured leg as w (x) (alpha, s) with the |alpha| = 1 gauge."""
    m, n = dims.m, dims.n
    u, sv, vt = np.linalg.svd(C)
    w = sv[0] * u[:, 0]
    v = vt[0]
    alpha, s = v[:n], float(v[n])
    scale = float(np.linalg.norm(v))
    rank_resid = float(np.linalg.norm(C - np.outer(w, v)))
    if np.linalg.norm(alpha) <= tol * scale:
        beta = w[m:].reshape(m, n)
        return LegFactor(index, w[:m], np.zeros(n), s, beta, 0.0, False, "alpha vanishes")
    c = float(np.linalg.norm(alpha))
    alpha, s, w = alpha / c, s / c, w * c
    lead = np.flatnonzero(np.abs(alpha) > tol)[0]
    if alpha[lead] < 0:
        alpha, s, w = -alpha, -s, -w
    p, beta = w[:m], w[m:].reshape(m, n)
    ortho = float(np.max(np.abs(beta @ alpha)))
    rank_ok = rank_resid <= tol * (1.0 + float(np.linalg.norm(C)))
    ortho_ok = ortho <= tol * (1.0 + float(np.linalg.norm(w)))
    reason = ""
    if not rank_ok:
        reason = "not rank-one"
    elif not ortho_ok:
        reason = "beta not orthogonal to alpha"
    return LegFactor(index, p, alpha, s, beta, ortho, rank_ok and ortho_ok, reason)


def admissible_check(cfg: TNConfig, tol: float = RANK_TOL) -> AdmissibleReport:
    """Check every leg has the admissible form with alpha != 0 and beta^i . alpha = 0."""
    if cfg.dims is None:
        raise DimensionError("admissibility needs a structured (m + nm) x (n + 1) configuration")
    legs = [factor_leg(cfg.C[j], cfg.dims, j, tol) for j in range(cfg.N)]
    ok = all(leg.admissible for leg in legs)
    for leg in legs:
        if not leg.admissible:
            logger.debug(
                "leg %d not admissible: %s (%.3e)", leg.index, leg.reason, leg.orthogonality
            )
    return AdmissibleReport(admissible=ok, legs=legs)


def scale_family(cfg: TNConfig, s: float, report: Optional[AdmissibleReport] = None) -> TNConfig:
    """
    Admissible configuration with legs (p_j; beta_j / s) (x) (alpha_j, s s_j) over the base
    with zeroed a and B blocks. Diagonal projections of corners and anchors are unchanged.
    """
    if s == 0:
        raise PreconditionError("time scaling s must be nonzero")
    report = report or admissible_check(cfg)
    if not report.admissible:
        bad = [leg.index for leg in report.legs if not leg.admissible]
        raise PreconditionError(f"configuration is not admissible (legs {bad})")
    dims = cfg.dims
    assert dims is not None
    base = lift_diag(project_dense(cfg.P, dims))
    legs = [
        (admissible_block(leg.p, leg.alpha, s * leg.s, leg.beta / s), k)
        for leg, k in zip(report.legs, cfg.kappa)
    ]
    return build_tn(base, legs, dims=dims)


def tartar_fixture() -> tuple[np.ndarray, TNConfig]:
    """The four diagonal 2 x 2 corners without rank-one connections and their configuration."""
    P = -np.eye(2)
    legs = [
        (np.diag([1.0, 0.0]), 2.0),
        (np.diag([0.0, 1.0]), 2.0),
        (np.diag([-1.0, 0.0]), 2.0),
        (np.diag([0.0, -1.0]), 2.0),
    ]
    cfg = build_tn(P, legs)
    return cfg.X.copy(), cfg


def tn_to_json(cfg: TNConfig) -> dict:
    doc: dict = {
        "P": cfg.P.tolist(),
        "legs": [{"C": c.tolist(), "kappa": float(k)} for c, k in zip(cfg.C, cfg.kappa)],
    }
    if cfg.dims is not None:
        doc["dims"] = {"m": cfg.dims.m, "n": cfg.dims.n}
    return doc


def tn_from_json(doc: dict) -> TNConfig:
    dims = ProblemDims(**doc["dims"]) if doc.get("dims") else None
    legs = [(np.asarray(leg["C"], dtype=float), float(leg["kappa"])) for leg in doc["legs"]]
    return build_tn(np.asarray(doc["P"], dtype=float), legs, dims=dims)
