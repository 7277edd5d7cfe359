"""
Lamination hulls of finite point sets, convex-hull membership and the search for
rank-one connections inside the constraint set.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import least_squares, linprog

from nonunique.config import DEDUP_TOL, LAMBDA_SAMPLES, RANK_TOL, SCREEN_THRESHOLD
from nonunique.core.blocks import numeric_rank
from nonunique.core.flux import FluxFunction
from nonunique.core.sampling import Sampler
from nonunique.errors import DimensionError, PreconditionError

logger = logging.getLogger(__name__)


@dataclass
class PointCloud:
    """
    A finite set of equal-shape matrices.

    Attributes:
        points: Array of shape (K, p, q).
        provenance: Per-point tag, "original" or "lamination-depth-i".
        sources: Per-point (i, j, lambda) construction record, None for originals.
        depth: Number of lamination steps that added points.
    """

    points: np.ndarray
    provenance: list[str] = field(default_factory=list)
    sources: list[Optional[tuple[int, int, float]]] = field(default_factory=list)
    depth: int = 0

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim == 2:
            self.points = self.points[:, :, None]
        if self.points.ndim != 3 or self.points.shape[0] == 0:
            raise DimensionError(
                f"point cloud needs a nonempty (K, p, q) array, got {self.points.shape}"
            )
        if not self.provenance:
            self.provenance = ["original"] * len(self.points)
        if not self.sources:
            self.sources = [None] * len(self.points)

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.points.shape[1:])  # type: ignore[return-value]

    def flat(self) -> np.ndarray:
        return self.points.reshape(len(self), -1)


def rank_one_connected(X: np.ndarray, Y: np.ndarray, tol: float = RANK_TOL) -> bool:
    X, Y = np.asarray(X, dtype=float), np.asarray(Y, dtype=float)
    if X.shape != Y.shape:
        raise DimensionError(f"cannot compare shapes {X.shape} and {Y.shape}")
    return numeric_rank(X - Y, tol) == 1


def lamination_step(
    cloud: PointCloud,
    lambda_samples: int = LAMBDA_SAMPLES,
    tol: float = DEDUP_TOL,
) -> PointCloud:
    """Append interior points of every rank-one segment between cloud points."""
    if lambda_samples < 1:
        raise PreconditionError(f"lambda samples must be at least 1, got {lambda_samples}")
    lambdas = np.arange(1, lambda_samples + 1) / (lambda_samples + 1)
    pts = cloud.points
    candidates: list[np.ndarray] = []
    records: list[tuple[int, int, float]] = []
    for i in range(len(cloud)):
        for j in range(i + 1, len(cloud)):
            if not rank_one_connected(pts[i], pts[j]):
                continue
            for lam in lambdas:
                candidates.append(lam * pts[i] + (1.0 - lam) * pts[j])
                records.append((i, j, float(lam)))
    if not candidates:
        return cloud

    flat_new = np.stack(candidates).reshape(len(candidates), -1)
    order = np.lexsort(flat_new.T[::-1])
    kept = list(cloud.flat())
    depth = cloud.depth + 1
    provenance = list(cloud.provenance)
    sources = list(cloud.sources)
    added = 0
    for idx in order:
        cand = flat_new[idx]
        if np.min(np.linalg.norm(np.asarray(kept) - cand, axis=1)) <= tol:
            continue
        kept.append(cand)
        provenance.append(f"lamination-depth-{depth}")
        sources.append(records[idx])
        added += 1
    if added == 0:
        return cloud
    logger.debug("lamination step %d added %d points", depth, added)
    points = np.asarray(kept).reshape((-1,) + cloud.shape)
    return PointCloud(points=points, provenance=provenance, sources=sources, depth=depth)


def lamination_hull(
    cloud: PointCloud,
    depth: int,
    lambda_samples: int = LAMBDA_SAMPLES,
    tol: float = DEDUP_TOL,
) -> PointCloud:
    """Iterate lamination_step up to depth times, stopping at a fixed point."""
    if depth < 0:
        raise PreconditionError(f"depth must be nonnegative, got {depth}")
    current = cloud
    for _ in range(depth):
        nxt = lamination_step(current, lambda_samples, tol)
        if len(nxt) == len(current):
            break
        current = nxt
    return current


@dataclass
class MembershipResult:
    member: bool
    coefficients: Optional[np.ndarray]
    residual: float

    def __bool__(self) -> bool:
        return self.member


def convex_membership(Y: np.ndarray, cloud: PointCloud, tol: float = 1e-9) -> MembershipResult:
    """Decide whether Y lies within tol of the convex hull of the cloud."""
    y = np.asarray(Y, dtype=float).ravel()
    pts = cloud.flat()
    if y.size != pts.shape[1]:
        raise DimensionError(f"point has {y.size} entries, cloud points have {pts.shape[1]}")
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    if np.any(y < lo - tol) or np.any(y > hi + tol):
        return MembershipResult(False, None, float("inf"))

    K, d = pts.shape
    # variables: weights (K), positive slack (d), negative slack (d)
    cost = np.concatenate([np.zeros(K), np.ones(2 * d)])
    A_eq = np.zeros((d + 1, K + 2 * d))
    A_eq[:d, :K] = pts.T
    A_eq[:d, K : K + d] = np.eye(d)
    A_eq[:d, K + d :] = -np.eye(d)
    A_eq[d, :K] = 1.0
    b_eq = np.append(y, 1.0)
    res = linprog(cost, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        return MembershipResult(False, None, float("inf"))
    weights = np.clip(res.x[:K], 0.0, None)
    weights /= weights.sum()
    weights = _polish(weights, pts, y)
    residual = float(np.linalg.norm(weights @ pts - y))
    return MembershipResult(residual <= tol, weights if residual <= tol else None, residual)


def _polish(weights: np.ndarray, pts: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least-squares re-solve on the support; kept only if it stays convex and improves."""
    support = np.flatnonzero(weights > 1e-12)
    system = np.vstack([pts[support].T, np.ones(support.size)])
    target = np.append(y, 1.0)
    local, *_ = np.linalg.lstsq(system, target, rcond=None)
    if np.any(local < -1e-12):
        return weights
    candidate = np.zeros_like(weights)
    candidate[support] = np.clip(local, 0.0, None)
    candidate /= candidate.sum()
    if np.linalg.norm(candidate @ pts - y) < np.linalg.norm(weights @ pts - y):
        return candidate
    return weights


@dataclass
class RankOneFinding:
    A: np.ndarray
    p: np.ndarray
    alpha: np.ndarray
    s: float
    beta: np.ndarray
    residual: float


@dataclass
class RankOneSearchReport:
    """Samples screened, candidates refined and solutions of the rank-one system found."""

    count: int
    refined: int
    min_residual: float
    tol: float
    findings: list[RankOneFinding] = field(default_factory=list)


def _normalized_residual(
    sigma: FluxFunction, A: np.ndarray, p: np.ndarray, alpha: np.ndarray
) -> np.ndarray:
    """|d alpha_hat| / (|p||alpha|) where d = sigma(A + p (x) alpha) - sigma(A), batched."""
    C = p[..., :, None] * alpha[..., None, :]
    d = sigma(A + C) - sigma(A)
    a_norm = np.linalg.norm(alpha, axis=-1)
    along = np.einsum("...ij,...j->...i", d, alpha) / a_norm[..., None]
    return along / (np.linalg.norm(p, axis=-1) * a_norm)[..., None]


def search_rank_one_in_K(
    sigma: FluxFunction,
    sampler: Sampler,
    tol: float = 1e-6,
    screen: float = SCREEN_THRESHOLD,
    max_refine: int = 50,
    min_step: float = 1e-2,
) -> RankOneSearchReport:
    """
    Look for Y in K and admissible C with Y + C in K.

    With beta^i orthogonal to alpha the b-block equation sigma(A + p (x) alpha) = sigma(A) + s beta
    can only fail along alpha, so the residual of a sample is the normalized component of the
    flux increment along alpha. Samples under the screening threshold are refined by bounded
    least squares; solutions with a vanishing step are discarded.
    """
    if sampler.count < 1:
        raise PreconditionError(f"sample count must be at least 1, got {sampler.count}")
    m, n = sigma.m, sigma.n
    rng = sampler.rng()
    A = sampler.scale * rng.standard_normal((sampler.count, m, n))
    p = rng.standard_normal((sampler.count, m))
    alpha = rng.standard_normal((sampler.count, n))
    resid = np.linalg.norm(_normalized_residual(sigma, A, p, alpha), axis=-1)
    candidates = np.flatnonzero(resid < screen)[:max_refine]
    bound = 10.0 * sampler.scale
    findings: list[RankOneFinding] = []
    best = float(resid.min())

    def _fun(x: np.ndarray) -> np.ndarray:
        A_, p_, a_ = x[: m * n].reshape(m, n), x[m * n : m * n + m], x[m * n + m :]
        return _normalized_residual(sigma, A_, p_, a_)

    for idx in candidates:
        x0 = np.concatenate([A[idx].ravel(), p[idx], alpha[idx]])
        x0 = np.clip(x0, -0.99 * bound, 0.99 * bound)
        sol = least_squares(_fun, x0, bounds=(-bound, bound), xtol=1e-15, ftol=1e-15, gtol=1e-15)
        r = float(np.linalg.norm(sol.fun))
        best = min(best, r)
        A_s = sol.x[: m * n].reshape(m, n)
        p_s, a_s = sol.x[m * n : m * n + m], sol.x[m * n + m :]
        step = float(np.linalg.norm(p_s) * np.linalg.norm(a_s))
        if r >= tol or step < min_step:
            continue
        unit = a_s / np.linalg.norm(a_s)
        d = sigma(A_s + np.outer(p_s, a_s)) - sigma(A_s)
        perp = d - np.outer(d @ unit, unit)
        s = float(np.linalg.norm(perp))
        beta = perp / s if s > 1e-14 else np.zeros((m, n))
        findings.append(RankOneFinding(A_s, p_s, a_s, s, beta, r))
    logger.info(
        "rank-one search: %d samples, %d refined, %d findings",
        sampler.count,
        candidates.size,
        len(findings),
    )
    return RankOneSearchReport(
        count=sampler.count,
        refined=int(candidates.size),
        min_residual=best,
        tol=tol,
        findings=findings,
    )
