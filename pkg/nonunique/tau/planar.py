"""
Special tau_N-configurations in two space dimensions and the dimension count of their family.

Conventions: J maps (a, b) to (b, -a), so beta J = q alpha is solved by beta = q alpha_perp
with alpha_perp = (-alpha_2, alpha_1).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import null_space

from nonunique.config import DIMENSION_RETRIES
from nonunique.core.blocks import DiagPoint
from nonunique.errors import DegeneracyError, DimensionError
from nonunique.tau.residual import TauNConfig, make_tau

logger = logging.getLogger(__name__)

J = np.array([[0.0, -1.0], [1.0, 0.0]])


def perp(alpha: np.ndarray) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    return np.stack([-alpha[..., 1], alpha[..., 0]], axis=-1)


def map_L(point: DiagPoint) -> np.ndarray:
    """Linear bijection [A, (b^i)] -> [[A], [B J]] with B the matrix of rows b^i."""
    if point.A.shape[1] != 2:
        raise DimensionError(f"the map L needs n = 2, got n = {point.A.shape[1]}")
    return np.vstack([point.A, point.b @ J])


def map_L_inverse(M: np.ndarray) -> DiagPoint:
    M = np.asarray(M, dtype=float)
    m = M.shape[0] // 2
    return DiagPoint(M[:m].copy(), M[m:] @ J.T)


def _kernel_matrices(alpha: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x, y = alpha[:, 0], alpha[:, 1]
    return np.stack([x, y]), np.stack([x * x, y * y, x * y])


def _apart(alpha: np.ndarray, i: int, j: int, tol: float) -> bool:
    det = alpha[i, 0] * alpha[j, 1] - alpha[i, 1] * alpha[j, 0]
    return abs(det) > tol * float(np.linalg.norm(alpha[i]) * np.linalg.norm(alpha[j]))


def _collinear_pair(alpha: np.ndarray, tol: float = 1e-9) -> Optional[tuple[int, int]]:
    """First pair of parallel (or vanishing) directions in index order."""
    N = alpha.shape[0]
    for i in range(N):
        for j in range(i + 1, N):
            if not _apart(alpha, i, j, tol):
                return (i, j)
    return None


def _noncollinear_triple(alpha: np.ndarray, tol: float = 1e-9) -> Optional[tuple[int, int, int]]:
    N = alpha.shape[0]

    def apart(i: int, j: int) -> bool:
        return _apart(alpha, i, j, tol)

    for i in range(N):
        for j in range(i + 1, N):
            if not apart(i, j):
                continue
            for k in range(j + 1, N):
                if apart(i, k) and apart(j, k):
                    return (i, j, k)
    return None


@dataclass
class PQKernel:
    """
    Bases of the leg-vector solution spaces.

    Attributes:
        p_basis: Shape (m(N-2), N, m); solutions of sum x_j p_j = sum y_j p_j = 0.
        q_basis: Shape (m(N-3), N, m); solutions of the three quadratic moment equations.
    """

    p_basis: np.ndarray
    q_basis: np.ndarray

    @property
    def p_dim(self) -> int:
        return int(self.p_basis.shape[0])

    @property
    def q_dim(self) -> int:
        return int(self.q_basis.shape[0])


def _expand(basis: np.ndarray, m: int) -> np.ndarray:
    """Duplicate an (N, k) coefficient basis over m components into (k m, N, m)."""
    N, k = basis.shape
    out = np.zeros((k * m, N, m))
    for c in range(k):
        for i in range(m):
            out[c * m + i, :, i] = basis[:, c]
    return out


def solve_pq_kernel(alpha: np.ndarray, m: int) -> PQKernel:
    """Bases of the p- and q-solution spaces, of dimensions m(N-2) and m(N-3)."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 2 or alpha.shape[1] != 2:
        raise DimensionError(f"directions must have shape (N, 2), got {alpha.shape}")
    N = alpha.shape[0]
    if N < 3:
        raise DimensionError(f"special configurations need N >= 3, got {N}")
    if _noncollinear_triple(alpha) is None:
        i, j = _collinear_pair(alpha)
        raise DegeneracyError(
            f"no three mutually noncollinear directions among {alpha.tolist()}: "
            f"directions {i} and {j} are parallel"
        )
    K_p, K_q = _kernel_matrices(alpha)
    rank_p, rank_q = np.linalg.matrix_rank(K_p), np.linalg.matrix_rank(K_q)
    if rank_p != 2 or rank_q != 3:
        raise DegeneracyError(f"moment matrices have ranks {rank_p} and {rank_q}, expected 2 and 3")
    return PQKernel(p_basis=_expand(null_space(K_p), m), q_basis=_expand(null_space(K_q), m))


@dataclass
class SpecialTau:
    config: TauNConfig
    q: np.ndarray
    degenerate: bool


def assemble_special(
    alpha: np.ndarray,
    delta: np.ndarray,
    p: np.ndarray,
    q: np.ndarray,
    kappa: np.ndarray,
    base: DiagPoint,
) -> SpecialTau:
    """Legs (p_j; (alpha_j . delta) q_j) (x) alpha_j pulled back through the map L."""
    alpha = np.asarray(alpha, dtype=float)
    delta = np.asarray(delta, dtype=float).reshape(2)
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    kappa = np.asarray(kappa, dtype=float).reshape(-1)
    N = alpha.shape[0]
    if kappa.size != N:
        raise DimensionError(f"expected {N} factors, got {kappa.size}")
    s = alpha @ delta
    beta = q[:, :, None] * perp(alpha)[:, None, :]
    cfg = make_tau(base, p=p, alpha=alpha, s=s, beta=beta, kappa=kappa)
    degenerate = bool(np.allclose(s, 0.0))
    if degenerate:
        logger.info(
            "special configuration has vanishing time scalings (delta = %s)", delta.tolist()
        )
    return SpecialTau(config=cfg, q=q, degenerate=degenerate)


def special_tau_n2(
    alpha: np.ndarray,
    delta: np.ndarray,
    p_coeffs: np.ndarray,
    q_coeffs: np.ndarray,
    kappa: np.ndarray,
    base: DiagPoint,
    kernel: Optional[PQKernel] = None,
) -> SpecialTau:
    """Special configuration with p and q drawn from the kernel bases by coefficients."""
    m = base.A.shape[0]
    kernel = kernel or solve_pq_kernel(alpha, m)
    p_coeffs = np.asarray(p_coeffs, dtype=float).reshape(-1)
    q_coeffs = np.asarray(q_coeffs, dtype=float).reshape(-1)
    if p_coeffs.size != kernel.p_dim or q_coeffs.size != kernel.q_dim:
        raise DimensionError(
            f"expected {kernel.p_dim} p- and {kernel.q_dim} q-coefficients, "
            f"got {p_coeffs.size} and {q_coeffs.size}"
        )
    p = np.tensordot(p_coeffs, kernel.p_basis, axes=1)
    q = np.tensordot(q_coeffs, kernel.q_basis, axes=1) if kernel.q_dim else np.zeros_like(p)
    return assemble_special(alpha, delta, p, q, kappa, base)


@dataclass
class DimensionCheck:
    observed: int
    formula: int
    parameters: int
    gauge: int
    singular_gap: float


def _projector(K: np.ndarray) -> np.ndarray:
    return np.eye(K.shape[1]) - np.linalg.pinv(K) @ K


def _corner_map(m: int, N: int, B0_p: np.ndarray, B0_q: np.ndarray):
    kp, kq = B0_p.shape[1], B0_q.shape[1]

    def corners(theta: np.ndarray) -> np.ndarray:
        sizes = [4 * m, N, 2 * N, 2, kp * m, kq * m]
        P, kappa, alpha, delta, cp, cq = np.split(theta, np.cumsum(sizes)[:-1])
        P = P.reshape(2 * m, 2)
        alpha = alpha.reshape(N, 2)
        K_p, K_q = _kernel_matrices(alpha)
        p = _projector(K_p) @ B0_p @ cp.reshape(kp, m)
        q = _projector(K_q) @ B0_q @ cq.reshape(kq, m) if kq else np.zeros((N, m))
        s = alpha @ delta
        out = []
        anchor = P.copy()
        for j in range(N):
            C = np.outer(np.concatenate([p[j], s[j] * q[j]]), alpha[j])
            out.append(anchor + kappa[j] * C)
            anchor = anchor + C
        return np.concatenate([X.ravel() for X in out])

    return corners, sum([4 * m, N, 2 * N, 2, kp * m, kq * m])


def dimension_check(
    m: int, N: int, seed: int = 0, retries: int = DIMENSION_RETRIES
) -> DimensionCheck:
    """
    Numerical rank of the parameterization of special configurations.

    Parameters are (P, kappa, alpha, delta, p-coordinates, q-coordinates) with the kernels
    parameterized smoothly by projecting a reference basis. The N + 1 gauge directions
    (alpha_j -> alpha_j / r_j and the delta scaling) lie in the parameter space, so the rank
    is compared with the parameter count minus N + 1.
    """
    if N < 3:
        raise DimensionError(f"dimension count needs N >= 3, got {N}")
    formula = (2 * m + 2) * N + 1 - m
    rng = np.random.default_rng(seed)
    for attempt in range(retries):
        alpha0 = rng.standard_normal((N, 2))
        if _noncollinear_triple(alpha0, tol=0.1) is None:
            continue
        K_p, K_q = _kernel_matrices(alpha0)
        B0_p = null_space(K_p)
        B0_q = null_space(K_q) if N > 3 else np.zeros((N, 0))
        corners, n_params = _corner_map(m, N, B0_p, B0_q)
        theta = np.concatenate(
            [
                rng.standard_normal(4 * m),
                1.5 + rng.random(N),
                alpha0.ravel(),
                rng.standard_normal(2),
                rng.standard_normal(B0_p.shape[1] * m),
                rng.standard_normal(B0_q.shape[1] * m),
            ]
        )
        jac = np.empty((corners(theta).size, n_params))
        for k in range(n_params):
            h = 1e-6 * (1.0 + abs(theta[k]))
            e = np.zeros(n_params)
            e[k] = h
            jac[:, k] = (corners(theta + e) - corners(theta - e)) / (2.0 * h)
        sv = np.linalg.svd(jac, compute_uv=False)
        rel = sv / sv[0]
        rank = int(np.sum(rel > 1e-7))
        gap = float(rel[rank - 1] / rel[rank]) if rank < rel.size else float("inf")
        if gap < 1e3:
            logger.debug("dimension sample %d ambiguous (gap %.1e), resampling", attempt, gap)
            continue
        return DimensionCheck(
            observed=rank, formula=formula, parameters=n_params, gauge=N + 1, singular_gap=gap
        )
    raise DegeneracyError(f"no nondegenerate sample for m={m}, N={N} after {retries} attempts")
