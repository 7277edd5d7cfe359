"""
tau_N-configurations in M^{m x n} x (R^n)^m, their defining residuals and a damped
Gauss-Newton solver for configurations embedded in the flux graph.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from nonunique.config import SOLVER_MAX_ITER, SOLVER_TOL
from nonunique.core.blocks import DiagPoint, ProblemDims, admissible_block, lift_diag
from nonunique.core.flux import FluxFunction
from nonunique.errors import ConvergenceError, DimensionError, PreconditionError
from nonunique.geometry.tn_config import TNConfig, build_tn

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TauNConfig:
    """
    Base rho and legs gamma_j = [p_j (x) alpha_j, (s_j beta_j^i)] with factors kappa_j.

    Attributes:
        rho: Base point.
        p: Leg vectors, shape (N, m).
        alpha: Leg directions, shape (N, n).
        s: Time scalings, shape (N,).
        beta: Leg flux directions, shape (N, m, n).
        kappa: Factors, shape (N,).
    """

    rho: DiagPoint
    p: np.ndarray
    alpha: np.ndarray
    s: np.ndarray
    beta: np.ndarray
    kappa: np.ndarray

    def __post_init__(self) -> None:
        N = self.kappa.size
        m, n = self.rho.A.shape
        expected = {"p": (N, m), "alpha": (N, n), "s": (N,), "beta": (N, m, n)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                got = getattr(self, name).shape
                raise DimensionError(f"{name} must have shape {shape}, got {got}")

    @property
    def N(self) -> int:
        return int(self.kappa.size)

    @property
    def dims(self) -> ProblemDims:
        return self.rho.dims

    def gammas(self) -> list[DiagPoint]:
        return [
            DiagPoint(np.outer(self.p[j], self.alpha[j]), self.s[j] * self.beta[j])
            for j in range(self.N)
        ]

    def anchors(self) -> list[DiagPoint]:
        out = [self.rho]
        for g in self.gammas()[:-1]:
            out.append(out[-1] + g)
        return out

    def corners(self) -> list[DiagPoint]:
        return [r + g.scaled(k) for r, g, k in zip(self.anchors(), self.gammas(), self.kappa)]

    def validate(self) -> None:
        if np.any(self.kappa <= 1.0):
            raise PreconditionError(f"factors must exceed one, got {self.kappa.tolist()}")
        if np.any(np.linalg.norm(self.alpha, axis=1) == 0.0):
            raise PreconditionError("every leg direction alpha_j must be nonzero")


def make_tau(
    rho: DiagPoint,
    p: np.ndarray,
    alpha: np.ndarray,
    s: np.ndarray,
    beta: np.ndarray,
    kappa: np.ndarray,
) -> TauNConfig:
    cfg = TauNConfig(
        rho=rho,
        p=np.asarray(p, dtype=float),
        alpha=np.asarray(alpha, dtype=float),
        s=np.asarray(s, dtype=float).reshape(-1),
        beta=np.asarray(beta, dtype=float),
        kappa=np.asarray(kappa, dtype=float).reshape(-1),
    )
    cfg.validate()
    return cfg


def lift_tau(cfg: TauNConfig) -> TNConfig:
    """Admissible T_N-configuration over [[A, 0], [0, b]] whose diagonal projection is cfg."""
    legs = [
        (admissible_block(cfg.p[j], cfg.alpha[j], cfg.s[j], cfg.beta[j]), cfg.kappa[j])
        for j in range(cfg.N)
    ]
    return build_tn(lift_diag(cfg.rho), legs, dims=cfg.dims)


def tau_residual_parts(
    cfg: TauNConfig, sigma: Optional[FluxFunction] = None
) -> dict[str, np.ndarray]:
    """Named residual blocks; the graph block is omitted when sigma is None."""
    p, alpha, s, beta = cfg.p, cfg.alpha, cfg.s, cfg.beta
    parts = {
        "time_p": np.einsum("j,ji->i", s, p),
        "time_beta": np.einsum("j,jik->ik", s, beta).ravel(),
        "space_p": np.einsum("ji,jk->ik", p, alpha).ravel(),
        "space_beta": np.einsum("jik,jl->ikl", beta, alpha).ravel(),
        "orthogonality": np.einsum("jik,jk->ji", beta, alpha).ravel(),
        "closure": np.sum([g.vector() for g in cfg.gammas()], axis=0),
    }
    if sigma is not None:
        parts["graph"] = np.concatenate([(c.b - sigma(c.A)).ravel() for c in cfg.corners()])
    return parts


def tau_residual(cfg: TauNConfig, sigma: Optional[FluxFunction] = None) -> np.ndarray:
    """Concatenated residual; zero iff cfg is a tau_N-configuration (in K when sigma is given)."""
    return np.concatenate(list(tau_residual_parts(cfg, sigma).values()))


@dataclass(frozen=True)
class GaugeOptions:
    """
    Gauge fixing used by solve_tau.

    Attributes:
        unit_alpha: Impose |alpha_j|^2 = 1.
        fix_time: Keep s_1 at its initial value.
        fix_size: Keep |gamma_1| at its initial value, which excludes the collapse to the base.
    """

    unit_alpha: bool = True
    fix_time: bool = True
    fix_size: bool = True


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = SOLVER_MAX_ITER
    tol: float = SOLVER_TOL
    damping: float = 1e-3
    fd_step: float = 1e-7


@dataclass
class TauSolution:
    config: TauNConfig
    iterations: int
    residual: float


def _pack(cfg: TauNConfig) -> np.ndarray:
    return np.concatenate(
        [
            cfg.rho.A.ravel(),
            cfg.rho.b.ravel(),
            cfg.p.ravel(),
            cfg.alpha.ravel(),
            cfg.s,
            cfg.beta.ravel(),
        ]
    )


def _unpack(x: np.ndarray, like: TauNConfig) -> TauNConfig:
    N = like.N
    m, n = like.dims.m, like.dims.n
    sizes = [m * n, m * n, N * m, N * n, N, N * m * n]
    chunks = np.split(x, np.cumsum(sizes)[:-1])
    return replace(
        like,
        rho=DiagPoint(chunks[0].reshape(m, n), chunks[1].reshape(m, n)),
        p=chunks[2].reshape(N, m),
        alpha=chunks[3].reshape(N, n),
        s=chunks[4].copy(),
        beta=chunks[5].reshape(N, m, n),
    )


def solve_tau(
    sigma: FluxFunction,
    N: int,
    init: TauNConfig,
    gauge: GaugeOptions = GaugeOptions(),
    opts: SolverOptions = SolverOptions(),
) -> TauSolution:
    """
    Levenberg-Marquardt on the embedded tau_N residual plus gauge equations.

    Raises:
        ConvergenceError: The residual stalls above opts.tol; carries the best iterate.
    """
    if init.N != N:
        raise DimensionError(f"initial configuration has {init.N} legs, expected {N}")
    if init.dims.m != sigma.m or init.dims.n != sigma.n:
        raise DimensionError(
            f"configuration dims {init.dims} do not match flux ({sigma.m}, {sigma.n})"
        )
    s_ref = float(init.s[0])
    size_ref = init.gammas()[0].norm()

    def _fun(x: np.ndarray) -> np.ndarray:
        cfg = _unpack(x, init)
        extra = []
        if gauge.unit_alpha:
            extra.append(np.sum(cfg.alpha**2, axis=1) - 1.0)
        if gauge.fix_time:
            extra.append(np.array([cfg.s[0] - s_ref]))
        if gauge.fix_size:
            extra.append(np.array([cfg.gammas()[0].norm() - size_ref]))
        return np.concatenate([tau_residual(cfg, sigma)] + extra)

    def _jac(x: np.ndarray) -> np.ndarray:
        cols = []
        for k in range(x.size):
            h = opts.fd_step * (1.0 + abs(x[k]))
            e = np.zeros_like(x)
            e[k] = h
            cols.append((_fun(x + e) - _fun(x - e)) / (2.0 * h))
        return np.stack(cols, axis=1)

    x = _pack(init)
    r = _fun(x)
    cost = float(r @ r)
    lam = opts.damping
    it = 0
    while np.max(np.abs(r)) > opts.tol and it < opts.max_iter:
        it += 1
        J = _jac(x)
        H = J.T @ J
        g = J.T @ r
        step, *_ = np.linalg.lstsq(H + lam * np.diag(np.diag(H) + 1e-12), -g, rcond=None)
        x_new = x + step
        r_new = _fun(x_new)
        cost_new = float(r_new @ r_new)
        if np.isfinite(cost_new) and cost_new < cost:
            x, r, cost = x_new, r_new, cost_new
            lam = max(lam / 3.0, 1e-15)
        else:
            lam *= 2.0
            if lam > 1e12:
                break
        logger.debug("solve_tau iter %d: |r|_inf=%.3e lambda=%.1e", it, np.max(np.abs(r)), lam)

    best = _unpack(x, init)
    res = float(np.max(np.abs(r)))
    if res > opts.tol:
        raise ConvergenceError(
            f"tau solver stalled at residual {res:.3e} after {it} iterations", best, res
        )
    logger.info("solve_tau converged in %d iterations (residual %.3e)", it, res)
    return TauSolution(config=best, iterations=it, residual=res)
