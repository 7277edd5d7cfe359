"""
Machinery for a single unknown function (m = 1): the pair functions G and delta, equal-flux
pairs, decomposition of points onto equal-flux pairs and the resulting open set Sigma.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from nonunique.config import DELTA_MIN, NEWTON_MAX_ITER, SEPARATION_MIN, SIGMA_ETA
from nonunique.core.blocks import DiagPoint
from nonunique.core.flux import FluxFunction
from nonunique.errors import ConvergenceError, DecompositionError, DimensionError, PreconditionError
from nonunique.tau.residual import TauNConfig, make_tau

logger = logging.getLogger(__name__)


def _require_scalar(sigma: FluxFunction) -> None:
    if sigma.m != 1:
        raise DimensionError(f"scalar machinery needs m = 1, got m = {sigma.m}")


def _sig(sigma: FluxFunction, p: np.ndarray) -> np.ndarray:
    return sigma(np.asarray(p, dtype=float).reshape(1, -1))[0]


def _dsig(sigma: FluxFunction, p: np.ndarray) -> np.ndarray:
    return sigma.derivative(np.asarray(p, dtype=float).reshape(1, -1))


def m1_G(sigma: FluxFunction, p: np.ndarray, q: np.ndarray) -> float:
    """G(p, q) = (sigma(p) - sigma(q)) . (p - q)."""
    _require_scalar(sigma)
    p, q = np.atleast_1d(np.asarray(p, dtype=float)), np.atleast_1d(np.asarray(q, dtype=float))
    return float((_sig(sigma, p) - _sig(sigma, q)) @ (p - q))


def m1_delta_matrix(sigma: FluxFunction, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    _require_scalar(sigma)
    p, q = np.atleast_1d(np.asarray(p, dtype=float)), np.atleast_1d(np.asarray(q, dtype=float))
    n = p.size
    P, Q = _dsig(sigma, p), _dsig(sigma, q)
    diff = _sig(sigma, p) - _sig(sigma, q)
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = P - Q
    M[:n, n] = diff - Q @ (p - q)
    M[n, :n] = diff + P.T @ (p - q)
    return M


def m1_delta(sigma: FluxFunction, p: np.ndarray, q: np.ndarray) -> float:
    """The (n+1) x (n+1) determinant whose nonvanishing makes Sigma open."""
    return float(np.linalg.det(m1_delta_matrix(sigma, p, q)))


@dataclass
class EqualFluxPair:
    """Equal-flux pair with its certificates."""

    p_plus: np.ndarray
    p_minus: np.ndarray
    G: float
    delta: float
    flux_gap: float


def find_equal_flux_pair(
    sigma: FluxFunction,
    seeds: tuple[tuple[float, float], tuple[float, float]],
    delta_min: float = DELTA_MIN,
    direction: Optional[np.ndarray] = None,
    scan: int = 64,
) -> EqualFluxPair:
    """
    Root-find G(p+, p-) = 0 with p+ = t+ e and p- = t- e along a direction e.

    The first seed's midpoint is tried first; otherwise the first seed is scanned. For each
    candidate t+ the equation sigma(t e) . e = sigma(t+ e) . e is bracketed on the second seed.

    Raises:
        ConvergenceError: No certified pair exists inside the seeds.
    """
    _require_scalar(sigma)
    (a1, b1), (a2, b2) = sorted(seeds[0]), sorted(seeds[1])
    if max(a1, a2) < min(b1, b2):
        raise PreconditionError(f"seed intervals {seeds[0]} and {seeds[1]} overlap")
    n = sigma.n
    e = np.ones(n) if direction is None else np.asarray(direction, dtype=float).reshape(n)
    e = e / np.linalg.norm(e)

    def g(t: float) -> float:
        return float(_sig(sigma, t * e) @ e)

    grid2 = np.linspace(a2, b2, scan + 1)
    values2 = np.array([g(t) for t in grid2])
    candidates = [0.5 * (a1 + b1)] + list(np.linspace(a1, b1, scan + 2)[1:-1])
    for t_plus in candidates:
        level = g(t_plus)
        shifted = values2 - level
        for k in np.flatnonzero(np.sign(shifted[:-1]) * np.sign(shifted[1:]) <= 0):
            t_minus = brentq(lambda t: g(t) - level, grid2[k], grid2[k + 1], xtol=1e-15, rtol=1e-15)
            p_plus, p_minus = t_plus * e, t_minus * e
            delta = m1_delta(sigma, p_plus, p_minus)
            if abs(delta) > delta_min:
                gap = float(np.linalg.norm(_sig(sigma, p_plus) - _sig(sigma, p_minus)))
                logger.info("equal-flux pair t+=%.6g t-=%.6g delta=%.4g", t_plus, t_minus, delta)
                return EqualFluxPair(p_plus, p_minus, m1_G(sigma, p_plus, p_minus), delta, gap)
    raise ConvergenceError(
        f"no equal-flux pair in seeds: flux range {min(values2):.4g}..{max(values2):.4g} on the "
        f"second seed, {g(a1):.4g}..{g(b1):.4g} at the ends of the first seed"
    )


@dataclass(frozen=True)
class M1Scalars:
    """
    Reference data of the scalar Sigma set.

    Attributes:
        delta_plus: Interval (along the pair direction) holding p+.
        delta_minus: Interval holding p-.
        p_plus: Reference p+.
        p_minus: Reference p-.
        lam: Reference weight in (0, 1).
        direction: Unit direction the intervals are measured along.
    """

    delta_plus: tuple[float, float]
    delta_minus: tuple[float, float]
    p_plus: np.ndarray
    p_minus: np.ndarray
    lam: float = 0.5
    direction: Optional[np.ndarray] = None


@dataclass
class Decomposition:
    lam: float
    p_plus: np.ndarray
    p_minus: np.ndarray
    residual: float
    iterations: int


def _F(
    sigma: FluxFunction, p_plus: np.ndarray, lam: float, p: np.ndarray, beta: np.ndarray
) -> np.ndarray:
    q = (p - lam * p_plus) / (1.0 - lam)
    s_plus = _sig(sigma, p_plus)
    first = lam * s_plus + (1.0 - lam) * _sig(sigma, q) - beta
    second = (s_plus - beta) @ (p_plus - p)
    return np.append(first, second)


def _F_jac(
    sigma: FluxFunction, p_plus: np.ndarray, lam: float, p: np.ndarray, beta: np.ndarray
) -> np.ndarray:
    n = p.size
    q = (p - lam * p_plus) / (1.0 - lam)
    s_plus, s_q = _sig(sigma, p_plus), _sig(sigma, q)
    d_plus, d_q = _dsig(sigma, p_plus), _dsig(sigma, q)
    J = np.zeros((n + 1, n + 1))
    J[:n, :n] = lam * (d_plus - d_q)
    J[:n, n] = s_plus - s_q - d_q @ (p_plus - q)
    J[n, :n] = d_plus.T @ (p_plus - p) + s_plus - beta
    return J


def decompose_sigma_point(
    sigma: FluxFunction,
    point: tuple[np.ndarray, np.ndarray] | DiagPoint,
    seed: tuple[np.ndarray, float],
    tol: float = 1e-12,
    max_iter: int = NEWTON_MAX_ITER,
    separation: float = SEPARATION_MIN,
    scalars: Optional[M1Scalars] = None,
) -> Decomposition:
    """
    Newton's method for [p, beta] = lam [p+, sigma(p+)] + (1 - lam) [p-, sigma(p-)].

    Raises:
        DecompositionError: Newton diverges, lam leaves (0, 1) or the pair collapses.
    """
    _require_scalar(sigma)
    if isinstance(point, DiagPoint):
        p, beta = point.A[0].copy(), point.b[0].copy()
    else:
        p = np.atleast_1d(np.asarray(point[0], dtype=float))
        beta = np.atleast_1d(np.asarray(point[1], dtype=float))
    p_plus = np.atleast_1d(np.asarray(seed[0], dtype=float)).copy()
    lam = float(seed[1])
    if not 0.0 < lam < 1.0:
        raise PreconditionError(f"seed weight must lie in (0, 1), got {lam}")

    F = _F(sigma, p_plus, lam, p, beta)
    it = 0
    while np.max(np.abs(F)) > tol:
        if it >= max_iter:
            raise DecompositionError(f"Newton did not converge (|F| = {np.max(np.abs(F)):.3e})")
        it += 1
        J = _F_jac(sigma, p_plus, lam, p, beta)
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise DecompositionError(f"singular Newton system at lam={lam:.4g}") from exc
        t = 1.0
        if lam + step[-1] <= 0.0 or lam + step[-1] >= 1.0:
            limit = (-lam if step[-1] < 0 else 1.0 - lam) / step[-1]
            t = 0.9 * limit
        norm0 = np.linalg.norm(F)
        for _ in range(30):
            cand_plus, cand_lam = p_plus + t * step[:-1], lam + t * step[-1]
            F_new = _F(sigma, cand_plus, cand_lam, p, beta)
            if np.all(np.isfinite(F_new)) and np.linalg.norm(F_new) < norm0:
                break
            t *= 0.5
        else:
            raise DecompositionError(f"Newton line search failed at |F| = {norm0:.3e}")
        p_plus, lam, F = cand_plus, cand_lam, F_new

    if not 0.0 < lam < 1.0:
        raise DecompositionError(f"weight {lam:.6g} left (0, 1)")
    p_minus = (p - lam * p_plus) / (1.0 - lam)
    if np.linalg.norm(p_plus - p_minus) < separation:
        gap = np.linalg.norm(p_plus - p_minus)
        raise DecompositionError(f"pair collapsed (|p+ - p-| = {gap:.3e})")
    if scalars is not None:
        _check_intervals(p_plus, p_minus, scalars)
    recombined = np.concatenate(
        [
            lam * p_plus + (1 - lam) * p_minus,
            lam * _sig(sigma, p_plus) + (1 - lam) * _sig(sigma, p_minus),
        ]
    )
    residual = float(np.max(np.abs(recombined - np.concatenate([p, beta]))))
    return Decomposition(lam=lam, p_plus=p_plus, p_minus=p_minus, residual=residual, iterations=it)


def _position(p: np.ndarray, scalars: M1Scalars) -> float:
    e = scalars.direction if scalars.direction is not None else np.ones(p.size) / np.sqrt(p.size)
    return float(p @ e)


def _check_intervals(p_plus: np.ndarray, p_minus: np.ndarray, scalars: M1Scalars) -> None:
    t_plus, t_minus = _position(p_plus, scalars), _position(p_minus, scalars)
    lo, hi = scalars.delta_plus
    if not lo < t_plus < hi:
        raise DecompositionError(f"p+ = {t_plus:.6g} outside {scalars.delta_plus}")
    lo, hi = scalars.delta_minus
    if not lo < t_minus < hi:
        raise DecompositionError(f"p- = {t_minus:.6g} outside {scalars.delta_minus}")


def decompose_many(
    sigma: FluxFunction,
    p: np.ndarray,
    beta: np.ndarray,
    scalars: M1Scalars,
    tol: float = 1e-12,
    max_iter: int = NEWTON_MAX_ITER,
    separation: float = SEPARATION_MIN,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Vectorized n = 1 decomposition over arrays of points.

    Returns:
        (lam, p_plus, p_minus, ok) with ok marking points decomposed inside the intervals.
    """
    _require_scalar(sigma)
    if sigma.n != 1:
        raise DimensionError(f"vectorized decomposition needs n = 1, got n = {sigma.n}")
    p = np.asarray(p, dtype=float)
    beta = np.asarray(beta, dtype=float)
    f = lambda x: sigma(x[..., None, None])[..., 0, 0]  # noqa: E731
    df = lambda x: sigma.derivative(x[..., None, None])[..., 0, 0]  # noqa: E731
    a, b = float(scalars.p_plus[0]), float(scalars.p_minus[0])
    lam = np.clip((b - p) / (b - a), 0.05, 0.95)
    xp = np.full_like(p, a)
    with np.errstate(all="ignore"):
        for _ in range(max_iter):
            q = (p - lam * xp) / (1.0 - lam)
            sp, sq = f(xp), f(q)
            F1 = lam * sp + (1.0 - lam) * sq - beta
            F2 = (sp - beta) * (xp - p)
            if np.nanmax(np.abs(np.concatenate([F1.ravel(), F2.ravel()])), initial=0.0) <= tol:
                break
            done = (np.abs(F1) <= tol) & (np.abs(F2) <= tol)
            dp, dq = df(xp), df(q)
            j11, j12 = lam * (dp - dq), sp - sq - dq * (xp - q)
            j21 = dp * (xp - p) + sp - beta
            det = -j12 * j21
            step_x = np.where(done, 0.0, j12 * F2 / det)
            step_l = np.where(done, 0.0, -(j11 * F2 - j21 * F1) / det)
            new_lam = lam + step_l
            over = (new_lam <= 0.0) | (new_lam >= 1.0)
            shrink = np.where(over, 0.9 * np.where(step_l < 0, -lam, 1.0 - lam) / step_l, 1.0)
            xp = xp + shrink * step_x
            lam = lam + shrink * step_l
        q = (p - lam * xp) / (1.0 - lam)
        F1 = lam * f(xp) + (1.0 - lam) * f(q) - beta
        F2 = (f(xp) - beta) * (xp - p)
        ok = (
            np.isfinite(F1)
            & (np.abs(F1) <= 1e3 * tol + 1e-10)
            & (np.abs(F2) <= 1e3 * tol + 1e-10)
            & (lam > 0.0)
            & (lam < 1.0)
            & (np.abs(xp - q) >= separation)
            & (xp > scalars.delta_plus[0])
            & (xp < scalars.delta_plus[1])
            & (q > scalars.delta_minus[0])
            & (q < scalars.delta_minus[1])
        )
    return lam, xp, q, ok


def scalar_tau2(
    sigma: FluxFunction,
    p_plus: np.ndarray,
    p_minus: np.ndarray,
    kappa: tuple[float, float] = (2.0, 1.0 + SIGMA_ETA),
) -> TauNConfig:
    """
    The tau_2-configuration with corners [p+, sigma(p+)] and [p-, sigma(p-)].

    The legs are +-gamma with gamma = (xi_1 - xi_2) / (kappa_1 + kappa_2 - 1) and
    alpha = (p+ - p-) / |p+ - p-|. G = 0 makes the flux difference orthogonal to alpha, so it is
    carried by s beta with beta orthogonal to alpha; the second leg flips p and beta and keeps s.
    """
    _require_scalar(sigma)
    p_plus, p_minus = np.atleast_1d(p_plus).astype(float), np.atleast_1d(p_minus).astype(float)
    n = sigma.n
    k1, k2 = float(kappa[0]), float(kappa[1])
    span = k1 + k2 - 1.0
    diff = p_plus - p_minus
    length = float(np.linalg.norm(diff))
    alpha = diff / length
    flux_diff = _sig(sigma, p_plus) - _sig(sigma, p_minus)
    along = float(flux_diff @ alpha)
    perp = flux_diff - along * alpha
    if abs(along) > 1e-9 * (1.0 + np.linalg.norm(flux_diff)):
        raise PreconditionError(f"pair is not equal-flux along its direction (gap {along:.3e})")
    gamma_p = length / span
    s_val = float(np.linalg.norm(perp)) / span
    beta = perp / np.linalg.norm(perp) if s_val > 0 else np.zeros(n)
    rho_A = p_plus - k1 * gamma_p * alpha
    rho_b = _sig(sigma, p_plus) - k1 * s_val * beta
    rho = DiagPoint(rho_A.reshape(1, n), rho_b.reshape(1, n))
    return make_tau(
        rho,
        p=np.array([[gamma_p], [-gamma_p]]),
        alpha=np.stack([alpha, alpha]),
        s=np.array([s_val, s_val]),
        beta=np.stack([beta.reshape(1, n), -beta.reshape(1, n)]),
        kappa=np.array([k1, k2]),
    )


class SigmaSet(ABC):
    """Provider of tau_N-configurations on the flux graph through points of an open set."""

    tube_radius: float

    @abstractmethod
    def configure(self, point: DiagPoint) -> TauNConfig:
        """Return an embedded configuration whose segment set contains point."""

    @abstractmethod
    def contains(self, A: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Node-wise membership for arrays of shape (..., m, n)."""


@dataclass
class ScalarSigmaSet(SigmaSet):
    """
    Sigma for m = 1 built from equal-flux pairs.

    Attributes:
        sigma: The flux.
        scalars: Intervals and reference pair.
        tube_radius: Radius of the closed neighborhoods used by the refinement.
        eta: kappa_2 = 1 + eta for provided configurations.
    """

    sigma: FluxFunction
    scalars: M1Scalars
    tube_radius: float = 0.05
    eta: float = SIGMA_ETA
    _cache: dict = field(default_factory=dict, repr=False)

    def seed_for(self, p: np.ndarray) -> tuple[np.ndarray, float]:
        a, b = self.scalars.p_plus, self.scalars.p_minus
        e = a - b
        lam = float(np.clip((p - b) @ e / (e @ e), 0.05, 0.95))
        return a.copy(), lam

    def decompose(self, point: DiagPoint) -> Decomposition:
        p = point.A[0]
        return decompose_sigma_point(self.sigma, point, self.seed_for(p), scalars=self.scalars)

    def configure(self, point: DiagPoint) -> TauNConfig:
        key = tuple(np.round(point.vector(), 12))
        if key in self._cache:
            return self._cache[key]
        dec = self.decompose(point)
        cfg = scalar_tau2(self.sigma, dec.p_plus, dec.p_minus, kappa=(2.0, 1.0 + self.eta))
        self._cache[key] = cfg
        return cfg

    def contains(self, A: np.ndarray, b: np.ndarray) -> np.ndarray:
        A, b = np.asarray(A, dtype=float), np.asarray(b, dtype=float)
        if self.sigma.n == 1:
            return decompose_many(self.sigma, A[..., 0, 0], b[..., 0, 0], self.scalars)[3]
        flat_A = A.reshape(-1, *A.shape[-2:])
        flat_b = b.reshape(-1, *b.shape[-2:])
        out = np.zeros(flat_A.shape[0], dtype=bool)
        for k in range(flat_A.shape[0]):
            try:
                self.decompose(DiagPoint(flat_A[k], flat_b[k]))
                out[k] = True
            except (DecompositionError, PreconditionError):
                out[k] = False
        return out.reshape(A.shape[:-2])


def scalar_sigma_set(
    sigma: FluxFunction,
    seeds: tuple[tuple[float, float], tuple[float, float]],
    tube_radius: float = 0.05,
    delta_min: float = DELTA_MIN,
    eta: float = SIGMA_ETA,
    direction: Optional[np.ndarray] = None,
) -> ScalarSigmaSet:
    """Certify an equal-flux pair inside the seeds and wrap it as a Sigma provider."""
    pair = find_equal_flux_pair(sigma, seeds, delta_min=delta_min, direction=direction)
    unit = None
    if direction is not None:
        unit = np.asarray(direction, dtype=float) / np.linalg.norm(direction)
    scalars = M1Scalars(
        delta_plus=tuple(sorted(seeds[0])),  # type: ignore[arg-type]
        delta_minus=tuple(sorted(seeds[1])),  # type: ignore[arg-type]
        p_plus=pair.p_plus,
        p_minus=pair.p_minus,
        direction=unit,
    )
    return ScalarSigmaSet(sigma=sigma, scalars=scalars, tube_radius=tube_radius, eta=eta)
