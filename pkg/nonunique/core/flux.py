"""
Diffusion flux functions sigma: M^{m x n} -> M^{m x n} and the built-in catalog.

Every flux evaluates over leading array axes: an input of shape (..., m, n) returns an
array of the same shape. Jacobians use row-major flattening of both sides.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from nonunique.config import FD_STEP
from nonunique.core.blocks import DiagPoint, block_compose, BlockMatrix
from nonunique.errors import CapabilityError, DimensionError, PreconditionError

logger = logging.getLogger(__name__)

FLUX_LABELS = ("identity", "linear", "perona-malik", "cubic")


@dataclass(frozen=True)
class FluxFunction:
    """
    A flux sigma with optional analytic derivative.

    Attributes:
        evaluate: Vectorized map (..., m, n) -> (..., m, n).
        label: Catalog label or a user-chosen name.
        m: Target dimension the flux is defined for.
        n: Spatial dimension the flux is defined for.
        jacobian: Vectorized map (..., m, n) -> (..., mn, mn), or None.
        allow_fd: Whether a central finite-difference Jacobian may replace a missing one.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    label: str
    m: int
    n: int
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    allow_fd: bool = True

    def __call__(self, A: np.ndarray) -> np.ndarray:
        A = np.asarray(A, dtype=float)
        if A.shape[-2:] != (self.m, self.n):
            raise DimensionError(
                f"flux '{self.label}' expects trailing shape ({self.m}, {self.n}), got {A.shape}"
            )
        return self.evaluate(A)

    def derivative(self, A: np.ndarray) -> np.ndarray:
        A = np.asarray(A, dtype=float)
        if self.jacobian is not None:
            return self.jacobian(A)
        if not self.allow_fd:
            raise CapabilityError(
                f"flux '{self.label}' has no Jacobian and finite differences are disabled"
            )
        return fd_jacobian(self, A)


def fd_jacobian(sigma: FluxFunction, A: np.ndarray) -> np.ndarray:
    """Central differences with step h_J = FD_STEP * (1 + |A|_inf), per leading index."""
    m, n = sigma.m, sigma.n
    lead = A.shape[:-2]
    flat = A.reshape(*lead, m * n)
    scale = 1.0 + np.max(np.abs(flat), axis=-1, keepdims=True)
    step = FD_STEP * scale
    out = np.empty(lead + (m * n, m * n))
    for k in range(m * n):
        shift = np.zeros(m * n)
        shift[k] = 1.0
        plus = (flat + step * shift).reshape(A.shape)
        minus = (flat - step * shift).reshape(A.shape)
        diff = (sigma(plus) - sigma(minus)).reshape(*lead, m * n)
        out[..., :, k] = diff / (2.0 * step)
    return out


def identity_flux(m: int, n: int) -> FluxFunction:
    size = m * n

    def _jac(A: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.eye(size), A.shape[:-2] + (size, size)).copy()

    return FluxFunction(
        evaluate=lambda A: np.array(A, dtype=float), label="identity", m=m, n=n, jacobian=_jac
    )


def linear_flux(M: np.ndarray, n: int) -> FluxFunction:
    """sigma(A) = M A for a square m x m matrix M."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise DimensionError(f"linear flux matrix must be square, got {M.shape}")
    m = M.shape[0]
    kron = np.kron(M, np.eye(n))

    def _jac(A: np.ndarray) -> np.ndarray:
        return np.broadcast_to(kron, A.shape[:-2] + kron.shape).copy()

    return FluxFunction(
        evaluate=lambda A: np.einsum("ij,...jk->...ik", M, A),
        label="linear",
        m=m,
        n=n,
        jacobian=_jac,
    )


def perona_malik_flux(n: int = 1) -> FluxFunction:
    """Scalar Perona-Malik flux sigma(p) = p / (1 + |p|^2)."""

    def _eval(A: np.ndarray) -> np.ndarray:
        sq = np.sum(A * A, axis=(-2, -1), keepdims=True)
        return A / (1.0 + sq)

    def _jac(A: np.ndarray) -> np.ndarray:
        p = A[..., 0, :]
        sq = np.sum(p * p, axis=-1)[..., None, None]
        outer = p[..., :, None] * p[..., None, :]
        eye = np.eye(n)
        return (eye * (1.0 + sq) - 2.0 * outer) / (1.0 + sq) ** 2

    return FluxFunction(evaluate=_eval, label="perona-malik", m=1, n=n, jacobian=_jac)


def cubic_flux(n: int = 1) -> FluxFunction:
    """Scalar double-well flux sigma(p) = |p|^2 p - p."""

    def _eval(A: np.ndarray) -> np.ndarray:
        sq = np.sum(A * A, axis=(-2, -1), keepdims=True)
        return sq * A - A

    def _jac(A: np.ndarray) -> np.ndarray:
        p = A[..., 0, :]
        sq = np.sum(p * p, axis=-1)[..., None, None]
        outer = p[..., :, None] * p[..., None, :]
        eye = np.eye(n)
        return sq * eye + 2.0 * outer - eye

    return FluxFunction(evaluate=_eval, label="cubic", m=1, n=n, jacobian=_jac)


def get_flux(label: str, m: int = 1, n: int = 1, matrix: Optional[list] = None) -> FluxFunction:
    """Select a catalog flux by label."""
    if label == "identity":
        return identity_flux(m, n)
    if label == "linear":
        if matrix is None:
            raise PreconditionError("linear flux requires a flux matrix")
        return linear_flux(np.asarray(matrix, dtype=float), n)
    if label == "perona-malik":
        if m != 1:
            raise DimensionError(f"perona-malik flux is scalar (m=1), got m={m}")
        return perona_malik_flux(n)
    if label == "cubic":
        if m != 1:
            raise DimensionError(f"cubic flux is scalar (m=1), got m={m}")
        return cubic_flux(n)
    raise PreconditionError(f"unknown flux label '{label}', expected one of {FLUX_LABELS}")


def graph_point(sigma: FluxFunction, A: np.ndarray) -> DiagPoint:
    """The point [A, sigma(A)] of the flux graph."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return DiagPoint(A.copy(), sigma(A))


def graph_lift(sigma: FluxFunction, A: np.ndarray, z: Optional[np.ndarray] = None) -> BlockMatrix:
    """Block matrix over A with b = sigma(A), a = 0 and B^i = (z^i / n) I."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, n = A.shape
    z = np.zeros(m) if z is None else np.asarray(z, dtype=float).reshape(m)
    B = np.stack([(z[i] / n) * np.eye(n) for i in range(m)])
    return block_compose(A, np.zeros(m), B, sigma(A))


@dataclass(frozen=True)
class ConstraintReport:
    """Outcome of a K(z) membership test."""

    member: bool
    flux_residual: float
    trace_residual: float
    tol: float

    def __bool__(self) -> bool:
        return self.member


def in_constraint_set(
    X: BlockMatrix, sigma: FluxFunction, z: np.ndarray, tol: float
) -> ConstraintReport:
    """Test b^i = sigma^i(A) and tr(B^i) = z^i, both in the max norm."""
    if tol <= 0:
        raise PreconditionError(f"membership tolerance must be positive, got {tol}")
    z = np.asarray(z, dtype=float).reshape(-1)
    flux_res = float(np.max(np.abs(X.b - sigma(X.A))))
    traces = np.trace(X.B, axis1=1, axis2=2)
    trace_res = float(np.max(np.abs(traces - z)))
    member = max(flux_res, trace_res) <= tol
    return ConstraintReport(
        member=member, flux_residual=flux_res, trace_residual=trace_res, tol=tol
    )
