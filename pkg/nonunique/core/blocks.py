"""
Block space-time matrices X = [[A, a], [(B^i), (b^i)]] and their diagonal projection.

A dense block matrix has shape (m + n*m) x (n + 1). Rows 0..m-1 hold [A | a]; the n rows
starting at m + i*n hold [B^i | b^i].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from nonunique.config import RANK_TOL
from nonunique.errors import DimensionError, PreconditionError


@dataclass(frozen=True)
class ProblemDims:
    """Target dimension m and spatial dimension n."""

    m: int
    n: int

    def __post_init__(self) -> None:
        if self.m < 1 or self.n < 1:
            raise DimensionError(f"dimensions must be positive, got m={self.m}, n={self.n}")

    @property
    def block_shape(self) -> tuple[int, int]:
        return (self.m + self.n * self.m, self.n + 1)

    @property
    def diag_size(self) -> int:
        return 2 * self.m * self.n


@dataclass(frozen=True, eq=False)
class DiagPoint:
    """A point [A, (b^i)] of M^{m x n} x (R^n)^m; b is stored as an m x n array."""

    A: np.ndarray
    b: np.ndarray

    @property
    def dims(self) -> ProblemDims:
        return ProblemDims(*self.A.shape)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.A.ravel(), self.b.ravel()])

    @classmethod
    def from_vector(cls, vec: np.ndarray, dims: ProblemDims) -> "DiagPoint":
        vec = np.asarray(vec, dtype=float)
        size = dims.m * dims.n
        if vec.shape != (2 * size,):
            raise DimensionError(f"diagonal vector must have length {2 * size}, got {vec.shape}")
        return cls(vec[:size].reshape(dims.m, dims.n), vec[size:].reshape(dims.m, dims.n))

    def __add__(self, other: "DiagPoint") -> "DiagPoint":
        return DiagPoint(self.A + other.A, self.b + other.b)

    def __sub__(self, other: "DiagPoint") -> "DiagPoint":
        return DiagPoint(self.A - other.A, self.b - other.b)

    def scaled(self, factor: float) -> "DiagPoint":
        return DiagPoint(factor * self.A, factor * self.b)

    def norm(self) -> float:
        return float(np.linalg.norm(self.vector()))


@dataclass(frozen=True, eq=False)
class BlockMatrix:
    """
    Space-time matrix with blocks A (m x n), a (m), B (m x n x n) and b (m x n).

    Attributes:
        A: Spatial gradient block.
        a: Time derivative column of u.
        B: Stack of spatial gradients of the v^i.
        b: Stack of time derivatives of the v^i.
    """

    A: np.ndarray
    a: np.ndarray
    B: np.ndarray
    b: np.ndarray

    @property
    def dims(self) -> ProblemDims:
        return ProblemDims(*self.A.shape)

    def dense(self) -> np.ndarray:
        return block_to_dense(self)

    def __add__(self, other: "BlockMatrix") -> "BlockMatrix":
        return BlockMatrix(self.A + other.A, self.a + other.a, self.B + other.B, self.b + other.b)


def block_compose(
    A: np.ndarray | Sequence,
    a: np.ndarray | Sequence,
    B: np.ndarray | Sequence,
    b: np.ndarray | Sequence,
) -> BlockMatrix:
    """Assemble a block matrix, validating every block against the shape of A."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2:
        raise DimensionError(f"block A must be a matrix, got shape {A.shape}")
    m, n = A.shape
    a = np.asarray(a, dtype=float).reshape(-1)
    B = np.asarray(B, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != (m,):
        raise DimensionError(f"block a must have shape ({m},), got {a.shape}")
    if B.shape != (m, n, n):
        raise DimensionError(f"block B must have shape ({m}, {n}, {n}), got {B.shape}")
    if b.shape != (m, n):
        raise DimensionError(f"block b must have shape ({m}, {n}), got {b.shape}")
    return BlockMatrix(A.copy(), a.copy(), B.copy(), b.copy())


def block_to_dense(X: BlockMatrix) -> np.ndarray:
    m, n = X.A.shape
    out = np.zeros((m + n * m, n + 1))
    out[:m, :n] = X.A
    out[:m, n] = X.a
    for i in range(m):
        rows = slice(m + i * n, m + (i + 1) * n)
        out[rows, :n] = X.B[i]
        out[rows, n] = X.b[i]
    return out


def block_from_dense(M: np.ndarray, dims: ProblemDims) -> BlockMatrix:
    M = np.asarray(M, dtype=float)
    if M.shape != dims.block_shape:
        raise DimensionError(
            f"dense block matrix must have shape {dims.block_shape}, got {M.shape}"
        )
    m, n = dims.m, dims.n
    B = np.stack([M[m + i * n : m + (i + 1) * n, :n] for i in range(m)])
    b = np.stack([M[m + i * n : m + (i + 1) * n, n] for i in range(m)])
    return BlockMatrix(M[:m, :n].copy(), M[:m, n].copy(), B, b)


def zero_block(dims: ProblemDims) -> BlockMatrix:
    m, n = dims.m, dims.n
    return BlockMatrix(np.zeros((m, n)), np.zeros(m), np.zeros((m, n, n)), np.zeros((m, n)))


def project_diag(X: BlockMatrix) -> DiagPoint:
    """Diagonal projection [A, (b^i)]; the a and B^i blocks are discarded."""
    return DiagPoint(X.A.copy(), X.b.copy())


def project_dense(M: np.ndarray, dims: ProblemDims) -> DiagPoint:
    return project_diag(block_from_dense(M, dims))


def lift_diag(point: DiagPoint) -> np.ndarray:
    """Dense block matrix with zero a and B blocks above a diagonal point."""
    m, n = point.A.shape
    return block_to_dense(BlockMatrix(point.A, np.zeros(m), np.zeros((m, n, n)), point.b))


def numeric_rank(M: np.ndarray, tol: float = RANK_TOL) -> int:
    """Count singular values above tol times the largest one."""
    if tol < 0:
        raise PreconditionError(f"rank tolerance must be nonnegative, got {tol}")
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[0] == 0.0 or not np.isfinite(sv[0]):
        return 0
    return int(np.sum(sv > tol * sv[0]))


def admissible_block(p: np.ndarray, alpha: np.ndarray, s: float, beta: np.ndarray) -> np.ndarray:
    """Dense form of [[p (x) alpha, s p], [(beta^i (x) alpha), (s beta^i)]]."""
    p = np.asarray(p, dtype=float).reshape(-1)
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    beta = np.asarray(beta, dtype=float).reshape(p.size, alpha.size)
    w = np.concatenate([p, beta.ravel()])
    return np.outer(w, np.append(alpha, s))
