"""
Uniform space-time grids, fields w = [u, (v^i)] sampled on them and dyadic cube covers.

Nodes are cell centres origin + (k + 1/2) h, the last axis is time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import binary_erosion

from nonunique.config import MIN_RESOLUTION
from nonunique.errors import DimensionError, PreconditionError, ResolutionError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSpec:
    """
    A box in R^{n+1} with a uniform cell-centred node lattice.

    Attributes:
        origin: Lower corner, one entry per axis.
        edges: Edge lengths per axis.
        resolution: Nodes per axis.
    """

    origin: tuple[float, ...]
    edges: tuple[float, ...]
    resolution: tuple[int, ...]

    def __post_init__(self) -> None:
        axes = {len(self.origin), len(self.edges), len(self.resolution)}
        if len(axes) != 1 or len(self.origin) < 2:
            raise DimensionError(
                f"origin, edges and resolution need one entry per axis (at least 2), got "
                f"{len(self.origin)}, {len(self.edges)}, {len(self.resolution)}"
            )
        if any(e <= 0 for e in self.edges):
            raise PreconditionError(f"edge lengths must be positive, got {self.edges}")
        if any(r < MIN_RESOLUTION for r in self.resolution):
            raise ResolutionError(
                f"resolution must be at least {MIN_RESOLUTION} per axis, got {self.resolution}"
            )

    @classmethod
    def cube(
        cls, n: int, resolution: int, origin: Optional[Sequence[float]] = None, edge: float = 1.0
    ) -> "GridSpec":
        origin = tuple(float(o) for o in origin) if origin is not None else (0.0,) * (n + 1)
        return cls(
            origin=origin, edges=(float(edge),) * (n + 1), resolution=(int(resolution),) * (n + 1)
        )

    @property
    def ndim(self) -> int:
        return len(self.resolution)

    @property
    def n(self) -> int:
        """Spatial dimension."""
        return self.ndim - 1

    @property
    def spacing(self) -> np.ndarray:
        return np.asarray(self.edges, dtype=float) / np.asarray(self.resolution, dtype=float)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.resolution)

    @property
    def volume(self) -> float:
        return float(np.prod(self.edges))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis(self, k: int) -> np.ndarray:
        return self.origin[k] + (np.arange(self.resolution[k]) + 0.5) * self.spacing[k]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape (*resolution, ndim)."""
        axes = [self.axis(k) for k in range(self.ndim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def contains_box(
        self, origin: Sequence[float], edges: Sequence[float], tol: float = 1e-12
    ) -> bool:
        lo = np.asarray(origin, dtype=float)
        hi = lo + np.asarray(edges, dtype=float)
        own_lo = np.asarray(self.origin, dtype=float)
        own_hi = own_lo + np.asarray(self.edges, dtype=float)
        return bool(np.all(lo >= own_lo - tol) and np.all(hi <= own_hi + tol))

    def subgrid(self, start: Sequence[int], size: Sequence[int]) -> "GridSpec":
        """The grid of the node block starting at index start with size nodes per axis."""
        h = self.spacing
        origin = tuple(float(self.origin[k] + start[k] * h[k]) for k in range(self.ndim))
        edges = tuple(float(size[k] * h[k]) for k in range(self.ndim))
        return GridSpec(origin=origin, edges=edges, resolution=tuple(int(s) for s in size))


def boundary_layer_mask(shape: tuple[int, ...], layers: int) -> np.ndarray:
    """True on the outermost `layers` node layers of every axis."""
    mask = np.zeros(shape, dtype=bool)
    for k, r in enumerate(shape):
        idx = [slice(None)] * len(shape)
        idx[k] = slice(0, min(layers, r))
        mask[tuple(idx)] = True
        idx[k] = slice(max(r - layers, 0), r)
        mask[tuple(idx)] = True
    return mask


def erode(mask: np.ndarray, layers: int) -> np.ndarray:
    """Remove `layers` node layers from a mask (6-connected), also at the grid boundary."""
    if layers <= 0:
        return mask.copy()
    return binary_erosion(mask, iterations=layers, border_value=0)


@dataclass
class GridField:
    """
    Samples of w = [u, (v^i)] on a grid.

    Attributes:
        grid: The grid.
        u: Shape (*resolution, m).
        v: Shape (*resolution, m, n).
    """

    grid: GridSpec
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        shape = self.grid.shape
        if self.u.shape[:-1] != shape or self.v.shape[:-2] != shape:
            raise DimensionError(
                f"field samples must start with grid shape {shape}, "
                f"got {self.u.shape} and {self.v.shape}"
            )
        if self.v.shape[-2:] != (self.u.shape[-1], self.grid.n):
            raise DimensionError(
                f"v must have trailing shape ({self.u.shape[-1]}, {self.grid.n}), "
                f"got {self.v.shape[-2:]}"
            )

    @classmethod
    def zeros(cls, grid: GridSpec, m: int) -> "GridField":
        return cls(grid, np.zeros(grid.shape + (m,)), np.zeros(grid.shape + (m, grid.n)))

    @property
    def m(self) -> int:
        return int(self.u.shape[-1])

    @property
    def n(self) -> int:
        return self.grid.n

    def __add__(self, other: "GridField") -> "GridField":
        if other.grid.shape != self.grid.shape:
            raise DimensionError(
                f"cannot add fields on grids {self.grid.shape} and {other.grid.shape}"
            )
        return GridField(self.grid, self.u + other.u, self.v + other.v)

    def copy(self) -> "GridField":
        return GridField(self.grid, self.u.copy(), self.v.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v)))

    def sup_norm(self) -> float:
        return float(max(np.max(np.abs(self.u)), np.max(np.abs(self.v))))

    def _grad(self, arr: np.ndarray) -> np.ndarray:
        """Central differences inside, one-sided at the boundary; derivative axis appended."""
        axes = tuple(range(self.grid.ndim))
        parts = np.gradient(arr, *self.grid.spacing, axis=axes)
        return np.stack(parts, axis=-1)

    def grad_u(self) -> np.ndarray:
        """Shape (*resolution, m, n + 1): rows (D u^i, u^i_t)."""
        return self._grad(self.u)

    def grad_v(self) -> np.ndarray:
        """Shape (*resolution, m, n, n + 1): entry [i, k, l] is d_l v^{i,k}."""
        return self._grad(self.v)

    def gradient(self) -> np.ndarray:
        """Dense block gradient per node, shape (*resolution, m + nm, n + 1)."""
        gu = self.grad_u()
        gv = self.grad_v()
        gv = gv.reshape(gv.shape[:-3] + (self.m * self.n, self.n + 1))
        return np.concatenate([gu, gv], axis=-2)

    def Du(self) -> np.ndarray:
        return self.grad_u()[..., : self.n]

    def u_t(self) -> np.ndarray:
        return self.grad_u()[..., self.n]

    def v_t(self) -> np.ndarray:
        return self.grad_v()[..., self.n]

    def div_v(self) -> np.ndarray:
        """Spatial divergence of each v^i, shape (*resolution, m)."""
        return np.trace(self.grad_v()[..., : self.n], axis1=-2, axis2=-1)


@dataclass(frozen=True)
class DyadicCube:
    """Node block start + [0, size)^{ndim}."""

    start: tuple[int, ...]
    size: int

    def slices(self) -> tuple[slice, ...]:
        return tuple(slice(s, s + self.size) for s in self.start)

    def subgrid(self, grid: GridSpec) -> GridSpec:
        return grid.subgrid(self.start, (self.size,) * grid.ndim)


@dataclass
class CubeCover:
    """
    Disjoint dyadic cubes inside a node mask.

    Attributes:
        cubes: Accepted cubes, coarse levels first.
        covered_nodes: Nodes inside accepted cubes.
        mask_nodes: Nodes of the mask.
    """

    cubes: list[DyadicCube] = field(default_factory=list)
    covered_nodes: int = 0
    mask_nodes: int = 0

    @property
    def uncovered_fraction(self) -> float:
        if self.mask_nodes == 0:
            return 0.0
        return 1.0 - self.covered_nodes / self.mask_nodes

    def covered_mask(self, shape: tuple[int, ...]) -> np.ndarray:
        out = np.zeros(shape, dtype=bool)
        for cube in self.cubes:
            out[cube.slices()] = True
        return out


def _blocks(mask: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-block all() and any() of a mask tiled by blocks of `size` nodes."""
    shape = []
    for r in mask.shape:
        shape.extend([r // size, size])
    tiled = mask.reshape(shape)
    inner = tuple(range(1, 2 * mask.ndim, 2))
    return tiled.all(axis=inner), tiled.any(axis=inner)


def dyadic_cover(mask: np.ndarray, max_size: int, budget: float, min_size: int = 1) -> CubeCover:
    """
    Greedy dyadic cover of a node mask.

    Blocks entirely inside the mask are accepted level by level, halving the block size, until
    the uncovered share of the mask is at most `budget` or `min_size` is reached.
    """
    mask = np.asarray(mask, dtype=bool)
    size = 1
    while size * 2 <= max_size and all(r % (size * 2) == 0 for r in mask.shape):
        size *= 2
    total = int(mask.sum())
    cover = CubeCover(mask_nodes=total)
    if total == 0:
        return cover
    pending: Optional[np.ndarray] = None
    while True:
        full, anyb = _blocks(mask, size)
        if pending is None:
            pending = np.ones_like(full)
        accept = pending & full
        for idx in np.argwhere(accept):
            cover.cubes.append(DyadicCube(tuple(int(i) * size for i in idx), size))
        cover.covered_nodes += int(accept.sum()) * size**mask.ndim
        if cover.uncovered_fraction <= budget or size // 2 < max(min_size, 1):
            break
        pending = pending & anyb & ~full
        for axis in range(mask.ndim):
            pending = np.repeat(pending, 2, axis=axis)
        size //= 2
    logger.debug(
        "dyadic cover: %d cubes, uncovered fraction %.4f (budget %.4f)",
        len(cover.cubes),
        cover.uncovered_fraction,
        budget,
    )
    return cover
