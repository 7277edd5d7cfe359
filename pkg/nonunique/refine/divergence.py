"""
A right inverse of the spatial divergence on grid cubes and the rescaling operators that move
unit-cube fields into a cube of the domain.

Arrays carry the grid axes first (spatial axes, then time) followed by any component axes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import RegularGridInterpolator

from nonunique.construct.grid import GridField, GridSpec, boundary_layer_mask
from nonunique.errors import DimensionError, PreconditionError, RangeError

logger = logging.getLogger(__name__)

SLICE_MEAN_TOL = 1e-10


def _unit_profile(r: int, h: float) -> np.ndarray:
    """sin^2 bump vanishing at the first and last node, discrete mass sum(eta) h = 1."""
    k = np.arange(r, dtype=float)
    eta = np.sin(np.pi * k / (r - 1)) ** 2
    eta[0] = eta[-1] = 0.0
    return eta / (eta.sum() * h)


def _antiderivative(u: np.ndarray, h: float) -> np.ndarray:
    v = cumulative_trapezoid(u, dx=h, axis=0, initial=0.0)
    v[-1] = 0.0
    return v


def _invert(u: np.ndarray, h: Sequence[float]) -> np.ndarray:
    """Vector field with divergence u over the leading len(h) axes; components appended last."""
    if len(h) == 1:
        return _antiderivative(u, h[0])[..., None]
    eta = _unit_profile(u.shape[0], h[0])
    shape = (-1,) + (1,) * (u.ndim - 1)
    mass = u.sum(axis=0) * h[0]
    first = _antiderivative(u - eta.reshape(shape) * mass[None], h[0])
    rest = _invert(mass, h[1:])
    return np.concatenate([first[..., None], eta.reshape(shape + (1,)) * rest[None]], axis=-1)


def slice_means(u: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Midpoint-rule spatial integral of u on every time slice."""
    return u.sum(axis=tuple(range(grid.n))) * float(np.prod(grid.spacing[: grid.n]))


def _check_preconditions(u: np.ndarray, grid: GridSpec) -> None:
    scale = float(np.max(np.abs(u)))
    if scale == 0.0:
        return
    means = np.abs(slice_means(u, grid)).reshape(grid.resolution[-1], -1).max(axis=1)
    rel = means / (scale * grid.volume / grid.edges[-1])
    worst = int(np.argmax(rel))
    if rel[worst] > SLICE_MEAN_TOL:
        raise PreconditionError(
            f"spatial mean of u does not vanish on time slice {worst} (relative {rel[worst]:.3e})"
        )
    boundary = boundary_layer_mask(grid.shape, 1)
    spatial = [np.gradient(u, grid.spacing[k], axis=k) for k in range(grid.n)]
    slope = max(float(np.max(np.abs(d))) for d in spatial)
    edge = float(np.max(np.abs(u[boundary])))
    if edge > float(grid.spacing.max()) * slope + 1e-14 * scale:
        raise PreconditionError(f"u does not vanish on the boundary nodes (max {edge:.3e})")


def div_inverse(u: np.ndarray, grid: GridSpec) -> np.ndarray:
    """
    v with div_x v = u, v = 0 on the boundary nodes and v linear in u slice by slice.

    For n = 1 v is the antiderivative in x. For n >= 2 the x_1-antiderivative handles
    u - eta(x_1) m(x', t), where m is the x_1-mass of u and eta a fixed unit-mass bump, and the
    remaining eta(x_1) m(x', t) is inverted recursively in x'.

    Args:
        u: Samples of shape grid.shape or grid.shape + (m,).
        grid: The grid; the last axis is time.

    Returns:
        Shape u.shape + (n,).

    Raises:
        PreconditionError: some time slice has nonzero spatial mean, or u does not vanish on the
            boundary nodes.
    """
    u = np.asarray(u, dtype=float)
    if u.shape[: grid.ndim] != grid.shape:
        raise DimensionError(f"u must start with grid shape {grid.shape}, got {u.shape}")
    components = u.shape[grid.ndim :]
    flat = u.reshape(grid.shape + (-1,))
    for c in range(flat.shape[-1]):
        _check_preconditions(flat[..., c], grid)
    v = _invert(flat, [float(h) for h in grid.spacing[: grid.n]])
    return v.reshape(grid.shape + components + (grid.n,))


@dataclass
class DivInverseReport:
    """
    Measured constants of one inversion.

    Attributes:
        residual: max |div_h v - u|.
        div_constant: residual / (h max |D u|).
        time_constant: max |v_t| / max |u_t|, the measured C_n.
        boundary_max: max |v| on the boundary nodes.
    """

    residual: float
    div_constant: float
    time_constant: float
    boundary_max: float


def div_inverse_report(u: np.ndarray, v: np.ndarray, grid: GridSpec) -> DivInverseReport:
    u = np.asarray(u, dtype=float).reshape(grid.shape + (-1,))
    v = np.asarray(v, dtype=float).reshape(grid.shape + (u.shape[-1], grid.n))
    h = grid.spacing
    div = sum(np.gradient(v[..., k], h[k], axis=k) for k in range(grid.n))
    residual = float(np.max(np.abs(div - u)))
    slope = max(float(np.max(np.abs(np.gradient(u, h[k], axis=k)))) for k in range(grid.n))
    u_t = np.gradient(u, h[grid.n], axis=grid.n)
    v_t = np.gradient(v, h[grid.n], axis=grid.n)
    ut_max = float(np.max(np.abs(u_t)))
    boundary = boundary_layer_mask(grid.shape, 1)
    return DivInverseReport(
        residual=residual,
        div_constant=residual / (float(h.max()) * slope) if slope > 0 else 0.0,
        time_constant=float(np.max(np.abs(v_t))) / ut_max if ut_max > 0 else 0.0,
        boundary_max=float(np.max(np.abs(v[boundary]))),
    )


def _resample(values: np.ndarray, source: GridSpec, points: np.ndarray) -> np.ndarray:
    axes = [source.axis(k) for k in range(source.ndim)]
    flat = values.reshape(source.shape + (-1,))
    interp = RegularGridInterpolator(axes, flat, bounds_error=False, fill_value=None)
    return interp(points).reshape(points.shape[:-1] + values.shape[source.ndim :])


def _cube_nodes(ybar: np.ndarray, l: float, target: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Mask of target nodes in the cube ybar + l [0, 1]^{n+1} and their unit-cube preimages."""
    coords = target.coords()
    local = (coords - ybar) / l
    inside = np.all((local >= 0.0) & (local <= 1.0), axis=-1)
    return inside, local[inside]


def rescale(f: GridField, ybar: Sequence[float], l: float, target: GridSpec) -> GridField:
    """
    (L_{ybar,l} f)(y) = l f((y - ybar) / l) on the target grid, zero outside the cube.

    f lives on the unit cube; ybar is the lower corner of the image cube. Node values are
    resampled by multilinear interpolation, which is exact when the image cube is a node block
    of the target with as many nodes per axis as f.

    Raises:
        RangeError: the image cube leaves the target grid.
        PreconditionError: l is not positive.
    """
    if l <= 0:
        raise PreconditionError(f"scale l must be positive, got {l}")
    ybar = np.asarray(ybar, dtype=float)
    if ybar.size != target.ndim or f.grid.ndim != target.ndim:
        raise DimensionError(f"corner and grids need {target.ndim} coordinates, got {ybar.size}")
    if not target.contains_box(ybar, (l,) * target.ndim):
        raise RangeError(f"cube at {ybar.tolist()} with edge {l} leaves the domain")
    out = GridField.zeros(target, f.m)
    inside, pts = _cube_nodes(ybar, l, target)
    out.u[inside] = l * _resample(f.u, f.grid, pts)
    out.v[inside] = l * _resample(f.v, f.grid, pts)
    return out


def rescale_div(
    phi: np.ndarray, unit: GridSpec, ybar: Sequence[float], l: float, target: GridSpec
) -> np.ndarray:
    """
    R_{ybar,l} phi = l L_{ybar,l}(R phi), so that div R_{ybar,l} phi = L_{ybar,l} phi.

    Args:
        phi: Unit-cube samples of shape unit.shape + (m,).
        unit: The unit-cube grid phi is sampled on.
        ybar: Lower corner of the image cube.
        l: Edge length of the image cube.
        target: Grid the result is sampled on.

    Returns:
        Shape target.shape + (m, n), zero outside the cube.
    """
    if l <= 0:
        raise PreconditionError(f"scale l must be positive, got {l}")
    ybar = np.asarray(ybar, dtype=float)
    if not target.contains_box(ybar, (l,) * target.ndim):
        raise RangeError(f"cube at {ybar.tolist()} with edge {l} leaves the domain")
    R = div_inverse(phi, unit)
    out = np.zeros(target.shape + R.shape[unit.ndim :])
    inside, pts = _cube_nodes(ybar, l, target)
    out[inside] = l * l * _resample(R, unit, pts)
    return out
