"""
Subsolutions w = [u, (v^i)] with div v^i = u^i and [Du, (v^i_t)] inside the Sigma set, their
residuals and the moduli the refinement needs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from pydantic import BaseModel

from nonunique.construct.grid import GridField, GridSpec, boundary_layer_mask
from nonunique.core.flux import FluxFunction, get_flux
from nonunique.errors import DimensionError, PreconditionError
from nonunique.refine.divergence import div_inverse, div_inverse_report
from nonunique.tau.scalar import SigmaSet, scalar_sigma_set

logger = logging.getLogger(__name__)

DIV_TOL_FACTOR = 2.0
MAX_HALVINGS = 30
DEMO_SEEDS = ((0.3, 0.7), (1.3, 3.0))


@dataclass
class Subsolution:
    """
    A grid subsolution.

    Attributes:
        field: Samples of u and v.
        partition: Integer cell label per node.
        base: The field the refinement started from; its boundary values are the traces every
            iterate keeps.
        perturb: The perturbation size used when the subsolution was assembled.
    """

    field: GridField
    partition: np.ndarray
    base: GridField
    perturb: float = 0.0
    history: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.partition.shape != self.field.grid.shape:
            raise DimensionError(
                f"partition must have the grid shape {self.field.grid.shape}, "
                f"got {self.partition.shape}"
            )

    @property
    def grid(self) -> GridSpec:
        return self.field.grid

    @property
    def m(self) -> int:
        return self.field.m

    @property
    def n(self) -> int:
        return self.field.n

    def cells(self) -> list[int]:
        return [int(c) for c in np.unique(self.partition)]

    def cell_mask(self, label: int) -> np.ndarray:
        return self.partition == label

    def diag(self) -> tuple[np.ndarray, np.ndarray]:
        """Node-wise (Du, (v^i_t)), both of shape (*resolution, m, n)."""
        return self.field.Du(), self.field.v_t()

    def div_residual(self) -> float:
        return float(np.max(np.abs(self.field.div_v() - self.field.u)))

    def div_tolerance(self) -> float:
        slope = float(np.max(np.abs(self.field.Du()), initial=0.0))
        return DIV_TOL_FACTOR * float(self.grid.spacing.max()) * (1.0 + slope)

    def div_certified(self) -> bool:
        return self.div_residual() <= self.div_tolerance()

    def copy(self) -> "Subsolution":
        return Subsolution(
            self.field.copy(), self.partition.copy(), self.base, self.perturb, list(self.history)
        )


def residual_field(field_: GridField, sigma: FluxFunction) -> np.ndarray:
    """Node-wise v_t - sigma(Du), shape (*resolution, m, n)."""
    return field_.v_t() - sigma(field_.Du())


def residual_l2(
    sub: Subsolution, sigma: FluxFunction, mask: Optional[np.ndarray] = None
) -> float:
    """Midpoint-rule L2 norm of v_t - sigma(Du) over the domain or a node mask."""
    r = residual_field(sub.field, sigma)
    sq = np.sum(r * r, axis=(-2, -1))
    if mask is not None:
        sq = sq[np.asarray(mask, dtype=bool)]
    return float(np.sqrt(np.sum(sq) * sub.grid.cell_volume))


def residual_hminus1_bound(sub: Subsolution, sigma: FluxFunction) -> float:
    """
    Upper-bound proxy for ||u_t - div sigma(Du)||_{H^-1}: the L2 residual, valid while
    div v = u holds.

    Raises:
        PreconditionError: the divergence constraint is not certified on the grid.
    """
    if not sub.div_certified():
        raise PreconditionError(
            f"div v = u is not certified (residual {sub.div_residual():.3e} above "
            f"{sub.div_tolerance():.3e})"
        )
    return residual_l2(sub, sigma)


def _spatial_div(arr: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Divergence over the last axis of arr, shape (*resolution, m, n) -> (*resolution, m)."""
    return sum(np.gradient(arr[..., k], grid.spacing[k], axis=k) for k in range(grid.n))


def make_subsolution(
    sigma: FluxFunction,
    provider: SigmaSet,
    grid: GridSpec,
    u0: np.ndarray,
    v0: np.ndarray,
    f0: np.ndarray,
    h: np.ndarray,
    perturb: float = 0.0,
    max_halvings: int = MAX_HALVINGS,
) -> Subsolution:
    """
    u = u0 + perturb t div h and v = v0 + f0 t + perturb t h, with perturb halved until every
    node lies in the Sigma set.

    Args:
        sigma: The flux, used for logging the starting residual.
        provider: The Sigma set.
        grid: Space-time grid, last axis time.
        u0: Shape (*resolution, m), time independent.
        v0: Shape (*resolution, m, n) with div v0 = u0.
        f0: Shape (*resolution, m, n) with div f0 = 0.
        h: Shape (*resolution, m, n).
        perturb: Requested perturbation size.
        max_halvings: Halvings tried before giving up on the perturbation.

    Raises:
        PreconditionError: div v0 != u0, div f0 != 0, or [Du0, (f0^i)] leaves the Sigma set.
    """
    u0, v0 = np.asarray(u0, dtype=float), np.asarray(v0, dtype=float)
    f0, h = np.asarray(f0, dtype=float), np.asarray(h, dtype=float)
    m = u0.shape[-1]
    for name, arr, shape in (
        ("u0", u0, grid.shape + (m,)),
        ("v0", v0, grid.shape + (m, grid.n)),
        ("f0", f0, grid.shape + (m, grid.n)),
        ("h", h, grid.shape + (m, grid.n)),
    ):
        if arr.shape != shape:
            raise DimensionError(f"{name} must have shape {shape}, got {arr.shape}")

    spacing = float(grid.spacing.max())
    stationary = GridField(grid, u0, v0)
    tol = DIV_TOL_FACTOR * spacing * (1.0 + float(np.max(np.abs(stationary.Du()))))
    div_v0 = float(np.max(np.abs(_spatial_div(v0, grid) - u0)))
    if div_v0 > tol:
        raise PreconditionError(f"div v0 differs from u0 by {div_v0:.3e} (tolerance {tol:.3e})")
    div_f0 = float(np.max(np.abs(_spatial_div(f0, grid))))
    if div_f0 > DIV_TOL_FACTOR * spacing:
        raise PreconditionError(f"div f0 must vanish, got {div_f0:.3e}")

    t = grid.coords()[..., grid.n][..., None]
    g = _spatial_div(h, grid)

    def assemble(eps: float) -> GridField:
        return GridField(grid, u0 + eps * t * g, v0 + f0 * t[..., None] + eps * t[..., None] * h)

    def inside(candidate: GridField) -> bool:
        return bool(np.all(provider.contains(candidate.Du(), candidate.v_t())))

    if not inside(assemble(0.0)):
        raise PreconditionError("seed data [Du0, (f0^i)] is not inside the Sigma set")
    eps = float(perturb)
    w = assemble(eps)
    halvings = 0
    while eps != 0.0 and not inside(w):
        if halvings >= max_halvings:
            logger.warning("perturbation did not fit after %d halvings, using 0", halvings)
            eps = 0.0
            w = assemble(0.0)
            break
        eps *= 0.5
        halvings += 1
        w = assemble(eps)
    partition = np.zeros(grid.shape, dtype=np.int64)
    sub = Subsolution(field=w, partition=partition, base=w.copy(), perturb=eps)
    logger.info(
        "subsolution: perturbation %.4g after %d halvings, L2 residual %.4e",
        eps,
        halvings,
        residual_l2(sub, sigma),
    )
    return sub


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


def plateau(x: np.ndarray, inner: tuple[float, float], outer: tuple[float, float]) -> np.ndarray:
    """Smooth function equal to 1 on inner and 0 outside outer."""
    up = _smoothstep((x - outer[0]) / (inner[0] - outer[0]))
    down = _smoothstep((outer[1] - x) / (outer[1] - inner[1]))
    return up * down


def pm1d_demo_provider(sigma: Optional[FluxFunction] = None, tube_radius: float = 0.05) -> SigmaSet:
    """Sigma set of the Perona-Malik flux around the equal-flux pair (0.5, 2)."""
    sigma = sigma or get_flux("perona-malik", 1, 1)
    return scalar_sigma_set(sigma, DEMO_SEEDS, tube_radius=tube_radius)


def pm1d_demo_subsolution(
    grid: GridSpec,
    sigma: Optional[FluxFunction] = None,
    provider: Optional[SigmaSet] = None,
    perturb: float = 0.1,
) -> Subsolution:
    """
    u0 = 1.25 x, v0 = 0.625 x^2, f0 = 0.4 and h = (x - 1/2) chi(x) with chi = 1 on [0.4, 0.6]
    and 0 outside (0.25, 0.75).
    """
    if grid.n != 1:
        raise DimensionError(f"the demo runs in one space dimension, got n = {grid.n}")
    sigma = sigma or get_flux("perona-malik", 1, 1)
    provider = provider or pm1d_demo_provider(sigma)
    x = grid.coords()[..., 0]
    u0 = (1.25 * x)[..., None]
    v0 = (0.625 * x * x)[..., None, None]
    f0 = np.full(grid.shape + (1, 1), 0.4)
    h = ((x - 0.5) * plateau(x, (0.4, 0.6), (0.25, 0.75)))[..., None, None]
    return make_subsolution(sigma, provider, grid, u0, v0, f0, h, perturb=perturb)


def instability_witness(
    sub: Subsolution, sigma: FluxFunction, region: Optional[np.ndarray] = None
) -> float:
    """
    L2 norm of the weak residual u_t - div sigma(Du) over a node region (default 0.4 < x_1 < 0.6).

    For the perturbed stationary base this stays positive, while refined iterates drive the
    flux residual down.
    """
    grid = sub.grid
    if region is None:
        x = grid.coords()[..., 0]
        region = (x > 0.4) & (x < 0.6)
    flux = sigma(sub.field.Du())
    r = sub.field.u_t() - _spatial_div(flux, grid)
    inner = np.asarray(region, dtype=bool) & ~boundary_layer_mask(grid.shape, 1)
    return float(np.sqrt(np.sum(r[inner] ** 2) * grid.cell_volume))


class ModuliReport(BaseModel):
    """
    Bounds of the current subsolution.

    Attributes:
        M: max over nodes of |Du| + |sigma(Du)| + |v_t|.
        M_tilde: sup of |sigma| on the ball of radius 1 + 3M (sampled).
        lipschitz: Lipschitz constant L of sigma on that ball (sampled); alpha(s) = L s.
        ut_max: max |u_t|.
        div_constant: Measured constant C_n of the divergence inverse.
        volume: |Omega_T|.
    """

    M: float
    M_tilde: float
    lipschitz: float
    ut_max: float
    div_constant: float
    volume: float

    def alpha(self, s: float) -> float:
        return self.lipschitz * s


def measure_div_constant(n: int, resolution: int = 64) -> float:
    """Measured ||(R u)_t|| / ||u_t|| on a separable sample field of the unit cube."""
    grid = GridSpec.cube(n, resolution)
    coords = grid.coords()
    u = np.sin(np.pi * coords[..., n]) ** 2
    for k in range(n):
        u = u * np.sin(2.0 * np.pi * coords[..., k])
    u[boundary_layer_mask(grid.shape, 1)] = 0.0
    # boundary values come in antisymmetric pairs, slice means stay at round-off
    v = div_inverse(u, grid)
    return div_inverse_report(u, v, grid).time_constant


def compute_moduli(
    sub: Subsolution, sigma: FluxFunction, samples: int = 4096, seed: int = 0
) -> ModuliReport:
    A, b = sub.diag()
    sig = sigma(A)
    per_node = (
        np.linalg.norm(A.reshape(A.shape[:-2] + (-1,)), axis=-1)
        + np.linalg.norm(sig.reshape(sig.shape[:-2] + (-1,)), axis=-1)
        + np.linalg.norm(b.reshape(b.shape[:-2] + (-1,)), axis=-1)
    )
    M = float(per_node.max())
    radius = 1.0 + 3.0 * M
    rng = np.random.default_rng(seed)
    m, n = sub.m, sub.n
    dirs = rng.standard_normal((samples, m * n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = radius * rng.random(samples) ** (1.0 / (m * n))
    pts = (dirs * radii[:, None]).reshape(samples, m, n)
    M_tilde = float(np.max(np.linalg.norm(sigma(pts).reshape(samples, -1), axis=1)))
    jac = sigma.derivative(pts)
    lipschitz = float(np.max(np.linalg.norm(jac, ord=2, axis=(-2, -1))))
    return ModuliReport(
        M=M,
        M_tilde=M_tilde,
        lipschitz=lipschitz,
        ut_max=float(np.max(np.abs(sub.field.u_t()))),
        div_constant=measure_div_constant(n),
        volume=sub.grid.volume,
    )
