"""
The elementary oscillation: a compactly supported w whose gradient concentrates on the two
multiples lambda C and (lambda - 1) C of an admissible rank-one direction C.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel
from scipy.interpolate import PPoly
from scipy.ndimage import distance_transform_edt

from nonunique.config import MEASURE_SLACK, MIN_PERIOD_NODES
from nonunique.construct.grid import GridField, GridSpec, boundary_layer_mask
from nonunique.core.blocks import ProblemDims, admissible_block
from nonunique.errors import DimensionError, PreconditionError, ResolutionError
from nonunique.geometry.tn_config import factor_leg
from nonunique.schema import Certificate, CertificateStatus, all_passed

logger = logging.getLogger(__name__)

SUPPORT_LAYERS = 2
DIVERGENCE_CONSTANT = 10.0
SLICE_MEAN_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class AdmissibleDirection:
    """C = (p, beta^1, ..., beta^m) (x) (alpha, s) with beta^i . alpha = 0."""

    p: np.ndarray
    alpha: np.ndarray
    s: float
    beta: np.ndarray

    @property
    def dims(self) -> ProblemDims:
        return ProblemDims(self.p.size, self.alpha.size)

    def dense(self) -> np.ndarray:
        return admissible_block(self.p, self.alpha, self.s, self.beta)

    def scaled(self, factor: float) -> "AdmissibleDirection":
        return AdmissibleDirection(factor * self.p, self.alpha, self.s, factor * self.beta)

    @classmethod
    def from_dense(cls, C: np.ndarray, dims: ProblemDims) -> "AdmissibleDirection":
        leg = factor_leg(np.asarray(C, dtype=float), dims)
        if not leg.admissible:
            raise PreconditionError(f"direction is not admissible: {leg.reason}")
        return cls(leg.p, leg.alpha, leg.s, leg.beta)


def potential_field(h: np.ndarray, direction: AdmissibleDirection, grid: GridSpec) -> GridField:
    """phi = (alpha . Dh) p and psi^i = (beta^i (x) alpha - alpha (x) beta^i) Dh.

    Derivatives are central differences on the grid.
    """
    h = np.asarray(h, dtype=float)
    if h.shape != grid.shape:
        raise DimensionError(f"h must be sampled on the grid {grid.shape}, got {h.shape}")
    n = grid.n
    if direction.alpha.size != n:
        raise DimensionError(f"direction has n = {direction.alpha.size}, grid has n = {n}")
    Dh = np.gradient(h, *grid.spacing)
    Dx = np.stack(Dh[:n], axis=-1)
    along = Dx @ direction.alpha
    across = Dx @ direction.beta.T
    u = along[..., None] * direction.p
    v = along[..., None, None] * direction.beta - across[..., :, None] * direction.alpha
    return GridField(grid, u, v)


@dataclass(frozen=True, eq=False)
class OscillationProfile:
    """
    Periodic f with |alpha|^2 f'' = lam on a share 1 - lam of each period and lam - 1 on a share
    lam, joined by linear transitions.

    Attributes:
        lam: Splitting parameter in (0, 1).
        frequency: Periods per unit length.
        alpha_norm: |alpha|.
        transition: Share of a period taken by the two transitions.
        curvature: f'' on one period.
        slope: f' on one period, mean zero.
        value: f on one period, mean zero.
    """

    lam: float
    frequency: float
    alpha_norm: float
    transition: float
    curvature: PPoly
    slope: PPoly
    value: PPoly

    @property
    def period(self) -> float:
        return 1.0 / self.frequency

    @property
    def knots(self) -> np.ndarray:
        return self.curvature.x

    def _wrap(self, xi: np.ndarray) -> np.ndarray:
        return np.mod(np.asarray(xi, dtype=float), self.period)

    def f(self, xi: np.ndarray) -> np.ndarray:
        return self.value(self._wrap(xi))

    def df(self, xi: np.ndarray) -> np.ndarray:
        return self.slope(self._wrap(xi))

    def d2f(self, xi: np.ndarray) -> np.ndarray:
        return self.curvature(self._wrap(xi))

    def phase(self, xi: np.ndarray) -> np.ndarray:
        """+1 on the lam plateau, -1 on the lam - 1 plateau, 0 in transitions."""
        x = self._wrap(xi)
        k = self.knots
        return np.where(x < k[1], 1, np.where((x >= k[2]) & (x < k[3]), -1, 0))


def _recentred(poly: PPoly) -> PPoly:
    span = poly.x[-1] - poly.x[0]
    c = poly.c.copy()
    c[-1] -= poly.integrate(poly.x[0], poly.x[-1]) / span
    return PPoly(c, poly.x)


def oscillation_profile(
    lam: float,
    eps: float,
    frequency: float,
    alpha_norm: float = 1.0,
    transition: Optional[float] = None,
) -> OscillationProfile:
    """
    Build the periodic profile.

    Args:
        lam: Splitting parameter in (0, 1).
        eps: Tolerance in (0, 1); transitions take at most eps / 2 of a period.
        frequency: Periods per unit length, at least 1.
        alpha_norm: |alpha| of the direction the profile is composed with.
        transition: Share of a period taken by transitions; defaults to eps min(lam, 1 - lam) / 2.

    Raises:
        ResolutionError: The transitions cannot fit the period.
    """
    if not 0.0 < lam < 1.0:
        raise PreconditionError(f"lambda must lie in (0, 1), got {lam}")
    if not 0.0 < eps < 1.0:
        raise PreconditionError(f"eps must lie in (0, 1), got {eps}")
    if frequency < 1:
        raise PreconditionError(f"frequency must be at least 1, got {frequency}")
    if alpha_norm <= 0:
        raise PreconditionError(f"|alpha| must be positive, got {alpha_norm}")
    tau = transition if transition is not None else 0.5 * eps * min(lam, 1.0 - lam)
    if not 0.0 < tau <= 0.5 * eps or tau >= 2.0 * min(lam, 1.0 - lam):
        raise ResolutionError(
            f"transition share {tau} infeasible for lambda={lam}, eps={eps} "
            f"(needs 0 < share <= {0.5 * eps} and share < {2.0 * min(lam, 1.0 - lam)})"
        )
    period = 1.0 / frequency
    T = 0.5 * tau * period
    upper = (1.0 - lam) * period - T
    lower = lam * period - T
    a = lam / alpha_norm**2
    b = (lam - 1.0) / alpha_norm**2
    x = np.array([0.0, upper, upper + T, upper + T + lower, period])
    c = np.array([[0.0, (b - a) / T, 0.0, (a - b) / T], [a, a, b, b]])
    curvature = PPoly(c, x)
    slope = _recentred(curvature.antiderivative())
    value = _recentred(slope.antiderivative())
    return OscillationProfile(
        lam=float(lam),
        frequency=float(frequency),
        alpha_norm=float(alpha_norm),
        transition=float(tau),
        curvature=curvature,
        slope=slope,
        value=value,
    )


def _smoothstep(t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quintic smoothstep on [0, 1] with its first two derivatives, constant outside."""
    t = np.clip(t, 0.0, 1.0)
    value = t * t * t * (t * (6.0 * t - 15.0) + 10.0)
    slope = 30.0 * t * t * (t - 1.0) ** 2
    curvature = 60.0 * t * (t - 1.0) * (2.0 * t - 1.0)
    return value, slope, curvature


@dataclass(frozen=True, eq=False)
class CutoffJet:
    """
    A cutoff zeta sampled at the nodes together with its exact derivatives.

    Attributes:
        value: zeta, shape (*resolution,).
        first: D zeta, shape (*resolution, ndim).
        second: D^2 zeta, shape (*resolution, ndim, ndim).
    """

    value: np.ndarray
    first: np.ndarray
    second: np.ndarray

    @property
    def flat(self) -> np.ndarray:
        """Nodes where zeta is 0 or 1 and all its derivatives vanish."""
        return (self.value <= 0.0) | (self.value >= 1.0)


def cube_cutoff(grid: GridSpec, eps: float) -> CutoffJet:
    """Product cutoff equal to 1 on a concentric box of measure (1 - eps/4)|G| and 0 on 3 layers."""
    coords = grid.coords()
    h = grid.spacing
    shrink = 1.0 - (1.0 - 0.25 * eps) ** (1.0 / grid.ndim)
    factors, slopes, curvatures = [], [], []
    for k in range(grid.ndim):
        y = coords[..., k] - grid.origin[k]
        d = np.minimum(y, grid.edges[k] - y)
        toward = np.where(y <= grid.edges[k] - y, 1.0, -1.0)
        r0 = 3.0 * h[k]
        r1 = max(0.5 * shrink * grid.edges[k], r0 + 2.0 * h[k])
        width = r1 - r0
        s, ds, d2s = _smoothstep((d - r0) / width)
        factors.append(s)
        slopes.append(toward * ds / width)
        curvatures.append(d2s / (width * width))

    def product(skip: tuple[int, ...]) -> np.ndarray:
        out = np.ones(grid.shape)
        for j, s in enumerate(factors):
            if j not in skip:
                out = out * s
        return out

    first = np.zeros(grid.shape + (grid.ndim,))
    second = np.zeros(grid.shape + (grid.ndim, grid.ndim))
    for k in range(grid.ndim):
        first[..., k] = product((k,)) * slopes[k]
        second[..., k, k] = product((k,)) * curvatures[k]
        for l in range(k + 1, grid.ndim):
            mixed = product((k, l)) * slopes[k] * slopes[l]
            second[..., k, l] = mixed
            second[..., l, k] = mixed
    return CutoffJet(product(()), first, second)


def region_cutoff(grid: GridSpec, region: np.ndarray, eps: float) -> CutoffJet:
    """
    Cutoff as a smooth function of the distance d to the complement of a node mask.

    The smoothstep is differentiated exactly; only D d and D^2 d are differenced, and they enter
    multiplied by derivatives of the smoothstep, so they vanish wherever the cutoff is flat.
    """
    region = np.asarray(region, dtype=bool)
    if region.shape != grid.shape:
        raise DimensionError(f"region mask must have grid shape {grid.shape}, got {region.shape}")
    ndim = grid.ndim
    if not region.any():
        return CutoffJet(
            np.zeros(grid.shape),
            np.zeros(grid.shape + (ndim,)),
            np.zeros(grid.shape + (ndim, ndim)),
        )
    padded = np.pad(region, 1, constant_values=False)
    interior = tuple(slice(1, -1) for _ in grid.shape)
    d = distance_transform_edt(padded, sampling=grid.spacing)[interior]
    h = float(grid.spacing.max())
    r0 = 3.0 * h
    width = max(2.0 * h, 0.125 * eps * float(d.max()))
    s, ds, d2s = _smoothstep((d - r0) / width)
    Dd = np.stack(np.gradient(d, *grid.spacing), axis=-1)
    D2d = np.stack(
        [np.stack(np.gradient(Dd[..., k], *grid.spacing), axis=-1) for k in range(ndim)], axis=-2
    )
    D2d = 0.5 * (D2d + np.swapaxes(D2d, -1, -2))
    inside = region.astype(float)
    first = (ds / width * inside)[..., None] * Dd
    second = (d2s / width**2 * inside)[..., None, None] * Dd[..., :, None] * Dd[..., None, :]
    second = second + (ds / width * inside)[..., None, None] * D2d
    return CutoffJet(s * inside, first, second)


def oscillation_gradient(
    profile: OscillationProfile,
    direction: AdmissibleDirection,
    grid: GridSpec,
    cutoff: CutoffJet,
) -> np.ndarray:
    """
    Exact node values of the gradient of P[zeta f(xi)], xi = alpha . x + s t.

    With e = (alpha, s) the Hessian of h = zeta f(xi) is
    zeta f'' e (x) e + f' (e (x) D zeta + D zeta (x) e) + f D^2 zeta, and every row of the
    gradient contracts its spatial rows with alpha or beta^i.

    Returns:
        Dense block gradient per node, shape (*resolution, m + nm, n + 1).
    """
    n = grid.n
    e = np.append(direction.alpha, direction.s)
    xi = grid.coords() @ e
    f, df, d2f = profile.f(xi), profile.df(xi), profile.d2f(xi)
    Dz = cutoff.first
    hess = (cutoff.value * d2f)[..., None, None] * np.outer(e, e)
    hess = hess + df[..., None, None] * (e[:, None] * Dz[..., None, :] + Dz[..., :, None] * e)
    hess = hess + f[..., None, None] * cutoff.second
    spatial = hess[..., :n, :]
    along = np.einsum("j,...jl->...l", direction.alpha, spatial)
    across = np.einsum("ij,...jl->...il", direction.beta, spatial)
    rows_u = direction.p[:, None] * along[..., None, :]
    rows_v = direction.beta[:, :, None] * along[..., None, None, :]
    rows_v = rows_v - direction.alpha[None, :, None] * across[..., :, None, :]
    m = direction.p.size
    rows_v = rows_v.reshape(grid.shape + (m * n, n + 1))
    return np.concatenate([rows_u, rows_v], axis=-2)


def gradient_lipschitz(grad: np.ndarray, grid: GridSpec) -> float:
    """Largest difference quotient of node gradients between grid neighbours."""
    out = 0.0
    for k in range(grid.ndim):
        diff = np.linalg.norm(np.diff(grad, axis=k), axis=(-2, -1))
        out = max(out, float(diff.max(initial=0.0)) / grid.spacing[k])
    return out


class OscillationReport(BaseModel):
    """Measured quantities of one oscillation block."""

    lam: float
    eps: float
    frequency: float
    nodes_per_period: float
    under_resolved: bool
    measure: float
    fraction_plus: float
    fraction_minus: float
    slack: float
    cutoff_term: float
    lipschitz: float
    sup_omega: float
    max_segment_distance: float
    flat_segment_distance: float
    support_max: float
    div_max: float
    div_constant: float
    slice_mean_rel: float
    certificates: list[Certificate]

    @property
    def passed(self) -> bool:
        return all_passed(self.certificates)


@dataclass
class OscillationResult:
    """
    Attributes:
        field: omega from finite differences of h.
        gradient: Exact node gradient of omega, dense layout.
        cutoff: The cutoff with its derivatives.
    """

    field: GridField
    gradient: np.ndarray
    cutoff: CutoffJet
    g_plus: np.ndarray
    g_minus: np.ndarray
    report: OscillationReport
    profile: OscillationProfile


def _hessian_max(h: np.ndarray, spacing: np.ndarray) -> float:
    first = np.gradient(h, *spacing)
    return float(max(np.max(np.abs(np.stack(np.gradient(d, *spacing)))) for d in first))


def segment_distance(grad: np.ndarray, C: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Node-wise Frobenius distance from grad to the segment {t C : lo <= t <= hi}."""
    cc = float(np.sum(C * C))
    t = np.clip(np.einsum("...ij,ij->...", grad, C) / cc, lo, hi)
    return np.linalg.norm((grad - t[..., None, None] * C).reshape(grad.shape[:-2] + (-1,)), axis=-1)


def fraction_certificate(name: str, achieved: float, target: float) -> Certificate:
    """Lower bound on a mask fraction; a target the grid slack has used up fails outright."""
    if target <= 0.0:
        return Certificate(
            name=name,
            target=target,
            achieved=achieved,
            status=CertificateStatus.FAIL,
            detail="grid slack exceeds the measure bound",
        )
    return Certificate.lower(name, achieved, target)


def build_oscillation(
    direction: Union[AdmissibleDirection, np.ndarray],
    lam: float,
    grid: GridSpec,
    eps: float,
    frequency: float,
    region: Optional[np.ndarray] = None,
    dims: Optional[ProblemDims] = None,
    transition: Optional[float] = None,
) -> OscillationResult:
    """
    Oscillation omega on a cube (or a node region) with gradient mostly on {lam C, (lam - 1) C}.

    The masks and the inclusion certificates read the exact gradient of omega at the nodes; the
    stored field and its divergence come from finite differences of h.

    Args:
        direction: Admissible direction, or its dense block together with dims.
        lam: Splitting parameter in (0, 1).
        grid: The cube.
        eps: Tolerance in (0, 1).
        frequency: Periods per unit length along alpha . x + s t.
        region: Optional node mask; the cutoff then follows the distance to its complement.
        dims: Problem dimensions when direction is a dense block.
        transition: Transition share passed to oscillation_profile.

    Returns:
        The field, its node gradient, the masks G' (near lam C) and G'' (near (lam - 1) C) and
        the report.
    """
    if not 0.0 < lam < 1.0:
        raise PreconditionError(f"lambda must lie in (0, 1), got {lam}")
    if not 0.0 < eps < 1.0:
        raise PreconditionError(f"eps must lie in (0, 1), got {eps}")
    if not isinstance(direction, AdmissibleDirection):
        if dims is None:
            raise DimensionError("a dense direction needs problem dimensions")
        direction = AdmissibleDirection.from_dense(direction, dims)
    if direction.alpha.size != grid.n:
        raise DimensionError(f"direction has n = {direction.alpha.size}, grid has n = {grid.n}")
    alpha_norm = float(np.linalg.norm(direction.alpha))
    profile = oscillation_profile(lam, eps, frequency, alpha_norm, transition)

    coords = grid.coords()
    xi = coords[..., : grid.n] @ direction.alpha + direction.s * coords[..., grid.n]
    cutoff = cube_cutoff(grid, eps) if region is None else region_cutoff(grid, region, eps)
    zeta = cutoff.value
    h = zeta * profile.f(xi)
    omega = potential_field(h, direction, grid)
    grad = oscillation_gradient(profile, direction, grid, cutoff)

    C = direction.dense()
    tol = 0.25 * eps * min(1.0, float(np.linalg.norm(C)))
    inner = zeta >= 1.0
    flat = grid.shape + (-1,)
    near_plus = np.linalg.norm((grad - lam * C).reshape(flat), axis=-1) <= tol
    near_minus = np.linalg.norm((grad - (lam - 1.0) * C).reshape(flat), axis=-1) <= tol
    g_plus = inner & near_plus
    g_minus = inner & near_minus & ~g_plus

    h_vec = grid.spacing
    step = float(
        np.sum(np.abs(direction.alpha) * h_vec[: grid.n]) + abs(direction.s) * h_vec[grid.n]
    )
    nodes_per_period = profile.period / step if step > 0 else float("inf")
    under_resolved = nodes_per_period < MIN_PERIOD_NODES
    if under_resolved:
        logger.warning("oscillation under-resolved: %.1f nodes per period", nodes_per_period)

    measure = float(np.prod(grid.shape)) if region is None else float(np.count_nonzero(region))
    frac_plus = float(g_plus.sum()) / measure if measure else 0.0
    frac_minus = float(g_minus.sum()) / measure if measure else 0.0
    inner_share = float(inner.sum()) / measure if measure else 0.0
    # MEASURE_SLACK at MIN_PERIOD_NODES nodes per period, shrinking like h * frequency
    slack = MEASURE_SLACK * MIN_PERIOD_NODES / nodes_per_period
    if region is None:
        slack += max(0.0, 1.0 - 0.25 * eps - inner_share)

    boundary = boundary_layer_mask(grid.shape, SUPPORT_LAYERS)
    outside = boundary if region is None else boundary | ~np.asarray(region, dtype=bool)
    support_max = float(
        max(
            np.max(np.abs(omega.u[outside]), initial=0.0),
            np.max(np.abs(omega.v[outside]), initial=0.0),
        )
    )

    div_max = float(np.max(np.abs(omega.div_v())))
    hess = _hessian_max(h, h_vec)
    div_constant = div_max / (float(h_vec.max()) * hess) if hess > 0 else 0.0

    phi = omega.u
    slice_sums = phi.sum(axis=tuple(range(grid.n))) * float(np.prod(h_vec[: grid.n]))
    phi_max = float(np.max(np.abs(phi)))
    slice_mean_rel = 0.0
    if phi_max > 0:
        slice_mean_rel = float(np.max(np.abs(slice_sums))) / (phi_max * grid.volume)

    sup_omega = omega.sup_norm()
    distance = segment_distance(grad, C, lam - 1.0, lam)
    seg = float(np.max(distance))
    seg_flat = float(np.max(distance[cutoff.flat], initial=0.0))
    lipschitz = gradient_lipschitz(grad, grid)
    bulk = (zeta * profile.d2f(xi) * alpha_norm**2)[..., None, None] * C
    cutoff_term = float(np.max(np.linalg.norm((grad - bulk).reshape(flat), axis=-1)))

    certificates = [
        Certificate.upper("support", support_max, 0.0),
        Certificate.upper("divergence_constant", div_constant, DIVERGENCE_CONSTANT),
        Certificate.upper("slice_mean", slice_mean_rel, SLICE_MEAN_TOL),
        Certificate.upper("sup_omega", sup_omega, eps),
        Certificate.upper(
            "segment_distance", seg, eps + 5.0 * float(h_vec.max()) * lipschitz
        ),
        Certificate.upper("segment_distance_flat", seg_flat, eps),
        fraction_certificate("fraction_plus", frac_plus, (1.0 - eps) * (1.0 - lam) - slack),
        fraction_certificate("fraction_minus", frac_minus, (1.0 - eps) * lam - slack),
    ]
    report = OscillationReport(
        lam=lam,
        eps=eps,
        frequency=float(frequency),
        nodes_per_period=nodes_per_period,
        under_resolved=under_resolved,
        measure=measure,
        fraction_plus=frac_plus,
        fraction_minus=frac_minus,
        slack=slack,
        cutoff_term=cutoff_term,
        lipschitz=lipschitz,
        sup_omega=sup_omega,
        max_segment_distance=seg,
        flat_segment_distance=seg_flat,
        support_max=support_max,
        div_max=div_max,
        div_constant=div_constant,
        slice_mean_rel=slice_mean_rel,
        certificates=certificates,
    )
    logger.debug(
        "oscillation lam=%.3f freq=%g: fractions %.4f / %.4f, sup %.3e",
        lam,
        frequency,
        frac_plus,
        frac_minus,
        sup_omega,
    )
    return OscillationResult(
        field=omega,
        gradient=grad,
        cutoff=cutoff,
        g_plus=g_plus,
        g_minus=g_minus,
        report=report,
        profile=profile,
    )
