import numpy as np
import pytest

from nonunique.construct import (
    AdmissibleDirection,
    GridField,
    GridSpec,
    build_oscillation,
    cube_cutoff,
    dyadic_cover,
    erode,
    oscillation_profile,
    potential_field,
    region_cutoff,
)
from nonunique.core.blocks import ProblemDims, admissible_block
from nonunique.errors import DimensionError, PreconditionError, ResolutionError
from nonunique.schema import CertificateStatus


@pytest.fixture
def scalar_direction():
    return AdmissibleDirection(np.array([1.0]), np.array([1.0]), 0.0, np.array([[0.0]]))


def test_grid_geometry():
    grid = GridSpec.cube(1, 8)
    np.testing.assert_allclose(grid.spacing, [0.125, 0.125])
    assert grid.shape == (8, 8)
    assert grid.axis(0)[0] == pytest.approx(0.0625)
    assert grid.coords().shape == (8, 8, 2)
    sub = grid.subgrid((2, 4), (8, 8))
    assert sub.origin == (0.25, 0.5)
    assert grid.contains_box((0.0, 0.0), (0.5, 1.0))
    assert not grid.contains_box((0.75, 0.0), (0.5, 0.5))


def test_grid_validation():
    with pytest.raises(ResolutionError):
        GridSpec.cube(1, 4)
    with pytest.raises(PreconditionError):
        GridSpec((0.0, 0.0), (1.0, -1.0), (8, 8))
    with pytest.raises(DimensionError):
        GridSpec((0.0,), (1.0, 1.0), (8, 8))


def test_gradient_of_linear_field_is_exact(unit_grid_32):
    coords = unit_grid_32.coords()
    x, t = coords[..., 0], coords[..., 1]
    u = (2.0 * x + 3.0 * t)[..., None]
    v = x[..., None, None]
    w = GridField(unit_grid_32, u, v)
    np.testing.assert_allclose(w.grad_u()[..., 0, :], np.broadcast_to([2.0, 3.0], (32, 32, 2)))
    np.testing.assert_allclose(w.div_v(), 1.0)
    np.testing.assert_allclose(w.u_t(), 3.0)
    assert w.gradient().shape == (32, 32, 2, 2)


def test_field_shape_checks(unit_grid_32, unit_grid_64):
    with pytest.raises(DimensionError):
        GridField(unit_grid_32, np.zeros((32, 32, 1)), np.zeros((32, 32, 1, 2)))
    with pytest.raises(DimensionError):
        GridField.zeros(unit_grid_32, 1) + GridField.zeros(unit_grid_64, 1)


def test_erode_removes_layers():
    mask = np.ones((8, 8), dtype=bool)
    assert erode(mask, 1).sum() == 36
    np.testing.assert_array_equal(erode(mask, 0), mask)


def test_dyadic_cover_of_half_square():
    mask = np.zeros((16, 16), dtype=bool)
    mask[:, :8] = True
    cover = dyadic_cover(mask, max_size=16, budget=0.0)
    assert len(cover.cubes) == 2
    assert all(cube.size == 8 for cube in cover.cubes)
    assert cover.uncovered_fraction == 0.0
    np.testing.assert_array_equal(cover.covered_mask(mask.shape), mask)


def test_dyadic_cover_of_empty_mask():
    cover = dyadic_cover(np.zeros((8, 8), dtype=bool), max_size=8, budget=0.1)
    assert cover.cubes == []
    assert cover.uncovered_fraction == 0.0


def test_profile_plateaus_and_periodicity():
    profile = oscillation_profile(0.3, 0.1, 4.0)
    P = profile.period
    assert profile.d2f(0.01 * P) == pytest.approx(0.3)
    assert profile.d2f(0.95 * P) == pytest.approx(-0.7)
    assert profile.phase(0.01 * P) == 1
    assert profile.phase(0.95 * P) == -1
    assert profile.value.integrate(0.0, P) == pytest.approx(0.0, abs=1e-15)
    assert profile.slope(P) == pytest.approx(profile.slope(0.0), abs=1e-12)
    assert profile.f(0.2 * P + 3 * P) == pytest.approx(profile.f(0.2 * P))


def test_profile_arguments():
    with pytest.raises(PreconditionError):
        oscillation_profile(0.0, 0.1, 4.0)
    with pytest.raises(PreconditionError):
        oscillation_profile(0.3, 1.0, 4.0)
    with pytest.raises(PreconditionError):
        oscillation_profile(0.3, 0.1, 0.5)
    with pytest.raises(ResolutionError):
        oscillation_profile(0.3, 0.1, 4.0, transition=0.9)


def test_potential_field_is_divergence_free():
    grid = GridSpec.cube(2, 16)
    coords = grid.coords()
    x, y, t = coords[..., 0], coords[..., 1], coords[..., 2]
    h = np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y) * (1.0 + t)
    beta = np.array([[-0.8, 0.6]])
    direction = AdmissibleDirection(np.array([0.5]), np.array([0.6, 0.8]), 0.3, beta)
    w = potential_field(h, direction, grid)
    assert np.max(np.abs(w.div_v())) <= 1e-10
    with pytest.raises(DimensionError):
        potential_field(h[:8], direction, grid)


def test_scalar_oscillation(scalar_direction):
    grid = GridSpec.cube(1, 128)
    res = build_oscillation(scalar_direction, 0.5, grid, 0.5, 4.0)
    assert not res.report.under_resolved
    assert res.report.nodes_per_period == pytest.approx(32.0)
    assert res.report.sup_omega <= 0.5
    assert not np.any(res.g_plus & res.g_minus)
    assert res.report.fraction_plus > 0.2
    assert res.report.fraction_minus > 0.2
    assert np.all(res.field.u[0] == 0.0) and np.all(res.field.u[-1] == 0.0)
    assert res.report.support_max == 0.0


def test_oscillation_flags_coarse_sampling(scalar_direction):
    res = build_oscillation(scalar_direction, 0.5, GridSpec.cube(1, 32), 0.5, 16.0)
    assert res.report.under_resolved


def test_measure_bound_at_fine_frequency(scalar_direction):
    grid = GridSpec.cube(1, 1024)
    res = build_oscillation(scalar_direction, 0.5, grid, 0.1, 128.0)
    report = res.report
    assert report.nodes_per_period == pytest.approx(8.0)
    assert not report.under_resolved
    assert report.fraction_plus >= 0.405
    assert report.fraction_minus >= 0.405
    assert report.slack <= 0.05 + 1e-12
    assert not np.any(res.g_plus & res.g_minus)
    assert report.sup_omega <= 0.1
    status = {c.name: c.status for c in report.certificates}
    assert status["fraction_plus"] == CertificateStatus.PASS
    assert status["fraction_minus"] == CertificateStatus.PASS
    assert status["segment_distance_flat"] == CertificateStatus.PASS


@pytest.mark.parametrize("p", [1.0, -1.463])
def test_fractions_at_eight_nodes_per_period(p):
    C = admissible_block([p], [1.0], 0.0, [[0.0]])
    res = build_oscillation(C, 0.5, GridSpec.cube(1, 256), 0.1, 32.0, dims=ProblemDims(1, 1))
    report = res.report
    assert report.nodes_per_period == pytest.approx(8.0)
    assert report.fraction_plus >= 0.44
    assert report.fraction_minus >= 0.44
    targets = {c.name: c.target for c in report.certificates}
    assert targets["fraction_plus"] >= 0.3
    assert [c.passed for c in report.certificates if c.name.startswith("fraction")] == [True] * 2


def test_fraction_certificate_fails_without_room(scalar_direction):
    # 4 nodes per period: the grid slack exceeds (1 - eps)(1 - lam)
    res = build_oscillation(scalar_direction, 0.9, GridSpec.cube(1, 64), 0.5, 16.0)
    cert = next(c for c in res.report.certificates if c.name == "fraction_plus")
    assert cert.target <= 0.0
    assert cert.status == CertificateStatus.FAIL
    assert cert.detail
    assert not res.report.passed


def test_gradient_is_exact_where_cutoff_is_flat():
    direction = AdmissibleDirection(
        np.array([0.5]), np.array([0.6, 0.8]), 0.3, np.array([[-0.8, 0.6]])
    )
    grid = GridSpec.cube(2, 16)
    res = build_oscillation(direction, 0.3, grid, 0.5, 1.0)
    inner = res.cutoff.value >= 1.0
    assert inner.any()
    xi = grid.coords() @ np.append(direction.alpha, direction.s)
    expected = res.profile.d2f(xi)[..., None, None] * direction.dense()
    np.testing.assert_allclose(res.gradient[inner], expected[inner], atol=1e-12)
    assert res.gradient.shape == grid.shape + direction.dense().shape
    assert res.report.flat_segment_distance <= 1e-12


def test_cube_cutoff_derivatives():
    grid = GridSpec.cube(1, 512)
    jet = cube_cutoff(grid, 0.9)
    assert np.all((jet.value >= 0.0) & (jet.value <= 1.0))
    assert np.all(jet.value[:3] == 0.0) and np.all(jet.value[:, -3:] == 0.0)
    assert np.all(jet.first[jet.flat] == 0.0)
    np.testing.assert_allclose(jet.second, np.swapaxes(jet.second, -1, -2))
    # central differences of the value follow the exact slope
    fd = np.gradient(jet.value, *grid.spacing)[0]
    assert np.max(np.abs(fd - jet.first[..., 0])) <= 0.05 * np.max(np.abs(jet.first[..., 0]))


def test_region_cutoff_vanishes_off_region():
    grid = GridSpec.cube(1, 64)
    region = np.zeros(grid.shape, dtype=bool)
    region[16:48, 16:48] = True
    jet = region_cutoff(grid, region, 0.5)
    assert np.all(jet.value[~region] == 0.0)
    assert np.all(jet.first[~region] == 0.0)
    assert jet.value[32, 32] == pytest.approx(1.0)
    empty = region_cutoff(grid, np.zeros(grid.shape, dtype=bool), 0.5)
    assert not empty.value.any()
    with pytest.raises(DimensionError):
        region_cutoff(grid, region[:8], 0.5)


def test_dense_direction_needs_dims():
    C = admissible_block([1.0], [1.0], 0.0, [[0.0]])
    grid = GridSpec.cube(1, 64)
    with pytest.raises(DimensionError):
        build_oscillation(C, 0.5, grid, 0.5, 4.0)
    res = build_oscillation(C, 0.5, grid, 0.5, 4.0, dims=ProblemDims(1, 1))
    assert res.field.m == 1


def test_oscillation_argument_checks(scalar_direction):
    grid = GridSpec.cube(1, 64)
    with pytest.raises(PreconditionError):
        build_oscillation(scalar_direction, 1.0, grid, 0.5, 4.0)
    with pytest.raises(PreconditionError):
        build_oscillation(scalar_direction, 0.5, grid, 0.0, 4.0)
    with pytest.raises(DimensionError):
        build_oscillation(scalar_direction, 0.5, GridSpec.cube(2, 16), 0.5, 4.0)
    with pytest.raises(PreconditionError):
        AdmissibleDirection.from_dense(np.outer([1.0, 0.5], [1.0, 0.2]), ProblemDims(1, 1))
