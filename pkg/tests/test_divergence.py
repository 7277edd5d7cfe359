import numpy as np
import pytest

from nonunique.construct import GridField, GridSpec
from nonunique.errors import DimensionError, PreconditionError, RangeError
from nonunique.refine import div_inverse, div_inverse_report, rescale, rescale_div


def _sine(grid):
    coords = grid.coords()
    x, t = coords[..., 0], coords[..., -1]
    return np.sin(2 * np.pi * x) * np.sin(np.pi * t)


def test_one_dimensional_inverse(unit_grid_64):
    u = _sine(unit_grid_64)
    v = div_inverse(u, unit_grid_64)
    assert v.shape == (64, 64, 1)
    np.testing.assert_array_equal(v[0], 0.0)
    np.testing.assert_array_equal(v[-1], 0.0)
    report = div_inverse_report(u, v, unit_grid_64)
    assert report.residual <= 0.1
    assert report.div_constant <= 1.0


def test_inverse_is_linear(unit_grid_32):
    u = _sine(unit_grid_32)
    doubled = div_inverse(2.0 * u, unit_grid_32)
    np.testing.assert_allclose(doubled, 2.0 * div_inverse(u, unit_grid_32))


def test_two_dimensional_inverse_with_mass_in_x():
    grid = GridSpec.cube(2, 32)
    coords = grid.coords()
    x, y, t = coords[..., 0], coords[..., 1], coords[..., 2]
    u = np.sin(np.pi * x) ** 2 * np.sin(2 * np.pi * y) * np.sin(np.pi * t)
    v = div_inverse(u[..., None], grid)
    assert v.shape == (32, 32, 32, 1, 2)
    report = div_inverse_report(u, v, grid)
    assert report.div_constant <= 10.0
    assert np.isfinite(report.time_constant)
    np.testing.assert_allclose(v[0, ..., 0], 0.0, atol=1e-12)


def test_inverse_preconditions(unit_grid_32):
    coords = unit_grid_32.coords()
    x, t = coords[..., 0], coords[..., 1]
    with pytest.raises(PreconditionError, match="spatial mean"):
        div_inverse(np.sin(np.pi * x) ** 2 * np.sin(np.pi * t), unit_grid_32)
    with pytest.raises(PreconditionError, match="boundary"):
        div_inverse(np.cos(2 * np.pi * x), unit_grid_32)
    with pytest.raises(DimensionError):
        div_inverse(np.zeros((16, 32)), unit_grid_32)
    np.testing.assert_array_equal(div_inverse(np.zeros((32, 32)), unit_grid_32), 0.0)


def test_rescale_onto_node_block():
    unit = GridSpec.cube(1, 8)
    target = GridSpec.cube(1, 16)
    f = GridField(unit, _sine(unit)[..., None], np.cos(unit.coords()[..., :1])[..., None])
    out = rescale(f, (0.5, 0.5), 0.5, target)
    np.testing.assert_allclose(out.u[8:, 8:], 0.5 * f.u, atol=1e-14)
    np.testing.assert_allclose(out.v[8:, 8:], 0.5 * f.v, atol=1e-14)
    assert not out.u[:8].any() and not out.u[:, :8].any()


def test_rescale_arguments():
    unit = GridSpec.cube(1, 8)
    target = GridSpec.cube(1, 16)
    f = GridField.zeros(unit, 1)
    with pytest.raises(PreconditionError):
        rescale(f, (0.0, 0.0), 0.0, target)
    with pytest.raises(RangeError):
        rescale(f, (0.75, 0.75), 0.5, target)


def test_rescale_div_scales_the_inverse():
    unit = GridSpec.cube(1, 8)
    target = GridSpec.cube(1, 16)
    phi = _sine(unit)[..., None]
    out = rescale_div(phi, unit, (0.0, 0.5), 0.5, target)
    assert out.shape == (16, 16, 1, 1)
    np.testing.assert_allclose(out[:8, 8:], 0.25 * div_inverse(phi, unit), atol=1e-14)
    assert not out[8:].any()
