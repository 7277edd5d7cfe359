import numpy as np
import pytest

from nonunique.core.blocks import block_compose
from nonunique.core.flux import (
    FluxFunction,
    fd_jacobian,
    get_flux,
    graph_lift,
    graph_point,
    in_constraint_set,
    linear_flux,
)
from nonunique.core.sampling import Sampler, monotonicity_sample, parabolicity_sample
from nonunique.errors import CapabilityError, DimensionError, PreconditionError


def test_perona_malik_graph_points(pm_flux):
    assert graph_point(pm_flux, [[2.0]]).b[0, 0] == pytest.approx(0.4)
    assert graph_point(pm_flux, [[0.5]]).b[0, 0] == pytest.approx(0.4)


def test_identity_graph_point():
    sigma = get_flux("identity", 2, 2)
    point = graph_point(sigma, np.eye(2))
    np.testing.assert_array_equal(point.b, np.eye(2))


def test_graph_lift_is_in_constraint_set(pm_flux):
    X = graph_lift(pm_flux, [[1.3]])
    report = in_constraint_set(X, pm_flux, np.zeros(1), 1e-12)
    assert report.member
    assert report.trace_residual == 0.0


def test_perturbed_flux_block_leaves_constraint_set(pm_flux):
    tol = 1e-6
    X = graph_lift(pm_flux, [[1.3]])
    Y = block_compose(X.A, X.a, X.B, X.b + 10 * tol)
    report = in_constraint_set(Y, pm_flux, np.zeros(1), tol)
    assert not report.member
    assert report.flux_residual == pytest.approx(10 * tol)


def test_trace_condition_with_nonzero_z(pm_flux):
    A = np.array([[0.8]])
    X = block_compose(A, [0.0], [[[0.7]]], pm_flux(A))
    assert in_constraint_set(X, pm_flux, np.array([0.7]), 1e-12).member


def test_identity_flux_is_strongly_parabolic(identity_flux):
    report = parabolicity_sample(identity_flux, Sampler(count=500, seed=3), nu=1.0)
    assert report.passed
    assert report.min_margin >= -1e-9


def test_perona_malik_parabolicity_witness(pm_flux):
    extra = [(np.array([[2.0]]), np.array([1.0]), np.array([1.0]))]
    report = parabolicity_sample(pm_flux, Sampler(count=50, seed=0), nu=0.01, extra=extra)
    assert not report.passed
    assert report.witness is not None
    assert report.min_margin < -0.1


def test_zero_sample_count_is_rejected(identity_flux):
    with pytest.raises(PreconditionError):
        parabolicity_sample(identity_flux, Sampler(count=0), nu=1.0)
    with pytest.raises(PreconditionError):
        monotonicity_sample(identity_flux, Sampler(count=0), nu=1.0)


def test_scaled_identity_is_monotone_with_matching_constant():
    sigma = linear_flux(np.array([[2.0]]), 1)
    report = monotonicity_sample(sigma, Sampler(count=200, seed=1), nu=2.0)
    assert report.passed


def test_perona_malik_monotonicity_witness(pm_flux):
    extra = [(np.array([[2.0]]), np.array([[1.0]]))]
    report = monotonicity_sample(pm_flux, Sampler(count=20, seed=0), nu=0.01, extra=extra)
    assert report.violations >= 1


def test_finite_difference_jacobian_matches_analytic(pm_flux):
    A = np.array([[0.7]])
    expected = (1.0 - 0.49) / 1.49**2
    assert pm_flux.derivative(A)[0, 0] == pytest.approx(expected)
    assert fd_jacobian(pm_flux, A)[0, 0] == pytest.approx(expected, rel=1e-6)


def test_missing_jacobian_without_fallback_raises():
    sigma = FluxFunction(evaluate=lambda A: A, label="bare", m=1, n=1, allow_fd=False)
    with pytest.raises(CapabilityError):
        sigma.derivative(np.array([[1.0]]))


def test_flux_catalog_errors():
    with pytest.raises(PreconditionError):
        get_flux("unknown")
    with pytest.raises(DimensionError):
        get_flux("perona-malik", 2, 1)
    with pytest.raises(PreconditionError):
        get_flux("linear", 1, 1)


def test_flux_rejects_wrong_trailing_shape(pm_flux):
    with pytest.raises(DimensionError):
        pm_flux(np.zeros((2, 2)))
