import numpy as np
import pytest

from nonunique.core.flux import get_flux
from nonunique.core.sampling import Sampler
from nonunique.errors import DimensionError, PreconditionError
from nonunique.geometry import (
    PointCloud,
    convex_membership,
    lamination_hull,
    lamination_step,
    rank_one_connected,
    search_rank_one_in_K,
)


def test_tartar_cloud_is_a_lamination_fixed_point(tartar):
    corners, _ = tartar
    cloud = PointCloud(corners)
    hull = lamination_hull(cloud, 5)
    assert len(hull) == 4
    assert hull.depth == 0


def test_tartar_anchors_lie_in_the_convex_hull(tartar):
    corners, cfg = tartar
    cloud = PointCloud(corners)
    for j in range(cfg.N):
        result = convex_membership(cfg.anchors[j], cloud, tol=1e-10)
        assert result.member
        assert result.residual <= 1e-10
        np.testing.assert_allclose(
            result.coefficients @ cloud.flat(), cfg.anchors[j].ravel(), atol=1e-10
        )


def test_far_point_is_not_a_member(tartar):
    result = convex_membership(np.diag([5.0, 5.0]), PointCloud(tartar[0]))
    assert not result
    assert result.coefficients is None


def test_lamination_of_a_rank_one_pair():
    a = np.zeros((2, 2))
    b = np.outer([1.0, 2.0], [1.0, -1.0])
    cloud = PointCloud(np.stack([a, b]))
    once = lamination_step(cloud, lambda_samples=1)
    assert len(once) == 3
    np.testing.assert_allclose(once.points[2], 0.5 * b)
    assert once.provenance[2] == "lamination-depth-1"
    twice = lamination_hull(cloud, 2, lambda_samples=1)
    assert len(twice) == 5
    assert twice.provenance.count("lamination-depth-2") == 2


def test_rank_one_connected():
    assert rank_one_connected(np.zeros((2, 2)), np.outer([1.0, 0.0], [0.0, 1.0]))
    assert not rank_one_connected(np.zeros((2, 2)), np.eye(2))
    with pytest.raises(DimensionError):
        rank_one_connected(np.zeros((2, 2)), np.zeros((3, 3)))


def test_hull_arguments_are_validated(tartar):
    cloud = PointCloud(tartar[0])
    with pytest.raises(PreconditionError):
        lamination_hull(cloud, -1)
    with pytest.raises(PreconditionError):
        lamination_step(cloud, lambda_samples=0)
    with pytest.raises(DimensionError):
        PointCloud(np.zeros((0, 2, 2)))


def test_no_rank_one_segments_in_the_identity_graph():
    sigma = get_flux("identity", 2, 2)
    report = search_rank_one_in_K(sigma, Sampler(count=5000, seed=11))
    assert report.findings == []
    assert report.refined == 0


def test_perona_malik_graph_has_rank_one_segments(pm_flux):
    report = search_rank_one_in_K(pm_flux, Sampler(count=2000, seed=5))
    assert report.findings
    for finding in report.findings:
        step = np.outer(finding.p, finding.alpha)
        gap = pm_flux(finding.A + step) - pm_flux(finding.A)
        assert abs(gap[0, 0]) <= 1e-6 * np.linalg.norm(step) + 1e-12
