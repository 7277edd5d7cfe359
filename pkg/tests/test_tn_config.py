import numpy as np
import pytest

from nonunique.core.blocks import (
    DiagPoint,
    ProblemDims,
    admissible_block,
    lift_diag,
    numeric_rank,
    project_dense,
)
from nonunique.errors import DimensionError, PreconditionError
from nonunique.geometry import (
    admissible_check,
    build_tn,
    collinear_legs,
    convex_coeffs,
    dist_to_segments,
    locate_on_segments,
    scale_family,
    shrink,
    tn_from_json,
    tn_to_json,
)


def _random_config(rng, N, p=6):
    """Column-vector legs are always rank one; the last leg closes the loop."""
    legs = rng.standard_normal((N - 1, p, 1))
    legs = np.concatenate([legs, -legs.sum(axis=0, keepdims=True)])
    kappa = rng.uniform(1.5, 4.0, size=N)
    return build_tn(rng.standard_normal((p, 1)), list(zip(legs, kappa)))


def _structured_config(s=0.7):
    dims = ProblemDims(1, 2)
    C = admissible_block([1.0], [1.0, 0.0], s, [[0.0, 1.0]])
    base = lift_diag(DiagPoint(np.array([[0.3, -0.2]]), np.array([[0.1, 0.4]])))
    return build_tn(base, [(C, 2.0), (-C, 3.0)], dims=dims)


def test_tartar_corners(tartar):
    corners, cfg = tartar
    expected = [
        np.diag([1.0, -1.0]),
        np.diag([0.0, 1.0]),
        np.diag([-2.0, 0.0]),
        np.diag([-1.0, -2.0]),
    ]
    for X, E in zip(corners, expected):
        np.testing.assert_allclose(X, E)


def test_tartar_corners_have_no_rank_one_connections(tartar):
    corners, _ = tartar
    for i in range(4):
        for j in range(i + 1, 4):
            assert numeric_rank(corners[i] - corners[j], 1e-10) == 2


def test_two_leg_corners():
    P = np.zeros((2, 2))
    C = np.outer([1.0, 2.0], [0.5, -1.0])
    cfg = build_tn(P, [(C, 2.0), (-C, 2.0)])
    np.testing.assert_allclose(cfg.X[0], P + 2 * C)
    np.testing.assert_allclose(cfg.X[1], P - C)


def test_build_errors():
    C = np.outer([1.0, 0.0], [1.0, 0.0])
    with pytest.raises(PreconditionError, match="legs do not close"):
        build_tn(np.zeros((2, 2)), [(C, 2.0), (C, 2.0)])
    with pytest.raises(PreconditionError, match="factor not greater than one"):
        build_tn(np.zeros((2, 2)), [(C, 1.0), (-C, 2.0)])
    with pytest.raises(PreconditionError, match="leg not rank-one"):
        build_tn(np.zeros((2, 2)), [(np.eye(2), 2.0), (-np.eye(2), 2.0)])
    with pytest.raises(PreconditionError):
        build_tn(np.zeros((2, 2)), [(C, 2.0)])
    with pytest.raises(DimensionError):
        build_tn(np.zeros((2, 2)), [(np.ones((3, 1)), 2.0), (-np.ones((3, 1)), 2.0)])


def test_convex_coeffs_two_legs():
    C = np.outer([1.0, 0.0], [0.0, 1.0])
    cfg = build_tn(np.zeros((2, 2)), [(C, 2.0), (-C, 2.0)])
    np.testing.assert_allclose(convex_coeffs(cfg, 0), [1.0 / 3.0, 2.0 / 3.0])


def test_convex_coeffs_match_linear_solve(rng):
    for trial in range(200):
        N = 2 + trial % 5
        cfg = _random_config(rng, N)
        pts = cfg.X.reshape(N, -1)
        system = np.vstack([pts.T, np.ones(N)])
        for j in range(N):
            nu = convex_coeffs(cfg, j)
            assert nu.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all((nu > 0) & (nu < 1))
            recon = np.tensordot(nu, cfg.X, axes=1)
            assert np.linalg.norm(recon - cfg.anchors[j]) <= 1e-9 * (1 + np.abs(cfg.X).max())
            oracle, *_ = np.linalg.lstsq(system, np.append(cfg.anchors[j].ravel(), 1.0), rcond=None)
            np.testing.assert_allclose(nu, oracle, atol=1e-8)


def test_convex_coeffs_index_range(tartar):
    with pytest.raises(PreconditionError):
        convex_coeffs(tartar[1], 4)


def test_dist_to_segments(tartar):
    _, cfg = tartar
    assert dist_to_segments(cfg, cfg.X[0]) == 0.0
    mid = 0.5 * (cfg.X[1] + cfg.anchors[1])
    assert dist_to_segments(cfg, mid) == pytest.approx(0.0, abs=1e-15)
    far = np.diag([5.0, 5.0])
    oracle = []
    for j in range(cfg.N):
        d = cfg.anchors[j] - cfg.X[j]
        t = np.clip(np.sum((far - cfg.X[j]) * d) / np.sum(d * d), 0.0, 1.0)
        oracle.append(np.linalg.norm(far - cfg.X[j] - t * d))
    assert dist_to_segments(cfg, far) == pytest.approx(min(oracle))
    assert dist_to_segments(cfg, far) > 0


def test_locate_on_segments_recovers_position(tartar):
    _, cfg = tartar
    Y = 0.7 * cfg.X[2] + 0.3 * cfg.anchors[2]
    j, t = locate_on_segments(cfg, Y)
    assert j == 2
    assert t == pytest.approx(0.3)
    with pytest.raises(PreconditionError):
        locate_on_segments(cfg, np.diag([5.0, 5.0]))


def test_shrink_keeps_corners_on_segments(tartar):
    _, cfg = tartar
    shrunk = shrink(cfg, [1.5] * 4)
    for X in shrunk.X:
        assert dist_to_segments(cfg, X) <= 1e-12
    midway = shrink(cfg, (1.0 + cfg.kappa) / 2.0)
    np.testing.assert_allclose(midway.anchors, cfg.anchors)


def test_shrink_rejects_out_of_range(tartar):
    with pytest.raises(PreconditionError):
        shrink(tartar[1], [1.0, 1.5, 1.5, 1.5])
    with pytest.raises(PreconditionError):
        shrink(tartar[1], [2.0, 1.5, 1.5, 1.5])


def test_collinear_legs(tartar):
    assert collinear_legs(tartar[1]) == [(0, 2), (1, 3)]


def test_admissible_scalar_leg_with_zero_beta():
    C = admissible_block([1.0], [1.0], 0.5, [[0.0]])
    cfg = build_tn(np.zeros((2, 2)), [(C, 2.0), (-C, 2.0)], dims=ProblemDims(1, 1))
    report = admissible_check(cfg)
    assert report.admissible
    assert report.legs[0].s == pytest.approx(0.5)


def test_beta_not_orthogonal_is_reported():
    C = np.outer([1.0, 0.5], [1.0, 0.2])
    cfg = build_tn(np.zeros((2, 2)), [(C, 2.0), (-C, 2.0)], dims=ProblemDims(1, 1))
    report = admissible_check(cfg)
    assert not report.admissible
    assert report.legs[0].reason == "beta not orthogonal to alpha"
    assert report.legs[0].orthogonality == pytest.approx(0.5)


def test_time_like_leg_is_not_admissible():
    C = np.outer([1.0, 0.0], [0.0, 1.0])
    cfg = build_tn(np.zeros((2, 2)), [(C, 2.0), (-C, 2.0)], dims=ProblemDims(1, 1))
    report = admissible_check(cfg)
    assert not report.admissible
    assert report.legs[0].reason == "alpha vanishes"


def test_admissible_check_needs_structure(tartar):
    with pytest.raises(DimensionError):
        admissible_check(tartar[1])


def test_scale_family_preserves_diagonal_projection():
    cfg = _structured_config()
    assert admissible_check(cfg).admissible
    scaled = scale_family(cfg, 2.0)
    assert admissible_check(scaled).admissible
    before = np.concatenate([cfg.X, cfg.anchors])
    after = np.concatenate([scaled.X, scaled.anchors])
    for X, Z in zip(before, after):
        np.testing.assert_allclose(
            project_dense(Z, cfg.dims).vector(), project_dense(X, cfg.dims).vector(), atol=1e-12
        )
    # lower-left blocks stay traceless
    for C in scaled.C:
        assert abs(C[1, 0] + C[2, 1]) < 1e-12


def test_scale_family_at_one_is_the_input():
    cfg = _structured_config()
    same = scale_family(cfg, 1.0)
    np.testing.assert_allclose(same.X, cfg.X, atol=1e-12)


def test_scale_family_rejects_zero():
    with pytest.raises(PreconditionError):
        scale_family(_structured_config(), 0.0)


def test_json_round_trip():
    cfg = _structured_config()
    again = tn_from_json(tn_to_json(cfg))
    np.testing.assert_allclose(again.X, cfg.X)
    assert again.dims == cfg.dims
