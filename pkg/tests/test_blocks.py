import numpy as np
import pytest

from nonunique.core.blocks import (
    ProblemDims,
    admissible_block,
    block_compose,
    block_from_dense,
    block_to_dense,
    lift_diag,
    numeric_rank,
    project_dense,
    project_diag,
    zero_block,
)
from nonunique.errors import DimensionError, PreconditionError


def _random_blocks(rng, m, n):
    return (
        rng.standard_normal((m, n)),
        rng.standard_normal(m),
        rng.standard_normal((m, n, n)),
        rng.standard_normal((m, n)),
    )


def test_zero_blocks_give_zero_dense_matrix():
    dims = ProblemDims(2, 3)
    dense = block_to_dense(zero_block(dims))
    assert dense.shape == (2 + 3 * 2, 3 + 1)
    assert not dense.any()


def test_scalar_assembly_by_hand():
    X = block_compose([[2.0]], [0.0], [[[0.0]]], [[0.4]])
    np.testing.assert_allclose(X.dense(), [[2.0, 0.0], [0.0, 0.4]])


def test_mismatched_B_block_names_the_block():
    with pytest.raises(DimensionError, match="block B"):
        block_compose(np.eye(2), np.zeros(2), np.zeros((2, 3, 3)), np.zeros((2, 2)))


def test_dense_layout_round_trip(rng):
    dims = ProblemDims(2, 3)
    X = block_compose(*_random_blocks(rng, 2, 3))
    Y = block_from_dense(block_to_dense(X), dims)
    for name in ("A", "a", "B", "b"):
        np.testing.assert_array_equal(getattr(X, name), getattr(Y, name))


def test_projection_ignores_off_diagonal_blocks(rng):
    A, a, B, b = _random_blocks(rng, 2, 2)
    point = project_diag(block_compose(A, a, B, b))
    np.testing.assert_array_equal(point.A, A)
    np.testing.assert_array_equal(point.b, b)
    other = project_diag(block_compose(A, 5.0 * a, -B, b))
    np.testing.assert_array_equal(other.vector(), point.vector())


def test_lift_then_project_is_identity(rng):
    dims = ProblemDims(1, 2)
    A, _, _, b = _random_blocks(rng, 1, 2)
    point = project_diag(block_compose(A, np.zeros(1), np.zeros((1, 2, 2)), b))
    again = project_dense(lift_diag(point), dims)
    np.testing.assert_array_equal(again.vector(), point.vector())


def test_numeric_rank_basic_cases():
    assert numeric_rank(np.zeros((3, 3))) == 0
    assert numeric_rank(np.outer([1.0, 2.0, 3.0], [0.5, -1.0])) == 1
    assert numeric_rank(np.eye(3)) == 3


def test_numeric_rank_invariant_under_transpose_and_rotation(rng):
    M = rng.standard_normal((5, 2)) @ rng.standard_normal((2, 4))
    Q1, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    Q2, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    assert numeric_rank(M, 1e-10) == 2
    assert numeric_rank(M.T, 1e-10) == 2
    assert numeric_rank(Q1 @ M @ Q2, 1e-10) == 2


def test_numeric_rank_rejects_negative_tolerance():
    with pytest.raises(PreconditionError):
        numeric_rank(np.eye(2), -1.0)


def test_admissible_block_is_rank_one_with_orthogonal_beta():
    C = admissible_block([1.0], [1.0, 0.0], 0.7, [[0.0, 2.0]])
    assert C.shape == (3, 3)
    assert numeric_rank(C) == 1
    np.testing.assert_allclose(C[0], [1.0, 0.0, 0.7])
    np.testing.assert_allclose(C[:, 2], [0.7, 0.0, 1.4])
