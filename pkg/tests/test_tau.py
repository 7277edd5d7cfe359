import numpy as np
import pytest

from nonunique.core.blocks import DiagPoint, lift_diag, project_dense
from nonunique.errors import ConvergenceError, DegeneracyError, DimensionError, PreconditionError
from nonunique.geometry import admissible_check, dist_to_segments
from nonunique.refine import pm1d_demo_provider
from nonunique.refine.subsolution import DEMO_SEEDS
from nonunique.tau import (
    SolverOptions,
    decompose_sigma_point,
    dimension_check,
    find_equal_flux_pair,
    lift_tau,
    make_tau,
    map_L,
    map_L_inverse,
    scalar_tau2,
    solve_pq_kernel,
    solve_tau,
    special_tau_n2,
    tau_residual,
)
from nonunique.tau.scalar import decompose_many, m1_delta, m1_G


@pytest.fixture
def pm_pair(pm_flux):
    return find_equal_flux_pair(pm_flux, DEMO_SEEDS)


@pytest.fixture
def provider(pm_flux):
    return pm1d_demo_provider(pm_flux)


def test_equal_flux_pair_of_perona_malik(pm_flux, pm_pair):
    assert pm_pair.p_plus[0] == pytest.approx(0.5)
    assert pm_pair.p_minus[0] == pytest.approx(2.0, abs=1e-10)
    assert pm_pair.flux_gap <= 1e-12
    assert abs(pm_pair.delta) >= 0.1


def test_delta_hand_value(pm_flux):
    assert m1_delta(pm_flux, [0.5], [2.0]) == pytest.approx(-0.1296)


def test_flux_pairing_vanishes_on_equal_flux(pm_flux):
    assert m1_G(pm_flux, [0.5], [2.0]) == pytest.approx(0.0, abs=1e-15)
    assert m1_G(pm_flux, [0.0], [1.0]) == pytest.approx(0.5)


def test_equal_flux_pair_errors(pm_flux):
    with pytest.raises(PreconditionError):
        find_equal_flux_pair(pm_flux, ((0.3, 0.7), (0.5, 3.0)))
    with pytest.raises(ConvergenceError):
        find_equal_flux_pair(pm_flux, ((0.3, 0.7), (5.0, 6.0)))


def test_scalar_tau2_corners_on_the_graph(pm_flux, pm_pair):
    cfg = scalar_tau2(pm_flux, pm_pair.p_plus, pm_pair.p_minus)
    assert np.max(np.abs(tau_residual(cfg, pm_flux))) <= 1e-12
    corners = cfg.corners()
    assert corners[0].A[0, 0] == pytest.approx(pm_pair.p_plus[0])
    assert corners[1].A[0, 0] == pytest.approx(pm_pair.p_minus[0])
    assert corners[0].b[0, 0] == pytest.approx(0.4)


def test_lift_tau_is_admissible_with_the_same_shadow(pm_flux, pm_pair):
    cfg = scalar_tau2(pm_flux, pm_pair.p_plus, pm_pair.p_minus)
    lifted = lift_tau(cfg)
    assert admissible_check(lifted).admissible
    for X, corner in zip(lifted.X, cfg.corners()):
        np.testing.assert_allclose(project_dense(X, cfg.dims).vector(), corner.vector(), atol=1e-12)


def test_decompose_demo_point(pm_flux):
    point = DiagPoint(np.array([[1.25]]), np.array([[0.4]]))
    dec = decompose_sigma_point(pm_flux, point, (np.array([0.6]), 0.4))
    assert dec.lam == pytest.approx(0.5)
    assert dec.p_plus[0] == pytest.approx(0.5)
    assert dec.p_minus[0] == pytest.approx(2.0)
    assert dec.residual <= 1e-10


def test_decompose_rejects_bad_seed_weight(pm_flux):
    point = DiagPoint(np.array([[1.25]]), np.array([[0.4]]))
    with pytest.raises(PreconditionError):
        decompose_sigma_point(pm_flux, point, (np.array([0.6]), 1.5))


def test_decomposition_round_trip_in_the_tube(pm_flux, pm_pair, rng):
    for _ in range(100):
        lam = rng.uniform(0.2, 0.8)
        p = lam * pm_pair.p_plus + (1 - lam) * pm_pair.p_minus
        beta = np.array([0.4 + rng.uniform(-0.005, 0.005)])
        dec = decompose_sigma_point(pm_flux, (p, beta), (pm_pair.p_plus, lam))
        assert 0.0 < dec.lam < 1.0
        assert dec.residual <= 1e-8


def test_vectorized_decomposition_agrees(pm_flux, provider):
    p = np.array([0.9, 1.25, 1.6])
    beta = np.full(3, 0.4)
    lam, xp, xm, ok = decompose_many(pm_flux, p, beta, provider.scalars)
    assert ok.all()
    np.testing.assert_allclose(xp, 0.5, atol=1e-8)
    np.testing.assert_allclose(xm, 2.0, atol=1e-8)
    np.testing.assert_allclose(lam * xp + (1 - lam) * xm, p, atol=1e-10)


def test_provider_membership_and_configuration(provider):
    A = np.array([[[1.25]], [[5.0]]])
    b = np.array([[[0.4]], [[0.0]]])
    np.testing.assert_array_equal(provider.contains(A, b), [True, False])
    point = DiagPoint(np.array([[1.25]]), np.array([[0.4]]))
    cfg = provider.configure(point)
    assert cfg.N == 2
    assert dist_to_segments(lift_tau(cfg), lift_diag(point)) <= 1e-9
    assert provider.configure(point) is cfg


def test_solver_recovers_a_perturbed_configuration(pm_flux, pm_pair):
    exact = scalar_tau2(pm_flux, pm_pair.p_plus, pm_pair.p_minus)
    init = make_tau(exact.rho, exact.p + 1e-5, exact.alpha, exact.s, exact.beta, exact.kappa)
    solution = solve_tau(pm_flux, 2, init)
    assert solution.residual <= 1e-10
    for corner in solution.config.corners():
        assert abs(corner.b[0, 0] - pm_flux(corner.A)[0, 0]) <= 1e-9


def test_solver_reports_best_iterate_on_stall(pm_flux, pm_pair):
    exact = scalar_tau2(pm_flux, pm_pair.p_plus, pm_pair.p_minus)
    init = make_tau(exact.rho, exact.p + 0.1, exact.alpha, exact.s, exact.beta, exact.kappa)
    with pytest.raises(ConvergenceError) as info:
        solve_tau(pm_flux, 2, init, opts=SolverOptions(max_iter=0))
    assert info.value.best is not None
    assert info.value.residual > 1e-10


def test_solver_checks_leg_count(pm_flux, pm_pair):
    exact = scalar_tau2(pm_flux, pm_pair.p_plus, pm_pair.p_minus)
    with pytest.raises(DimensionError):
        solve_tau(pm_flux, 3, exact)


def test_map_L_round_trip(rng):
    point = DiagPoint(rng.standard_normal((2, 2)), rng.standard_normal((2, 2)))
    again = map_L_inverse(map_L(point))
    np.testing.assert_allclose(again.vector(), point.vector())
    with pytest.raises(DimensionError):
        map_L(DiagPoint(np.zeros((1, 3)), np.zeros((1, 3))))


def test_kernel_dimensions(rng):
    for trial in range(20):
        m = 1 + trial % 2
        N = 3 + trial % 3
        alpha = rng.standard_normal((N, 2))
        kernel = solve_pq_kernel(alpha, m)
        assert kernel.p_dim == m * (N - 2)
        assert kernel.q_dim == m * (N - 3)
        for basis in kernel.p_basis:
            np.testing.assert_allclose(alpha.T @ basis, 0.0, atol=1e-10)


def test_collinear_directions_are_degenerate():
    alpha = np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
    with pytest.raises(DegeneracyError, match="directions 0 and 1 are parallel"):
        solve_pq_kernel(alpha, 1)
    alpha = np.array([[0.0, 1.0], [1.0, 0.0], [0.0, -3.0], [2.0, 0.0]])
    with pytest.raises(DegeneracyError, match="directions 0 and 2 are parallel"):
        solve_pq_kernel(alpha, 1)


def test_special_configuration_solves_the_structure_equations(rng):
    alpha = rng.standard_normal((4, 2))
    base = DiagPoint(rng.standard_normal((1, 2)), rng.standard_normal((1, 2)))
    p_coeffs, q_coeffs = rng.standard_normal(2), rng.standard_normal(1)
    delta = np.array([0.3, -0.7])
    special = special_tau_n2(alpha, delta, p_coeffs, q_coeffs, np.full(4, 2.0), base)
    assert not special.degenerate
    assert np.max(np.abs(tau_residual(special.config))) <= 1e-10
    assert admissible_check(lift_tau(special.config)).admissible


def test_dimension_count_matches_formula():
    check = dimension_check(1, 4, seed=0)
    assert check.observed == check.formula == 16
    with pytest.raises(DimensionError):
        dimension_check(1, 2)
