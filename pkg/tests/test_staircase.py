import numpy as np
import pytest

from nonunique.config import DEFAULT_GROWTH
from nonunique.construct import CoverMode, GridSpec, build_staircase, staircase_schedule
from nonunique.core.blocks import ProblemDims, admissible_block
from nonunique.errors import DimensionError, PreconditionError
from nonunique.geometry import build_tn
from nonunique.refine.subsolution import DEMO_SEEDS
from nonunique.schema import CertificateStatus
from nonunique.tau import find_equal_flux_pair, lift_tau, scalar_tau2


@pytest.fixture
def two_leg():
    C = admissible_block([1.0], [1.0], 0.5, [[0.0]])
    return build_tn(np.zeros((2, 2)), [(C, 2.0), (-C, 3.0)], dims=ProblemDims(1, 1))


def test_schedule_for_equal_factors():
    schedule = staircase_schedule([2.0, 2.0], 0.1)
    assert schedule.k == 2
    assert schedule.mu == pytest.approx(0.25)
    assert 0.0060 <= schedule.eps_prime <= 0.00657
    assert all(schedule.checks().values())


def test_schedule_meets_its_bounds_for_other_factors():
    for kappa, eps in [([2.0, 1.05], 0.1), ([1.5, 2.5, 4.0], 0.3), ([3.0, 3.0, 3.0, 3.0], 0.01)]:
        schedule = staircase_schedule(kappa, eps)
        assert all(schedule.checks().values())
        assert schedule.N == len(kappa)


def test_schedule_arguments():
    with pytest.raises(PreconditionError):
        staircase_schedule([2.0], 0.1)
    with pytest.raises(PreconditionError):
        staircase_schedule([1.0, 2.0], 0.1)
    with pytest.raises(PreconditionError):
        staircase_schedule([2.0, 2.0], 1.0)


def test_corner_needs_no_oscillation(two_leg):
    res = build_staircase(two_leg, two_leg.X[0], GridSpec.cube(1, 32), 0.1, 4.0)
    assert res.levels == []
    assert res.field.sup_norm() == 0.0
    assert res.masks[0].all()
    assert res.fractions == [1.0, 0.0]
    assert res.report.nu == pytest.approx([1.0, 0.0])
    assert res.report.passed


@pytest.mark.parametrize("mode", [CoverMode.REGION, CoverMode.CUBES])
def test_midpoint_staircase_structure(two_leg, mode):
    Y = 0.5 * two_leg.X[0] + 0.5 * two_leg.anchors[0]
    res = build_staircase(two_leg, Y, GridSpec.cube(1, 64), 0.5, 2.0, mode=mode, workers=2)
    assert res.report.position == pytest.approx(0.5)
    assert res.report.segment == 0
    assert sum(res.report.nu) == pytest.approx(1.0)
    assert res.levels[0].lam == pytest.approx(0.5)
    assert res.levels[0].segment == 0
    assert np.all(res.masks.sum(axis=0) <= 1)
    assert sum(res.fractions) <= 1.0
    assert np.all(res.field.u[0] == 0.0) and np.all(res.field.u[:, -1] == 0.0)


def test_staircase_preconditions(two_leg, tartar):
    grid = GridSpec.cube(1, 32)
    with pytest.raises(PreconditionError):
        build_staircase(two_leg, np.full((2, 2), 9.0), grid, 0.1, 4.0)
    with pytest.raises(PreconditionError):
        build_staircase(two_leg, two_leg.X[0], grid, 0.0, 4.0)
    with pytest.raises(DimensionError):
        build_staircase(tartar[1], tartar[0][0], grid, 0.1, 4.0)
    with pytest.raises(DimensionError):
        build_staircase(two_leg, two_leg.X[0], GridSpec.cube(2, 8), 0.1, 4.0)
    C = np.outer([1.0, 0.5], [1.0, 0.2])
    bad = build_tn(np.zeros((2, 2)), [(C, 2.0), (-C, 2.0)], dims=ProblemDims(1, 1))
    with pytest.raises(PreconditionError):
        build_staircase(bad, bad.X[0], grid, 0.1, 4.0)


def test_frequency_lowered_until_levels_resolve(two_leg):
    Y = 0.5 * two_leg.X[0] + 0.5 * two_leg.anchors[0]
    res = build_staircase(two_leg, Y, GridSpec.cube(1, 64), 0.5, 2.0)
    assert res.report.requested_frequency == 2.0
    assert res.report.first_frequency == 1.0
    assert res.levels[0].frequency == 1.0
    done = [lvl for lvl in res.levels if not lvl.skipped]
    for prev, nxt in zip(done, done[1:]):
        assert nxt.frequency == pytest.approx(DEFAULT_GROWTH * prev.frequency)
    skipped = [lvl for lvl in res.levels if lvl.skipped]
    assert all(lvl.reason in ("empty region", "under-resolved") for lvl in skipped)
    assert len(skipped) <= 1 and (not skipped or res.levels[-1].skipped)


def test_growth_must_exceed_one(two_leg):
    Y = 0.5 * two_leg.X[0] + 0.5 * two_leg.anchors[0]
    with pytest.raises(PreconditionError):
        build_staircase(two_leg, Y, GridSpec.cube(1, 32), 0.5, 2.0, growth=1.0)


def test_non_corner_staircase_passes():
    C = admissible_block([0.01], [1.0], 0.0, [[0.0]])
    cfg = build_tn(np.zeros((2, 2)), [(C, 2.0), (-C, 3.0)], dims=ProblemDims(1, 1))
    Y = 0.5 * cfg.X[0] + 0.5 * cfg.anchors[0]
    res = build_staircase(cfg, Y, GridSpec.cube(1, 512), 0.5, 8.0)
    report = res.report
    assert report.first_frequency == 1.0
    assert sum(not lvl.skipped for lvl in res.levels) >= 2
    assert report.fractions[0] >= 0.375
    assert report.fractions[1] >= 0.125
    assert report.sup_omega < 0.5
    assert report.flat_inclusion_distance <= 1e-9
    assert np.all(res.masks.sum(axis=0) <= 1)
    assert report.passed, [c for c in report.certificates if not c.passed]


def test_double_well_measure_bound(pm_flux):
    pair = find_equal_flux_pair(pm_flux, DEMO_SEEDS)
    cfg = lift_tau(scalar_tau2(pm_flux, pair.p_plus, pair.p_minus))
    Y = 0.5 * cfg.X[0] + 0.5 * cfg.anchors[0]
    res = build_staircase(cfg, Y, GridSpec.cube(1, 1024), 0.1, 128.0)
    report = res.report
    assert sum(report.fractions) >= 0.85
    assert np.all(res.masks.sum(axis=0) <= 1)
    assert report.max_inclusion_distance <= 0.1 + report.inclusion_slack
    assert report.flat_inclusion_distance <= 0.1
    status = {c.name: c.status for c in report.certificates}
    assert status["inclusion"] == CertificateStatus.PASS
    assert status["fraction_total"] == CertificateStatus.PASS
    assert report.first_frequency <= report.requested_frequency
