from __future__ import annotations

import math

import numpy as np
import pytest

from admmpep.certificate import (
    ObjectiveVariant,
    build_certificate,
    closed_form_objective,
    feasibility_report,
    numerical_optimum_rank,
)
from admmpep.common import GOLDEN_RATIO, GammaContext
from admmpep.model import build_problem, constraint_values
from admmpep.results import DomainError
from admmpep.sdp import solve

CLAIMED_GRID = np.linspace(1.63, 2.0, 38).tolist()


def test_certificate_at_two():
    certificate = build_certificate(GammaContext(2))
    assert certificate.alpha == pytest.approx(2 / (6 + 4 * math.sqrt(3)), rel=1e-12)
    assert certificate.alpha == pytest.approx(0.1547005, abs=1e-7)
    assert certificate.pbar[1].tolist() == pytest.approx(
        [0, 0, (3 + math.sqrt(3)) / 3, 0, 1], rel=1e-12
    )
    assert certificate.pbar[0].tolist() == pytest.approx(
        [1.1687709, 0.4277998, -0.6747902, -0.9217805, -1.5965707], abs=1e-7
    )
    assert certificate.objective_value == pytest.approx((2 + math.sqrt(3)) / math.sqrt(3))


def test_certificate_factor_reproduces_gram_matrix():
    certificate = build_certificate(GammaContext(1.8))
    factor = certificate.factor
    assert factor.shape == (2, 5)
    assert factor.T @ factor == pytest.approx(certificate.xf, abs=1e-12)
    assert np.array_equal(certificate.xf, certificate.xf.T)


@pytest.mark.parametrize('gamma', CLAIMED_GRID)
def test_closed_forms_agree(gamma: float):
    ctx = GammaContext(gamma)
    expanded = closed_form_objective(ctx, ObjectiveVariant.Expanded)
    compact = closed_form_objective(ctx, ObjectiveVariant.Compact)
    assert expanded == pytest.approx(compact, rel=1e-12)
    assert compact > 1


def test_closed_form_is_one_at_golden_ratio():
    assert closed_form_objective(GammaContext(GOLDEN_RATIO)) == pytest.approx(1, abs=1e-9)


@pytest.mark.parametrize(
    ('gamma', 'expected', 'tolerance'),
    [
        (2.0, (2 + math.sqrt(3)) / math.sqrt(3), 1e-8),
        (2.0, 2.154700538, 1e-8),
        (1.8, 1.500760, 1e-5),
        (1.7, 1.214405, 1e-5),
    ],
)
def test_closed_form_values(gamma: float, expected: float, tolerance: float):
    assert closed_form_objective(GammaContext(gamma)) == pytest.approx(expected, abs=tolerance)


@pytest.mark.parametrize('gamma', CLAIMED_GRID)
def test_certificate_is_feasible_on_claimed_region(gamma: float):
    ctx = GammaContext(gamma)
    certificate = build_certificate(ctx)
    assert certificate.alpha > 0

    inequality_values, equality_value, objective = constraint_values(
        build_problem(ctx), certificate.xf
    )
    assert min(inequality_values) >= -1e-10
    assert equality_value == pytest.approx(1, abs=1e-10)
    assert objective == pytest.approx(closed_form_objective(ctx), rel=1e-10)

    eigenvalues = np.linalg.eigvalsh(certificate.xf)
    largest = eigenvalues[-1]
    assert np.count_nonzero(eigenvalues > 1e-8 * largest) == 2
    assert np.all(np.abs(eigenvalues[:3]) < 1e-9 * largest)


@pytest.mark.parametrize('gamma', [1.8, 2.0])
def test_feasibility_report_passes(gamma: float):
    report = feasibility_report(GammaContext(gamma))
    assert report.feasible
    assert report.rank == 2
    assert report.within_claimed_region
    assert report.objective_discrepancy < 1e-12
    assert report.passed

    rows = report.rows()
    assert rows[0] == ('quantity', 'value', 'check')
    assert all(len(r) == 3 for r in rows)
    assert 'FAIL' not in {check for *_, check in rows}


def test_feasibility_report_at_golden_ratio_boundary():
    report = feasibility_report(GammaContext(1.618034))
    assert report.objective_trace == pytest.approx(1, abs=1e-6)
    assert report.passed


def test_feasibility_report_below_golden_ratio_is_flagged():
    report = feasibility_report(GammaContext(1.3))
    assert report.alpha > 0
    assert not report.within_claimed_region


def test_alpha_denominator_vanishing_raises():
    with pytest.raises(DomainError) as exc_info:
        build_certificate(GammaContext(math.sqrt(2)))
    assert exc_info.value.gamma == pytest.approx(math.sqrt(2))
    assert 'alpha' in exc_info.value.subexpression
    assert exc_info.value.message.startswith(f'gamma={math.sqrt(2)!r} is outside the domain of')


@pytest.mark.parametrize('gamma', [1.7, 2.0])
def test_solver_optimum_has_rank_two_above_golden_ratio(gamma: float):
    solution = solve(build_problem(GammaContext(gamma)))
    assert numerical_optimum_rank(solution) == 2
