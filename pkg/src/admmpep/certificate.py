"""The analytic rank-two feasible point of the estimation problem.

``X_f = alpha * Pbar^T Pbar`` is feasible for every dual step length above the
golden ratio and attains the closed-form value ``<C, X_f>``, which exceeds one
there.  Everything here is evaluated in floating point and cross-checked
numerically.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Sequence

import attrs
import numpy as np

from .common import GOLDEN_RATIO, GammaContext, Matrix
from .model import INEQUALITY_LABELS, build_problem, constraint_values
from .results import DomainError
from .sdp import SdpSolution, rank_estimate
from .utils import StrEnum, format_real

DENOMINATOR_FLOOR = 1e-13
RADICAND_FLOOR = -1e-13

FEASIBILITY_TOLERANCE = 1e-10
RANK_TOLERANCE = 1e-8


class ObjectiveVariant(StrEnum):
    Expanded = enum.auto()
    Compact = enum.auto()


def _checked_quotient(ctx: GammaContext, numerator: float, denominator: float, label: str):
    if abs(denominator) < DENOMINATOR_FLOOR:
        raise DomainError(ctx.gamma, label, denominator)
    return numerator / denominator


@attrs.frozen(eq=False)
class RankTwoCertificate:
    gamma: float
    alpha: float
    pbar: Matrix
    xf: Matrix
    objective_value: float

    @property
    def factor(self) -> Matrix:
        "The Gram factor ``sqrt(alpha) * Pbar`` of ``X_f``."
        return math.sqrt(self.alpha) * self.pbar


def build_certificate(ctx: GammaContext) -> RankTwoCertificate:
    gamma = ctx.gamma
    root = ctx.sqrt_term

    # Shared radicand under the square roots of the first row
    radicand = 1 + gamma - gamma**2 + (gamma - 1) * root
    if radicand < RADICAND_FLOOR:
        raise DomainError(gamma, '1 + gamma - gamma**2 + (gamma - 1) sqrt(gamma**2 - 1)', radicand)
    sqrt_radicand = math.sqrt(max(radicand, 0.0))

    alpha = _checked_quotient(
        ctx,
        gamma**2 - 2,
        -8 - gamma + 6 * gamma**2 - gamma**3 + (-6 + 3 * gamma + gamma**2) * root,
        'the denominator of alpha',
    )
    if not alpha > 0:
        raise DomainError(gamma, 'alpha, which must be positive', alpha)

    q = -1 - 3 * gamma + 2 * gamma**2 + (3 - 2 * gamma) * root
    shared = 2 + gamma * q

    pbar = np.zeros((2, 5))
    pbar[0, 0] = _checked_quotient(ctx, q * sqrt_radicand, -shared, 'the denominator of Pbar(1, 1)')
    pbar[0, 1] = sqrt_radicand / gamma
    pbar[0, 2] = _checked_quotient(
        ctx, -root, (1 + gamma) * sqrt_radicand, 'the denominator of Pbar(1, 3)'
    )
    pbar[0, 3] = (1 - gamma**2 - gamma * root) * sqrt_radicand / (gamma + gamma**2)
    pbar[0, 4] = -_checked_quotient(
        ctx, 2 * (gamma - 1) * sqrt_radicand, gamma * shared, 'the denominator of Pbar(1, 5)'
    )
    pbar[1, 2] = (1 + gamma + root) / (1 + gamma)
    pbar[1, 4] = 1.0

    xf = alpha * (pbar.T @ pbar)
    xf = (xf + xf.T) / 2
    objective_value = constraint_values(build_problem(ctx), xf)[2]
    return RankTwoCertificate(
        gamma=gamma, alpha=alpha, pbar=pbar, xf=xf, objective_value=objective_value
    )


def closed_form_objective(
    ctx: GammaContext, variant: ObjectiveVariant = ObjectiveVariant.Compact
) -> float:
    "The value ``<C, X_f>`` in one of its two closed forms."
    gamma = ctx.gamma
    root = ctx.sqrt_term
    if gamma - 1 < DENOMINATOR_FLOOR:
        raise DomainError(gamma, 'gamma - 1', gamma - 1)

    match variant:
        case ObjectiveVariant.Expanded:
            reciprocal = (
                3
                + 2 / (gamma - 1)
                - 2 * gamma**2
                + 2 * (-1 - gamma + gamma**2) * root / (gamma - 1)
            )
        case ObjectiveVariant.Compact:
            reciprocal = 2 * (1 + gamma - gamma**2) / ((gamma - 1) * (gamma + root)) + 1

    if abs(reciprocal) < DENOMINATOR_FLOOR:
        raise DomainError(gamma, f'the {variant} closed form', reciprocal)
    return 1 / reciprocal


@attrs.frozen(eq=False)
class FeasibilityReport:
    """Numerical verification of the certificate at one dual step length."""

    gamma: float
    alpha: float
    inequality_values: tuple[float, ...]
    equality_residual: float
    eigenvalues: tuple[float, ...]
    rank: int
    objective_trace: float
    objective_expanded: float
    objective_compact: float
    tolerance: float = FEASIBILITY_TOLERANCE

    @property
    def objective_discrepancy(self) -> float:
        "The largest pairwise difference between the three objective evaluations."
        values = (self.objective_trace, self.objective_expanded, self.objective_compact)
        return max(abs(a - b) for a in values for b in values)

    @property
    def within_claimed_region(self) -> bool:
        return self.gamma > GOLDEN_RATIO

    @property
    def feasible(self) -> bool:
        return (
            min(self.inequality_values) >= -self.tolerance
            and self.equality_residual <= self.tolerance
        )

    @property
    def passed(self) -> bool:
        return (
            self.feasible
            and self.rank == 2
            and self.alpha > 0
            and self.objective_discrepancy <= self.tolerance * (1 + abs(self.objective_trace))
            and (not self.within_claimed_region or self.objective_trace > 1)
        )

    def rows(self) -> list[tuple[str, str, str]]:
        def verdict(condition: bool):
            return 'ok' if condition else 'FAIL'

        return [
            ('quantity', 'value', 'check'),
            ('gamma', format_real(self.gamma), ''),
            ('alpha', format_real(self.alpha), verdict(self.alpha > 0)),
            *(
                (f'A{i} {label}', format_real(v), verdict(v >= -self.tolerance))
                for i, (label, v) in enumerate(zip(INEQUALITY_LABELS, self.inequality_values), 1)
            ),
            (
                'A7 residual',
                format_real(self.equality_residual),
                verdict(self.equality_residual <= self.tolerance),
            ),
            ('eigenvalues', ', '.join(f'{e:.3e}' for e in self.eigenvalues), ''),
            ('rank', str(self.rank), verdict(self.rank == 2)),
            ('<C, X_f> (trace)', format_real(self.objective_trace), ''),
            ('<C, X_f> (expanded)', format_real(self.objective_expanded), ''),
            ('<C, X_f> (compact)', format_real(self.objective_compact), ''),
            ('max discrepancy', f'{self.objective_discrepancy:.3e}', ''),
        ]


def feasibility_report(
    ctx: GammaContext, tolerance: float = FEASIBILITY_TOLERANCE
) -> FeasibilityReport:
    certificate = build_certificate(ctx)
    inequality_values, equality_value, objective = constraint_values(
        build_problem(ctx), certificate.xf
    )
    eigenvalues: Sequence[float] = np.linalg.eigvalsh(certificate.xf).tolist()
    return FeasibilityReport(
        gamma=ctx.gamma,
        alpha=certificate.alpha,
        inequality_values=inequality_values,
        equality_residual=abs(equality_value - 1),
        eigenvalues=tuple(eigenvalues),
        rank=rank_estimate(certificate.xf, RANK_TOLERANCE),
        objective_trace=objective,
        objective_expanded=closed_form_objective(ctx, ObjectiveVariant.Expanded),
        objective_compact=closed_form_objective(ctx, ObjectiveVariant.Compact),
        tolerance=tolerance,
    )


def numerical_optimum_rank(solution: SdpSolution, tolerance: float = 1e-6) -> int:
    "The numerical rank of a solver optimum, which is two above the golden ratio."
    return rank_estimate(solution.X, tolerance)
