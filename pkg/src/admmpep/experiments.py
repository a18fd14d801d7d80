from __future__ import annotations

import csv
import json
import math
from collections.abc import Iterable, Sequence
from io import StringIO
from pathlib import Path

import attrs
import cattrs.preconf.json
from loguru import logger

from .certificate import ObjectiveVariant, closed_form_objective
from .common import GammaContext
from .model import build_problem
from .results import ComputationError, InternalError, resultify
from .sdp import SolveStatus, solve
from .utils import fauxfrozen, format_real, gather, run_in_thread, time_op

SWEEP_FIELDS = ('gamma', 'sdp_value', 'analytic_value', 'gap', 'status')


@fauxfrozen
class SweepRow:
    gamma: float
    sdp_value: float | None
    analytic_value: float | None
    gap: float | None = attrs.field()
    status: str = 'optimal'

    @gap.default  # pyright: ignore[reportAttributeAccessIssue, reportUntypedFunctionDecorator]
    def _default_gap(self) -> float | None:
        return _gap(self.sdp_value, self.analytic_value)


def _gap(sdp_value: float | None, analytic_value: float | None) -> float | None:
    if sdp_value is None or analytic_value is None:
        return None
    return abs(sdp_value - analytic_value)


def make_grid(gamma_min: float, gamma_max: float, step: float) -> list[float]:
    "An inclusive grid from ``gamma_min`` to ``gamma_max``, rounded to 12 significant digits."
    if not step > 0:
        raise ValueError(f'step must be positive, got {step!r}')
    if gamma_max < gamma_min:
        raise ValueError(f'empty range [{gamma_min}, {gamma_max}]')
    count = math.floor((gamma_max - gamma_min) / step + 1e-9)
    return [float(format_real(gamma_min + i * step)) for i in range(count + 1)]


def _analytic_value(ctx: GammaContext) -> float | None:
    if not ctx.above_golden_ratio:
        return None
    return closed_form_objective(ctx, ObjectiveVariant.Compact)


def compute_sweep_row(
    gamma: float,
    tolerance: float = 1e-9,
    max_iterations: int = 200,
    step_fraction: float = 0.98,
) -> SweepRow:
    """Solve the estimation problem at ``gamma`` and set it against the closed form.

    The closed form is only reported above the golden ratio, where the
    certificate is claimed.  A solve that does not end optimal leaves the
    numerical value empty; its status says why.
    """
    ctx = GammaContext(gamma)
    solution = resultify(
        lambda: solve(build_problem(ctx), tolerance, max_iterations, step_fraction=step_fraction)
    )
    analytic = resultify(_analytic_value, ctx)
    if isinstance(analytic, ComputationError | InternalError):
        logger.warning(f'closed form unavailable at gamma={gamma}: {analytic.message}')
        analytic = None

    if isinstance(solution, ComputationError | InternalError):
        return SweepRow(gamma, None, analytic, status=solution.status)
    if not solution.is_optimal:
        logger.warning(f'no optimal value at gamma={gamma}: {solution.diagnostic}')
        return SweepRow(gamma, None, analytic, status=solution.status.value)
    return SweepRow(gamma, solution.objective, analytic, status=solution.status.value)


async def run_sweep(
    grid: Iterable[float],
    tolerance: float = 1e-9,
    max_iterations: int = 200,
    step_fraction: float = 0.98,
) -> list[SweepRow]:
    "Compute one row per grid point in worker threads; rows are returned in grid order."
    compute = run_in_thread(compute_sweep_row)
    grid = list(grid)
    with time_op(lambda t: logger.info(f'swept {len(grid)} values of gamma in {t:.3f}s')):
        return await gather(compute(g, tolerance, max_iterations, step_fraction) for g in grid)


def format_sweep_csv(rows: Iterable[SweepRow]) -> str:
    buffer = StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(SWEEP_FIELDS)
    writer.writerows(
        (
            format_real(r.gamma),
            format_real(r.sdp_value),
            format_real(r.analytic_value),
            format_real(r.gap),
            r.status,
        )
        for r in rows
    )
    return buffer.getvalue()


def write_sweep_csv(rows: Iterable[SweepRow], path: Path) -> None:
    path.write_text(format_sweep_csv(rows), encoding='utf-8')


def _parse_optional(value: str) -> float | None:
    return float(value) if value else None


def read_sweep_csv(path: Path) -> list[SweepRow]:
    with path.open(encoding='utf-8', newline='') as file:
        reader = csv.DictReader(file)
        if tuple(reader.fieldnames or ()) != SWEEP_FIELDS:
            raise ValueError(f'unexpected CSV header: {reader.fieldnames}')
        return [
            SweepRow(
                gamma=float(r['gamma']),
                sdp_value=_parse_optional(r['sdp_value']),
                analytic_value=_parse_optional(r['analytic_value']),
                gap=_parse_optional(r['gap']),
                status=r['status'],
            )
            for r in reader
        ]


sweep_converter = cattrs.preconf.json.make_converter()


def format_sweep_json(rows: Sequence[SweepRow]) -> str:
    return json.dumps(sweep_converter.unstructure(list(rows), list[SweepRow]), indent=2)


def write_sweep_json(rows: Sequence[SweepRow], path: Path) -> None:
    path.write_text(format_sweep_json(rows), encoding='utf-8')


def write_plot_data(rows: Iterable[SweepRow], path: Path) -> None:
    "Two whitespace-separated columns, ``gamma`` and the optimal value, for gnuplot."
    lines = ['# gamma sdp_value']
    lines.extend(
        f'{format_real(r.gamma)} {format_real(r.sdp_value)}'
        for r in rows
        if r.sdp_value is not None and r.status == SolveStatus.Optimal.value
    )
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
