from __future__ import annotations

import asyncio
import enum
import json
from collections.abc import Sequence
from pathlib import Path
from typing import Any, Generic, NoReturn, TypeVar

import cattrs
import click
from loguru import logger

from . import __version__
from . import results as R
from ._logging import setup_logging
from .common import GOLDEN_RATIO, GammaContext
from .config import Config
from .utils import StrEnum, format_real, tabulate

_TStrEnum = TypeVar('_TStrEnum', bound=StrEnum)

EXIT_USAGE = 1
EXIT_FAILURE = 2

COUNTEREXAMPLE_MARGIN = 0.01
REPLAY_TOLERANCE = 1e-6


@logger.catch(reraise=True)
def main(*args: Any, **kwargs: Any) -> None:
    cli(*args, **kwargs)


class _StrEnumChoiceParam(click.Choice, Generic[_TStrEnum]):
    def __init__(
        self,
        choice_enum: type[_TStrEnum],
        case_sensitive: bool = True,
    ) -> None:
        super().__init__(
            choices=[m.value for m in choice_enum],
            case_sensitive=case_sensitive,
        )
        self.__choice_enum = choice_enum

    def convert(
        self, value: Any, param: click.Parameter | None, ctx: click.Context | None
    ) -> _TStrEnum:
        converted_value = super().convert(value, param, ctx)
        return self.__choice_enum(converted_value)


class _Group(click.Group):
    "Report usage errors with exit code 1, keeping 2 for failed computations."

    def make_context(self, *args: Any, **kwargs: Any) -> click.Context:
        try:
            return super().make_context(*args, **kwargs)
        except click.UsageError as exc:
            exc.exit_code = EXIT_USAGE
            raise

    def invoke(self, ctx: click.Context) -> Any:
        try:
            return super().invoke(ctx)
        except click.UsageError as exc:
            exc.exit_code = EXIT_USAGE
            raise


class CtxObjWrapper:
    def __init__(self, ctx: click.Context) -> None:
        try:
            self.config = Config.read().ensure_dirs()
        except cattrs.ClassValidationError as exc:
            raise click.UsageError(
                f'invalid configuration: {"; ".join(map(str, exc.exceptions))}'
            ) from None

        setup_logging(self.config.logging_dir, *ctx.params['debug'])


def _fail(message: str) -> NoReturn:
    click.echo(message, err=True)
    click.get_current_context().exit(EXIT_FAILURE)


def _echo_table(rows: Sequence[tuple[object, ...]]) -> None:
    click.echo(tabulate(rows))


def _parse_debug_option(
    _: click.Context, __: click.Parameter, value: float
) -> tuple[bool, bool, bool]:
    return (value > 0, value > 1, value > 2)


def _tolerance(mw: CtxObjWrapper, value: float | None) -> float:
    return mw.config.tolerance if value is None else value


_tol_option = click.option(
    '--tol',
    'tolerance',
    type=click.FloatRange(min=0, min_open=True),
    default=None,
    help='Solver tolerance.  [default: configured tolerance, 1e-09]',
)


@click.group(cls=_Group, context_settings={'help_option_names': ('-h', '--help')})
@click.version_option(__version__, prog_name=__spec__.parent)
@click.option(
    '--debug',
    '-d',
    count=True,
    help='Log incrementally more things.  Additive.',
    callback=_parse_debug_option,
)
@click.pass_context
def cli(ctx: click.Context, **__: object) -> None:
    "Performance estimation of one ADMM iteration beyond the golden ratio."
    ctx.obj = CtxObjWrapper(ctx)


@cli.command
@click.option(
    '--gamma',
    required=True,
    type=click.FloatRange(min=1, max=2.5, min_open=True),
    help='Dual step length.',
)
@_tol_option
@click.pass_obj
def solve(mw: CtxObjWrapper, gamma: float, tolerance: float | None) -> None:
    "Solve the estimation problem numerically."
    from .model import build_problem
    from .sdp import solve as solve_problem

    config = mw.config
    solution = solve_problem(
        build_problem(GammaContext(gamma)),
        _tolerance(mw, tolerance),
        config.max_iterations,
        step_fraction=config.step_fraction,
    )
    residuals = solution.residuals
    _echo_table(
        [
            ('quantity', 'value'),
            ('gamma', format_real(gamma)),
            ('status', solution.status.value),
            ('objective', f'{solution.objective:.6f}'),
            ('primal infeasibility', f'{residuals.primal_infeasibility:.3e}'),
            ('dual infeasibility', f'{residuals.dual_infeasibility:.3e}'),
            ('gap', f'{residuals.gap:.3e}'),
            ('iterations', solution.iterations),
        ]
    )
    if gamma > 2:
        click.echo('note: gamma > 2 extrapolates beyond the studied range')
    if not solution.is_optimal:
        _fail(R.SolverFailure(solution).message)


@cli.command
@click.option(
    '--gamma',
    required=True,
    type=click.FloatRange(min=1, max=2, min_open=True),
    help='Dual step length.',
)
def verify(gamma: float) -> None:
    "Verify the analytic rank-two certificate."
    from .certificate import feasibility_report

    report = R.resultify(feasibility_report, GammaContext(gamma))
    if isinstance(report, R.ComputationError | R.InternalError):
        _fail(report.message)

    _echo_table(report.rows())
    if not report.within_claimed_region:
        click.echo(f'gamma <= {GOLDEN_RATIO:.6f}: outside claimed region')
    click.echo(f'objective {report.objective_trace:.6f}')
    if report.passed:
        click.echo('PASS')
    else:
        _fail('FAIL')


class _OutputFormat(StrEnum):
    Csv = enum.auto()
    Json = enum.auto()


@cli.command
@click.option('--gamma-min', type=float, default=None, help='Smallest dual step length.')
@click.option('--gamma-max', type=float, default=None, help='Largest dual step length.')
@click.option(
    '--step', type=click.FloatRange(min=0, min_open=True), default=None, help='Grid spacing.'
)
@click.option(
    '--out',
    'output_path',
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help='Write the table here instead of to standard output.',
)
@click.option(
    '--format',
    'output_format',
    type=_StrEnumChoiceParam(_OutputFormat),
    default=_OutputFormat.Csv.value,
    show_default=True,
    help='Output format.',
)
@click.option(
    '--plot-data',
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help='Also write two-column plot data.',
)
@_tol_option
@click.pass_obj
def sweep(
    mw: CtxObjWrapper,
    gamma_min: float | None,
    gamma_max: float | None,
    step: float | None,
    output_path: Path | None,
    output_format: _OutputFormat,
    plot_data: Path | None,
    tolerance: float | None,
) -> None:
    "Sweep the dual step length and tabulate the optimal values."
    from . import experiments

    config = mw.config
    gamma_min = config.sweep_gamma_min if gamma_min is None else gamma_min
    gamma_max = config.sweep_gamma_max if gamma_max is None else gamma_max
    step = config.sweep_step if step is None else step
    if not 1 < gamma_min < gamma_max <= 2.5:
        raise click.UsageError(
            f'expected 1 < gamma-min < gamma-max <= 2.5, got {gamma_min} and {gamma_max}'
        )

    grid = experiments.make_grid(gamma_min, gamma_max, step)
    rows = asyncio.run(
        experiments.run_sweep(
            grid, _tolerance(mw, tolerance), config.max_iterations, config.step_fraction
        )
    )

    match output_format:
        case _OutputFormat.Csv:
            document = experiments.format_sweep_csv(rows)
        case _OutputFormat.Json:
            document = experiments.format_sweep_json(rows)

    try:
        if output_path is None:
            click.echo(document, nl=False)
        else:
            output_path.write_text(document, encoding='utf-8')
            click.echo(f'wrote {len(rows)} rows to {output_path}', err=True)
        if plot_data is not None:
            experiments.write_plot_data(rows, plot_data)
    except OSError as exc:
        logger.warning(f'unable to write sweep output: {exc}')
        _fail(f'unable to write output: {exc}')


@cli.command
@click.option(
    '--gamma',
    required=True,
    type=click.FloatRange(min=GOLDEN_RATIO + COUNTEREXAMPLE_MARGIN, max=2, min_open=True),
    help='Dual step length, above the golden ratio.',
)
@click.option(
    '--out',
    'output_path',
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help='Write the instance here instead of to standard output.',
)
def counterexample(gamma: float, output_path: Path | None) -> None:
    "Export a convex instance on which the measure increases in one step."
    from .admm import build_instance, instance_to_json, replay_report

    instance = R.resultify(build_instance, GammaContext(gamma))
    if isinstance(instance, R.ComputationError | R.InternalError):
        _fail(instance.message)

    report = replay_report(instance)
    if report.max_deviation > REPLAY_TOLERANCE:
        _fail(
            f'replayed iterate deviates from the designated one by {report.max_deviation:.3e}'
        )

    document = json.dumps(instance_to_json(instance, report), indent=2)
    if output_path is None:
        click.echo(document)
    else:
        try:
            output_path.write_text(document, encoding='utf-8')
        except OSError as exc:
            _fail(f'unable to write output: {exc}')
        click.echo(
            f'R_k = {report.measure_k:.12g}, R_next = {report.measure_next:.12g}', err=True
        )

    if not report.increased:
        _fail('the measure did not increase')


@cli.command('show-config')
@click.pass_obj
def show_config(mw: CtxObjWrapper) -> None:
    "Show the active configuration."
    click.echo(mw.config.encode_for_display())

