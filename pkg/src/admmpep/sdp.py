"""A dense primal-dual interior-point solver for the estimation problem.

The primal is

    max <C, X>  s.t.  <A_i, X> = s_i >= 0,  <A_eq, X> = b,  X PSD

and the dual

    min b t  s.t.  Z = t A_eq - sum_i lambda_i A_i - C PSD,  lambda >= 0.

Iterates are infeasible-start; each iteration takes a Mehrotra
predictor-corrector step along the HKM direction for the PSD block and the
usual diagonally scaled direction for the slack block.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Iterator
from itertools import count

import attrs
import numpy as np
import numpy.typing as npt
from loguru import logger

from .common import Matrix, Vector, as_symmetric
from .model import SdpProblem, trace_inner
from .results import SolverFailure
from .utils import StrEnum

UNBOUNDED_OBJECTIVE = 1e6

# Once mu drops below this multiple of (1 + |objective|) the centring parameter
# is kept at or above CENTERING_FLOOR
RECENTRING_MU = 1e-10
CENTERING_FLOOR = 0.1

STALLED_MU = 1e-15
STALLED_STEP = 1e-12


class SolveStatus(StrEnum):
    Optimal = enum.auto()
    MaxIterations = enum.auto()
    NumericalFailure = enum.auto()


@attrs.frozen
class IterateRecord:
    primal_objective: float
    dual_objective: float
    primal_infeasibility: float
    dual_infeasibility: float
    mu: float


@attrs.frozen
class KktResiduals:
    primal_infeasibility: float
    dual_infeasibility: float
    gap: float

    def __iter__(self) -> Iterator[float]:
        return iter((self.primal_infeasibility, self.dual_infeasibility, self.gap))

    def within(self, tolerance: float) -> bool:
        return max(self) <= tolerance


@attrs.frozen(eq=False)
class SdpSolution:
    X: Matrix
    slack: Vector
    dual_ineq: Vector
    dual_eq: float
    dual_slack_matrix: Matrix
    objective: float
    status: SolveStatus
    residuals: KktResiduals
    iterations: int
    history: tuple[IterateRecord, ...] = ()
    diagnostic: str = ''

    @property
    def dual_objective(self) -> float:
        return self.dual_eq

    @property
    def is_optimal(self) -> bool:
        return self.status is SolveStatus.Optimal


def _sym(matrix: Matrix) -> Matrix:
    return (matrix + matrix.T) / 2


def _max_step_psd(x: Matrix, dx: Matrix) -> float:
    """The largest ``a`` for which ``x + a dx`` stays PSD.

    Read off the eigenvalues of ``x^-1/2 dx x^-1/2``; when ``x`` has lost
    definiteness to rounding, back off from a unit step instead.
    """
    eigenvalues, vectors = np.linalg.eigh(x)
    if eigenvalues[0] <= 0:
        return _backtrack_psd(x, dx)
    root = vectors / np.sqrt(eigenvalues)
    smallest = float(np.linalg.eigvalsh(_sym(root.T @ dx @ root))[0])
    return math.inf if smallest >= 0 else -1 / smallest


def _backtrack_psd(x: Matrix, dx: Matrix, halvings: int = 52) -> float:
    step = 1.0
    for _ in range(halvings):
        if np.linalg.eigvalsh(_sym(x + step * dx))[0] > 0:
            return step
        step /= 2
    return 0.0


def _max_step_orthant(v: Vector, dv: Vector) -> float:
    decreasing = dv < 0
    if not decreasing.any():
        return math.inf
    return float(np.min(-v[decreasing] / dv[decreasing]))


@attrs.define(eq=False)
class _Iterate:
    x: Matrix
    s: Vector
    lam: Vector
    t: float
    z: Matrix


@attrs.frozen(eq=False)
class _Candidate:
    "An iterate with ``X`` rescaled onto the equality constraint, and its certified residuals."

    iterate: _Iterate
    x: Matrix
    residuals: KktResiduals
    merit: float


class InteriorPointSolver:
    """Solve a single :class:`SdpProblem`.

    An instance owns its workspace and may only be run once.

    Every iterate is rescaled onto the equality constraint, which is possible
    because the inequalities are homogeneous, and its KKT residuals are
    recomputed as :func:`kkt_report` would.  The solve stops as soon as the
    primal infeasibility, the dual infeasibility relative to ``1 + ||C||`` and
    the gap are all below ``tolerance``.  On failure the best rescaled iterate
    seen is returned.
    """

    def __init__(
        self,
        problem: SdpProblem,
        *,
        tolerance: float = 1e-9,
        max_iterations: int = 200,
        step_fraction: float = 0.98,
    ) -> None:
        if not tolerance > 0:
            raise ValueError(f'tolerance must be positive, got {tolerance!r}')
        if max_iterations < 1:
            raise ValueError(f'max_iterations must be at least 1, got {max_iterations!r}')
        if not 0 < step_fraction < 1:
            raise ValueError(f'step_fraction must lie in (0, 1), got {step_fraction!r}')

        self.problem = problem
        self.tolerance = tolerance
        self.max_iterations = max_iterations
        self.step_fraction = step_fraction

        n = problem.dimension
        self._ineq = np.array(problem.inequalities, dtype=np.float64).reshape(-1, n, n)
        self._eq = problem.equality
        self._stack = np.concatenate([self._ineq, self._eq[np.newaxis]])
        self._c = problem.objective
        self._b = problem.equality_rhs
        self._c_norm = float(np.linalg.norm(self._c))
        self._history: list[IterateRecord] = []
        self._best: _Candidate | None = None
        self._used = False

    @property
    def inequality_count(self) -> int:
        return self._ineq.shape[0]

    def _initial_iterate(self) -> _Iterate:
        n = self.problem.dimension
        trace = float(np.trace(self._eq))
        x = np.eye(n) * (self._b / trace if trace > 0 and self._b > 0 else 1.0)
        s = np.maximum(self._apply(x), 1.0)
        return _Iterate(
            x=x,
            s=s,
            lam=np.ones(self.inequality_count),
            t=0.0,
            z=np.eye(n),
        )

    def _apply(self, x: Matrix) -> Vector:
        return np.einsum('kab,ab->k', self._ineq, x)

    def _combine(self, lam: Vector) -> Matrix:
        return np.einsum('k,kab->ab', lam, self._ineq)

    def _residuals(self, it: _Iterate) -> tuple[Vector, float, Matrix]:
        primal = it.s - self._apply(it.x)
        primal_eq = self._b - trace_inner(self._eq, it.x)
        dual = it.t * self._eq - self._combine(it.lam) - self._c - it.z
        return primal, primal_eq, dual

    def _mu(self, it: _Iterate) -> float:
        return (trace_inner(it.x, it.z) + float(it.s @ it.lam)) / (
            self.problem.dimension + self.inequality_count
        )

    def _direction(
        self,
        it: _Iterate,
        z_inv: Matrix,
        residuals: tuple[Vector, float, Matrix],
        target: float,
        correction: tuple[Matrix, Matrix, Vector, Vector] | None,
    ) -> tuple[Matrix, Vector, Vector, float, Matrix]:
        primal, primal_eq, dual = residuals
        k = self.inequality_count

        # Schur complement M_ij = tr(A_i X A_j Z^-1), inequalities first
        ax = self._stack @ it.x
        az = self._stack @ z_inv
        schur = _sym(np.einsum('iab,jba->ij', ax, az))
        ratio = it.s / it.lam
        schur[:k, :k] += np.diag(ratio)

        d0 = target * z_inv - it.x - _sym(it.x @ dual @ z_inv)
        complement = target - it.s * it.lam
        if correction is not None:
            dx_a, dz_a, ds_a, dlam_a = correction
            d0 = d0 - _sym(dx_a @ dz_a @ z_inv)
            complement = complement - ds_a * dlam_a
        c = complement / it.lam

        projected = np.einsum('iab,ab->i', self._stack, d0)
        rhs = np.empty(k + 1)
        rhs[:k] = primal - projected[:k] + c
        rhs[k] = primal_eq - projected[k]

        solution = np.linalg.solve(schur, rhs)
        dlam = solution[:k]
        dt = -float(solution[k])

        dz = dt * self._eq - self._combine(dlam) + dual
        dx = d0 - _sym(it.x @ (dz - dual) @ z_inv)

        # The products with Z^-1 lose the primal Newton equations to rounding
        # as Z approaches the boundary; restore them exactly
        weight = trace_inner(self._eq, it.x)
        if weight > 0:
            dx = dx + ((primal_eq - trace_inner(self._eq, dx)) / weight) * it.x
        ds = self._apply(dx) - primal
        return dx, ds, dlam, dt, _sym(dz)

    def _step_lengths(
        self, it: _Iterate, dx: Matrix, ds: Vector, dlam: Vector, dz: Matrix, fraction: float
    ) -> tuple[float, float]:
        primal = min(_max_step_psd(it.x, dx), _max_step_orthant(it.s, ds))
        dual = min(_max_step_psd(it.z, dz), _max_step_orthant(it.lam, dlam))
        return min(1.0, fraction * primal), min(1.0, fraction * dual)

    def _record(self, it: _Iterate, residuals: tuple[Vector, float, Matrix]) -> IterateRecord:
        primal, primal_eq, dual = residuals
        record = IterateRecord(
            primal_objective=trace_inner(self._c, it.x),
            dual_objective=self._b * it.t,
            primal_infeasibility=float(np.linalg.norm(np.append(primal, primal_eq)))
            / (1 + abs(self._b)),
            dual_infeasibility=float(np.linalg.norm(dual)) / (1 + self._c_norm),
            mu=self._mu(it),
        )
        self._history.append(record)
        return record

    def _rescale(self, x: Matrix) -> Matrix:
        value = trace_inner(self._eq, x)
        if value > 0 and self._b > 0:
            return x * (self._b / value)
        return x

    def _certify(self, it: _Iterate) -> _Candidate:
        x = self._rescale(it.x)
        residuals = _kkt_residuals(self.problem, x, it.lam, it.t, it.z)
        candidate = _Candidate(
            iterate=attrs.evolve(it),
            x=x,
            residuals=residuals,
            merit=max(
                residuals.primal_infeasibility,
                residuals.dual_infeasibility / (1 + self._c_norm),
                residuals.gap,
            ),
        )
        if self._best is None or candidate.merit < self._best.merit:
            self._best = candidate
        return candidate

    def _iterate(self, it: _Iterate) -> tuple[SolveStatus, int, str]:
        for iteration in count():
            residuals = self._residuals(it)
            record = self._record(it, residuals)
            candidate = self._certify(it)

            logger.debug(
                f'iteration {iteration}: primal {record.primal_objective:.10g}'
                f', dual {record.dual_objective:.10g}'
                f', pinf {record.primal_infeasibility:.2e}'
                f', dinf {record.dual_infeasibility:.2e}'
                f', mu {record.mu:.2e}, certified {candidate.merit:.2e}'
            )

            if candidate.merit < self.tolerance:
                return SolveStatus.Optimal, iteration, ''
            if abs(record.primal_objective) > UNBOUNDED_OBJECTIVE:
                return (
                    SolveStatus.NumericalFailure,
                    iteration,
                    f'primal objective {record.primal_objective:.3e} exceeds '
                    f'{UNBOUNDED_OBJECTIVE:.0e}; the problem may be unbounded',
                )
            if iteration == self.max_iterations:
                return (
                    SolveStatus.MaxIterations,
                    iteration,
                    f'tolerance {self.tolerance:g} not reached'
                    f'; best certified residual {self._best_merit:.3e}',
                )

            scale = 1 + abs(record.primal_objective)
            mu = record.mu
            if mu < STALLED_MU * scale:
                return (
                    SolveStatus.NumericalFailure,
                    iteration,
                    f'complementarity exhausted with best certified residual '
                    f'{self._best_merit:.3e}',
                )

            z_inv = _sym(np.linalg.inv(it.z))

            # Predictor
            dx_a, ds_a, dlam_a, _, dz_a = self._direction(it, z_inv, residuals, 0.0, None)
            alpha_p, alpha_d = self._step_lengths(it, dx_a, ds_a, dlam_a, dz_a, 1.0)
            mu_affine = (
                trace_inner(it.x + alpha_p * dx_a, it.z + alpha_d * dz_a)
                + float((it.s + alpha_p * ds_a) @ (it.lam + alpha_d * dlam_a))
            ) / (self.problem.dimension + self.inequality_count)
            sigma = min(1.0, max(0.0, mu_affine / mu)) ** 3
            if mu < RECENTRING_MU * scale:
                sigma = max(sigma, CENTERING_FLOOR)

            # Corrector
            dx, ds, dlam, dt, dz = self._direction(
                it, z_inv, residuals, sigma * mu, (dx_a, dz_a, ds_a, dlam_a)
            )
            alpha_p, alpha_d = self._step_lengths(it, dx, ds, dlam, dz, self.step_fraction)
            if max(alpha_p, alpha_d) < STALLED_STEP:
                return (
                    SolveStatus.NumericalFailure,
                    iteration,
                    f'step lengths collapsed with best certified residual '
                    f'{self._best_merit:.3e}',
                )

            it.x = _sym(it.x + alpha_p * dx)
            it.s = it.s + alpha_p * ds
            it.lam = it.lam + alpha_d * dlam
            it.t = it.t + alpha_d * dt
            it.z = _sym(it.z + alpha_d * dz)

        raise AssertionError('unreachable')  # pragma: no cover

    @property
    def _best_merit(self) -> float:
        return math.nan if self._best is None else self._best.merit

    def run(self) -> SdpSolution:
        if self._used:
            raise RuntimeError('an InteriorPointSolver can only be run once')
        self._used = True

        it = self._initial_iterate()
        try:
            with np.errstate(divide='raise', over='raise', invalid='raise'):
                status, iterations, diagnostic = self._iterate(it)
        except (np.linalg.LinAlgError, FloatingPointError) as error:
            status = SolveStatus.NumericalFailure
            iterations = max(len(self._history) - 1, 0)
            diagnostic = f'Newton system broke down: {error}'

        if status is SolveStatus.Optimal or self._best is None:
            final, x = it, self._rescale(it.x)
        else:
            final, x = self._best.iterate, self._best.x

        solution = self._make_solution(final, x, status, iterations, diagnostic)
        log = logger.info if solution.is_optimal else logger.warning
        log(
            f'solve finished with status {status.value} after {iterations} iterations'
            f': objective {solution.objective:.12g}'
            + (f' ({diagnostic})' if diagnostic else '')
        )
        return solution

    def _make_solution(
        self, it: _Iterate, x: Matrix, status: SolveStatus, iterations: int, diagnostic: str
    ) -> SdpSolution:
        solution = SdpSolution(
            X=x,
            slack=self._apply(x),
            dual_ineq=it.lam,
            dual_eq=it.t,
            dual_slack_matrix=it.z,
            objective=trace_inner(self._c, x),
            status=status,
            residuals=KktResiduals(math.nan, math.nan, math.nan),
            iterations=iterations,
            history=tuple(self._history),
            diagnostic=diagnostic,
        )
        return attrs.evolve(solution, residuals=kkt_report(self.problem, solution))


def solve(
    problem: SdpProblem,
    tolerance: float = 1e-9,
    max_iterations: int = 200,
    *,
    step_fraction: float = 0.98,
) -> SdpSolution:
    "Solve ``problem``; non-convergence is reported through ``SdpSolution.status``."
    return InteriorPointSolver(
        problem,
        tolerance=tolerance,
        max_iterations=max_iterations,
        step_fraction=step_fraction,
    ).run()


def solve_or_raise(
    problem: SdpProblem,
    tolerance: float = 1e-9,
    max_iterations: int = 200,
    *,
    step_fraction: float = 0.98,
) -> SdpSolution:
    solution = solve(problem, tolerance, max_iterations, step_fraction=step_fraction)
    if not solution.is_optimal:
        raise SolverFailure(solution)
    return solution


def _kkt_residuals(
    problem: SdpProblem, x: Matrix, dual_ineq: npt.ArrayLike, dual_eq: float, z: npt.ArrayLike
) -> KktResiduals:
    inequality_values = np.array([trace_inner(a, x) for a in problem.inequalities])
    equality_violation = abs(trace_inner(problem.equality, x) - problem.equality_rhs)
    primal_infeasibility = max(
        equality_violation,
        float(np.max(-inequality_values, initial=0.0)),
        max(0.0, -float(np.linalg.eigvalsh(x)[0])),
    )

    combined = sum(
        (lam * a for lam, a in zip(np.asarray(dual_ineq, dtype=np.float64), problem.inequalities)),
        start=np.zeros_like(x),
    )
    dual_residual = combined - dual_eq * problem.equality + problem.objective + np.asarray(z)
    dual_infeasibility = float(np.linalg.norm(dual_residual))

    primal_objective = trace_inner(problem.objective, x)
    dual_objective = problem.equality_rhs * dual_eq
    gap = abs(primal_objective - dual_objective) / (1 + abs(primal_objective))
    return KktResiduals(primal_infeasibility, dual_infeasibility, gap)


def kkt_report(problem: SdpProblem, solution: SdpSolution) -> KktResiduals:
    """Recompute the KKT residuals of ``solution`` from scratch.

    The primal infeasibility is the largest of the equality violation, the
    most negative inequality value and the most negative eigenvalue of ``X``.
    The dual infeasibility is the Frobenius norm of
    ``sum_i lambda_i A_i - t A_eq + C + Z``, which vanishes under the sign
    convention ``Z = t A_eq - sum_i lambda_i A_i - C``.  The gap is
    ``|<C, X> - t| / (1 + |<C, X>|)``.
    """
    return _kkt_residuals(
        problem,
        as_symmetric(solution.X),
        solution.dual_ineq,
        solution.dual_eq,
        solution.dual_slack_matrix,
    )


def rank_estimate(x: npt.ArrayLike, tolerance: float = 1e-8) -> int:
    "Count the eigenvalues of ``x`` above ``tolerance`` times the largest."
    eigenvalues = np.linalg.eigvalsh(as_symmetric(x))
    largest = float(eigenvalues[-1])
    if largest <= 0:
        return 0
    return int(np.count_nonzero(eigenvalues > tolerance * largest))
