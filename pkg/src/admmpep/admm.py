"""Concrete counterexamples and a one-step ADMM replay.

ADMM is run on ``min f(x) + g(y)`` subject to ``x + y = b``:

    x+ = prox_{f/beta}(z/beta - y + b)
    y+ = prox_{g/beta}(z/beta - x+ + b)
    z+ = z - gamma beta (x+ + y+ - b)

and measured with ``R = |z - z*|^2 + gamma beta^2 |y - y*|^2 + (gamma - 1) beta^2 |x + y - b|^2``.
Instances reconstructed from a Gram matrix are normalised to ``beta = 1``,
``b = 0`` and ``(x*, y*, z*) = 0``; ``rescaled`` and ``translated`` undo the
normalisation.
"""

from __future__ import annotations

import math
from collections.abc import Iterator
from itertools import combinations
from typing import Any

import attrs
import numpy as np
import numpy.typing as npt
from loguru import logger
from typing_extensions import Self

from .certificate import build_certificate
from .common import GammaContext, Matrix, Vector, as_symmetric, as_vector
from .interpolate import MonotonePoint, PiecewiseConvexFn, fn_converter, interpolant
from .model import GRAM_DIMENSION
from .results import EnumerationError, RankError
from .utils import fauxfrozen

PROX_PIECE_LIMIT = 8


@attrs.frozen(eq=False)
class AdmmState:
    x: Vector = attrs.field(converter=as_vector)
    y: Vector = attrs.field(converter=as_vector)
    z: Vector = attrs.field(converter=as_vector)

    def __attrs_post_init__(self) -> None:
        if not self.x.shape == self.y.shape == self.z.shape:
            raise ValueError('x, y and z must share one dimension')

    @property
    def dimension(self) -> int:
        return self.x.shape[0]

    def __iter__(self) -> Iterator[Vector]:
        return iter((self.x, self.y, self.z))

    def max_deviation(self, other: AdmmState) -> float:
        "The largest coordinate-wise difference to ``other``."
        return max(float(np.max(np.abs(a - b))) for a, b in zip(self, other))


@attrs.frozen(eq=False)
class CounterexampleInstance:
    gamma: float
    f: PiecewiseConvexFn
    g: PiecewiseConvexFn
    z_star: Vector = attrs.field(converter=as_vector)
    state_k: AdmmState
    designated_next: AdmmState
    penalty: float = 1.0
    offset: Vector | None = None
    x_star: Vector | None = None
    y_star: Vector | None = None

    @property
    def dimension(self) -> int:
        return self.state_k.dimension

    @property
    def ctx(self) -> GammaContext:
        return GammaContext(self.gamma)

    def _zeros(self, value: Vector | None) -> Vector:
        return np.zeros(self.dimension) if value is None else value

    @property
    def b(self) -> Vector:
        return self._zeros(self.offset)

    @property
    def solution(self) -> tuple[Vector, Vector, Vector]:
        "``(x*, y*, z*)``."
        return self._zeros(self.x_star), self._zeros(self.y_star), self.z_star

    def measure(self, state: AdmmState) -> float:
        return measure_R(
            state,
            self.z_star,
            self.ctx,
            penalty=self.penalty,
            y_star=self.y_star,
            offset=self.offset,
        )

    def rescaled(self, beta: float) -> Self:
        """The same instance at penalty ``beta``.

        ``f``, ``g``, ``z`` and ``z*`` are multiplied by ``beta`` so that the
        primal iterates are unchanged and ``R`` scales by ``beta**2``.
        """
        if not beta > 0:
            raise ValueError(f'penalty must be positive, got {beta!r}')
        factor = beta / self.penalty

        def scale_state(state: AdmmState):
            return AdmmState(state.x, state.y, factor * state.z)

        return attrs.evolve(
            self,
            f=self.f.scaled(factor),
            g=self.g.scaled(factor),
            z_star=factor * self.z_star,
            state_k=scale_state(self.state_k),
            designated_next=scale_state(self.designated_next),
            penalty=beta,
        )

    def translated(self, x_shift: npt.ArrayLike, y_shift: npt.ArrayLike) -> Self:
        "Move the solution by ``(x_shift, y_shift)``, updating ``b`` accordingly."
        x_shift = as_vector(x_shift)
        y_shift = as_vector(y_shift)
        x_star, y_star, _ = self.solution

        def shift_state(state: AdmmState):
            return AdmmState(state.x + x_shift, state.y + y_shift, state.z)

        return attrs.evolve(
            self,
            f=self.f.translated(x_shift),
            g=self.g.translated(y_shift),
            state_k=shift_state(self.state_k),
            designated_next=shift_state(self.designated_next),
            offset=self.b + x_shift + y_shift,
            x_star=x_star + x_shift,
            y_star=y_star + y_shift,
        )


def measure_R(
    state: AdmmState,
    z_star: npt.ArrayLike,
    ctx: GammaContext,
    *,
    penalty: float = 1.0,
    y_star: npt.ArrayLike | None = None,
    offset: npt.ArrayLike | None = None,
) -> float:
    gamma = ctx.gamma
    y_star = np.zeros(state.dimension) if y_star is None else as_vector(y_star)
    offset = np.zeros(state.dimension) if offset is None else as_vector(offset)
    z_error = state.z - as_vector(z_star)
    y_error = state.y - y_star
    residual = state.x + state.y - offset
    return float(
        z_error @ z_error
        + gamma * penalty**2 * (y_error @ y_error)
        + (gamma - 1) * penalty**2 * (residual @ residual)
    )


def factor_gram(x: npt.ArrayLike, tolerance: float = 1e-9) -> Matrix:
    """A factor ``P`` with ``P^T P ~ x`` and one row per eigenvalue above ``tolerance * lmax``.

    Rows are ordered by decreasing eigenvalue.
    """
    eigenvalues, eigenvectors = np.linalg.eigh(as_symmetric(x))
    largest = float(eigenvalues[-1])
    if largest <= 0:
        raise RankError(1, eigenvalues[::-1].tolist(), tolerance)
    if float(eigenvalues[0]) < -tolerance * largest:
        raise RankError(
            int(np.count_nonzero(eigenvalues > tolerance * largest)),
            eigenvalues[::-1].tolist(),
            tolerance,
        )
    kept = eigenvalues > tolerance * largest
    factor = np.sqrt(eigenvalues[kept])[:, np.newaxis] * eigenvectors[:, kept].T
    return factor[::-1]


def factor_rank2(x: npt.ArrayLike, tolerance: float = 1e-9) -> Matrix:
    "The rank-two factor of ``x``; fails unless the third eigenvalue is below ``tolerance * lmax``."
    factor = factor_gram(x, tolerance)
    if factor.shape[0] != 2:
        eigenvalues = np.linalg.eigvalsh(as_symmetric(x))[::-1]
        raise RankError(2, eigenvalues.tolist(), tolerance)
    return factor


def _instance_from_factor(
    factor: npt.ArrayLike, ctx: GammaContext, tolerance: float = 1e-9
) -> CounterexampleInstance:
    factor = np.asarray(factor, dtype=np.float64)
    if factor.ndim != 2 or factor.shape[1] != GRAM_DIMENSION:
        raise ValueError(f'expected a factor with {GRAM_DIMENSION} columns, got {factor.shape}')
    gamma = ctx.gamma
    x, y, x_next, y_next, z = factor.T
    origin = np.zeros(factor.shape[0])
    z_star = origin

    s1 = [
        MonotonePoint(origin, z_star),
        MonotonePoint(x_next, z - x_next - y),
    ]
    s2 = [
        MonotonePoint(origin, z_star),
        MonotonePoint(y, z + (gamma - 1) * (x + y)),
        MonotonePoint(y_next, z - x_next - y_next),
    ]
    f = interpolant(s1, tolerance)
    g = interpolant(s2, tolerance)
    logger.debug(f'interpolated f with {len(f.pieces)} and g with {len(g.pieces)} pieces')

    return CounterexampleInstance(
        gamma=gamma,
        f=f,
        g=g,
        z_star=z_star,
        state_k=AdmmState(x, y, z),
        designated_next=AdmmState(x_next, y_next, z - gamma * (x_next + y_next)),
    )


def build_instance(ctx: GammaContext) -> CounterexampleInstance:
    "The two-dimensional counterexample carried by the analytic certificate."
    return _instance_from_factor(build_certificate(ctx).factor, ctx)


def build_instance_from_gram(
    x: npt.ArrayLike, ctx: GammaContext, tolerance: float = 1e-7
) -> CounterexampleInstance:
    """An instance from any feasible Gram matrix, e.g. a solver optimum.

    The dimension is the numerical rank of ``x`` at ``tolerance``.  Cycle sums
    may then be negative by about the truncation error, so the interpolant
    tolerates violations of that size.
    """
    x = as_symmetric(x)
    factor = factor_gram(x, tolerance)
    scale = float(np.linalg.eigvalsh(x)[-1])
    return _instance_from_factor(factor, ctx, 100 * tolerance * max(scale, 1.0))


def _iter_active_sets(count: int) -> Iterator[tuple[int, ...]]:
    for size in range(1, count + 1):
        yield from combinations(range(count), size)


def prox_step(fn: PiecewiseConvexFn, v: npt.ArrayLike, tolerance: float = 1e-10) -> Vector:
    """``argmin_x fn(x) + |x - v|^2 / 2`` by active-set enumeration.

    For an active set ``S`` the minimiser is ``x = v - A_S^T mu`` with ``mu``
    in the simplex and every piece of ``S`` equal to the common level ``t``;
    a candidate is accepted when ``mu >= 0`` and no other piece exceeds ``t``.
    Sets are tried in order of increasing size.
    """
    v = as_vector(v)
    if v.shape[0] != fn.dim:
        raise ValueError(f'expected a point of dimension {fn.dim}, got {v.shape[0]}')
    if len(fn.pieces) > PROX_PIECE_LIMIT:
        raise EnumerationError(len(fn.pieces))

    slopes = fn.slopes
    intercepts = fn.intercepts
    for active in _iter_active_sets(len(fn.pieces)):
        a = slopes[list(active)]
        size = len(active)
        kkt = np.zeros((size + 1, size + 1))
        kkt[:size, :size] = a @ a.T
        kkt[:size, size] = kkt[size, :size] = 1.0
        rhs = np.append(a @ v + intercepts[list(active)], 1.0)
        solution = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        mu, level = solution[:size], float(solution[size])

        x = v - a.T @ mu
        values = slopes @ x + intercepts
        slack = tolerance * (1 + abs(level))
        if (
            np.all(mu >= -tolerance)
            and np.all(values <= level + slack)
            and np.all(np.abs(values[list(active)] - level) <= slack)
        ):
            return x

    raise EnumerationError(len(fn.pieces))


def admm_step(instance: CounterexampleInstance) -> AdmmState:
    beta = instance.penalty
    b = instance.b
    x, y, z = instance.state_k
    f = instance.f.scaled(1 / beta)
    g = instance.g.scaled(1 / beta)

    x_next = prox_step(f, z / beta - y + b)
    y_next = prox_step(g, z / beta - x_next + b)
    z_next = z - instance.gamma * beta * (x_next + y_next - b)
    return AdmmState(x_next, y_next, z_next)


@fauxfrozen
class ReplayReport:
    replayed: AdmmState = attrs.field(eq=False)
    max_deviation: float
    measure_k: float
    measure_next: float

    @property
    def ratio(self) -> float:
        return self.measure_next / self.measure_k if self.measure_k else math.inf

    @property
    def increased(self) -> bool:
        return self.measure_next > self.measure_k


def replay_report(instance: CounterexampleInstance) -> ReplayReport:
    "Replay one step and compare it with the designated next iterate."
    replayed = admm_step(instance)
    report = ReplayReport(
        replayed=replayed,
        max_deviation=replayed.max_deviation(instance.designated_next),
        measure_k=instance.measure(instance.state_k),
        measure_next=instance.measure(replayed),
    )
    logger.info(
        f'replayed one step at gamma={instance.gamma}: R_k={report.measure_k:.12g}'
        f', R_next={report.measure_next:.12g}, deviation {report.max_deviation:.3e}'
    )
    return report


def instance_to_json(
    instance: CounterexampleInstance, report: ReplayReport | None = None
) -> dict[str, Any]:
    "The JSON document of a normalised instance, with the measure before and after one step."
    if report is None:
        report = replay_report(instance)

    def state(value: AdmmState):
        return {'x': value.x.tolist(), 'y': value.y.tolist(), 'z': value.z.tolist()}

    return {
        'gamma': instance.gamma,
        'dimension': instance.dimension,
        'z_star': instance.z_star.tolist(),
        'state_k': state(instance.state_k),
        'next': state(instance.designated_next),
        'f': fn_converter.unstructure(instance.f, PiecewiseConvexFn),
        'g': fn_converter.unstructure(instance.g, PiecewiseConvexFn),
        'R_k': report.measure_k,
        'R_next': report.measure_next,
    }


def instance_from_json(document: dict[str, Any]) -> CounterexampleInstance:
    def state(value: dict[str, Any]):
        return AdmmState(value['x'], value['y'], value['z'])

    return CounterexampleInstance(
        gamma=document['gamma'],
        f=fn_converter.structure(document['f'], PiecewiseConvexFn),
        g=fn_converter.structure(document['g'], PiecewiseConvexFn),
        z_star=document['z_star'],
        state_k=state(document['state_k']),
        designated_next=state(document['next']),
    )
