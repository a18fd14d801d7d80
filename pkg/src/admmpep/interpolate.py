from __future__ import annotations

from collections.abc import Iterator, Sequence
from itertools import combinations, permutations
from typing import Any

import attrs
import cattrs
import cattrs.preconf.json
import numpy as np
import numpy.typing as npt
from loguru import logger
from typing_extensions import Self

from .common import Vector, as_vector
from .results import MonotonicityError, SizeError

ENUMERATION_LIMIT = 8


@attrs.frozen(eq=False)
class MonotonePoint:
    "A point paired with a prescribed subgradient."

    point: Vector = attrs.field(converter=as_vector)
    subgradient: Vector = attrs.field(converter=as_vector)

    def __attrs_post_init__(self) -> None:
        if self.point.shape != self.subgradient.shape:
            raise ValueError(
                f'point and subgradient differ in dimension: '
                f'{self.point.shape[0]} != {self.subgradient.shape[0]}'
            )

    @property
    def dimension(self) -> int:
        return self.point.shape[0]


@attrs.frozen(eq=False)
class AffinePiece:
    slope: Vector = attrs.field(converter=as_vector)
    intercept: float = attrs.field(converter=float)

    def __call__(self, x: npt.ArrayLike) -> float:
        return float(self.slope @ np.asarray(x, dtype=np.float64)) + self.intercept


def _check_pieces(
    instance: PiecewiseConvexFn, _attr: attrs.Attribute[Any], pieces: tuple[AffinePiece, ...]
) -> None:
    if not pieces:
        raise ValueError('a piecewise convex function needs at least one piece')
    if any(p.slope.shape[0] != instance.dim for p in pieces):
        raise ValueError(f'every slope must have dimension {instance.dim}')


@attrs.frozen(eq=False)
class PiecewiseConvexFn:
    """``h(x) = max_i (slope_i . x + intercept_i)``.

    A finite maximum of affine functions, so closed, proper and convex.
    """

    dim: int
    pieces: tuple[AffinePiece, ...] = attrs.field(converter=tuple, validator=_check_pieces)

    @classmethod
    def from_arrays(cls, slopes: npt.ArrayLike, intercepts: npt.ArrayLike) -> Self:
        slopes = np.atleast_2d(np.asarray(slopes, dtype=np.float64))
        intercepts = np.atleast_1d(np.asarray(intercepts, dtype=np.float64))
        return cls(
            dim=slopes.shape[1],
            pieces=tuple(AffinePiece(s, b) for s, b in zip(slopes, intercepts)),
        )

    @property
    def slopes(self) -> npt.NDArray[np.float64]:
        return np.array([p.slope for p in self.pieces])

    @property
    def intercepts(self) -> Vector:
        return np.array([p.intercept for p in self.pieces])

    def piece_values(self, x: npt.ArrayLike) -> Vector:
        return self.slopes @ as_vector(x) + self.intercepts

    def __call__(self, x: npt.ArrayLike) -> float:
        return evaluate(self, x)

    def scaled(self, factor: float) -> Self:
        "``factor * h`` for a positive ``factor``."
        if not factor > 0:
            raise ValueError(f'scale factor must be positive, got {factor!r}')
        return attrs.evolve(
            self,
            pieces=tuple(AffinePiece(factor * p.slope, factor * p.intercept) for p in self.pieces),
        )

    def translated(self, shift: npt.ArrayLike) -> Self:
        "``x -> h(x - shift)``."
        shift = as_vector(shift)
        return attrs.evolve(
            self,
            pieces=tuple(
                AffinePiece(p.slope, p.intercept - float(p.slope @ shift)) for p in self.pieces
            ),
        )


@attrs.frozen
class MonotonicityCheck:
    """The verdict of a cyclic monotonicity check.

    ``witness`` is the cycle with the smallest sum, listed by point index
    without repeating its first element.
    """

    monotone: bool
    witness: tuple[int, ...] | None = None
    cycle_sum: float | None = None

    def __bool__(self) -> bool:
        return self.monotone


def _check_points(points: Sequence[MonotonePoint]) -> None:
    if not points:
        raise ValueError('at least one point is required')
    if len({p.dimension for p in points}) != 1:
        raise ValueError('all points must share one dimension')


def cycle_sum(points: Sequence[MonotonePoint], cycle: Sequence[int]) -> float:
    "``sum <x_i - x_next(i), g_i>`` along ``cycle``, closing back to its first index."
    return float(
        sum(
            (points[i].point - points[j].point) @ points[i].subgradient
            for i, j in zip(cycle, (*cycle[1:], cycle[0]))
        )
    )


def _iter_cycles(size: int) -> Iterator[tuple[int, ...]]:
    "Every cycle of at least two indices, once per cyclic order."
    for length in range(2, size + 1):
        for subset in combinations(range(size), length):
            head, *tail = subset
            for order in permutations(tail):
                yield (head, *order)


def is_cyclically_monotone(
    points: Sequence[MonotonePoint], tolerance: float = 1e-9
) -> MonotonicityCheck:
    _check_points(points)
    if len(points) > ENUMERATION_LIMIT:
        raise SizeError(len(points), ENUMERATION_LIMIT)

    worst: tuple[int, ...] | None = None
    worst_sum = 0.0
    for cycle in _iter_cycles(len(points)):
        value = cycle_sum(points, cycle)
        if worst is None or value < worst_sum:
            worst, worst_sum = cycle, value

    if worst is not None and worst_sum < -tolerance:
        logger.debug(f'cycle {worst} sums to {worst_sum:.3e}')
        return MonotonicityCheck(False, worst, worst_sum)
    return MonotonicityCheck(True)


def _predecessor_cycle(predecessors: Sequence[int], start: int) -> tuple[int, ...] | None:
    "The cycle reached by walking predecessors back from ``start``, in traversal order."
    chain: list[int] = []
    node = start
    while node != -1 and node not in chain:
        chain.append(node)
        node = predecessors[node]
    if node == -1:
        return None
    return tuple(reversed(chain[chain.index(node) :]))


def _potentials(points: Sequence[MonotonePoint], tolerance: float) -> Vector:
    "Longest-path potentials from the first point over ``w(i -> j) = <g_i, x_j - x_i>``."
    x = np.array([p.point for p in points])
    g = np.array([p.subgradient for p in points])
    weights = np.einsum('id,ijd->ij', g, x[np.newaxis, :, :] - x[:, np.newaxis, :])

    size = len(points)
    potentials = weights[0].copy()
    potentials[0] = 0.0
    predecessors = [0] * size
    predecessors[0] = -1

    def relax(slack: float) -> int | None:
        changed = None
        for i in range(size):
            for j in range(size):
                if i == j:
                    continue
                candidate = potentials[i] + weights[i, j]
                if candidate > potentials[j] + slack * (1 + abs(candidate)):
                    potentials[j] = candidate
                    predecessors[j] = i
                    changed = j
        return changed

    # Exact passes find the longest paths; the tolerance only decides whether
    # what remains is a positive cycle
    for _ in range(size - 1):
        if relax(0.0) is None:
            break

    changed = relax(tolerance)
    if changed is not None:
        cycle = _predecessor_cycle(predecessors, changed)
        if cycle is None and size <= ENUMERATION_LIMIT:
            cycle = is_cyclically_monotone(points, tolerance).witness
        if cycle is None:
            cycle = (changed,)
        raise MonotonicityError(cycle, cycle_sum(points, cycle))

    return potentials


def interpolant(points: Sequence[MonotonePoint], tolerance: float = 1e-9) -> PiecewiseConvexFn:
    """The max-affine interpolant ``h(x) = max_i (v_i + <g_i, x - x_i>)``.

    The potentials ``v`` are longest-path lengths anchored at ``v_0 = 0``, so
    ``h(x_i) = v_i`` and ``g_i`` is a subgradient of ``h`` at ``x_i``.
    """
    _check_points(points)
    potentials = _potentials(points, tolerance)
    return PiecewiseConvexFn(
        dim=points[0].dimension,
        pieces=tuple(
            AffinePiece(p.subgradient, v - float(p.subgradient @ p.point))
            for p, v in zip(points, potentials)
        ),
    )


def evaluate(fn: PiecewiseConvexFn, x: npt.ArrayLike) -> float:
    return float(np.max(fn.piece_values(x)))


def _affine_weights(vertices: npt.NDArray[np.float64], target: Vector) -> tuple[Vector, float]:
    """Least-squares weights ``mu`` with ``sum(mu) = 1`` fitting ``vertices^T mu`` to ``target``.

    Returns the weights and the residual norm.
    """
    count = vertices.shape[0]
    kkt = np.zeros((count + 1, count + 1))
    kkt[:count, :count] = vertices @ vertices.T
    kkt[:count, count] = kkt[count, :count] = 1.0
    rhs = np.append(vertices @ target, 1.0)
    weights = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:count]
    return weights, float(np.linalg.norm(vertices.T @ weights - target))


def in_convex_hull(vertices: npt.ArrayLike, target: npt.ArrayLike, tolerance: float) -> bool:
    "Decide whether ``target`` is a convex combination of the rows of ``vertices``."
    vertices = np.atleast_2d(np.asarray(vertices, dtype=np.float64))
    target = as_vector(target)
    slack = tolerance * (1 + float(np.linalg.norm(target)))
    for size in range(1, vertices.shape[0] + 1):
        for face in combinations(range(vertices.shape[0]), size):
            weights, residual = _affine_weights(vertices[list(face)], target)
            if residual <= slack and bool(np.all(weights >= -tolerance)):
                return True
    return False


def subdiff_contains(
    fn: PiecewiseConvexFn, x: npt.ArrayLike, g: npt.ArrayLike, tolerance: float = 1e-9
) -> bool:
    """Decide ``g in dh(x)``.

    For a max-affine ``h`` the subdifferential is the convex hull of the
    slopes of the pieces active at ``x``; a piece counts as active within
    ``tolerance * (1 + |h(x)|)``.
    """
    values = fn.piece_values(x)
    value = float(np.max(values))
    active = values >= value - tolerance * (1 + abs(value))
    return in_convex_hull(fn.slopes[active], g, tolerance)


def make_fn_converter() -> cattrs.Converter:
    converter = cattrs.preconf.json.make_converter()
    converter.register_unstructure_hook(
        PiecewiseConvexFn,
        lambda fn: {
            'dim': fn.dim,
            'pieces': [{'slope': p.slope.tolist(), 'intercept': p.intercept} for p in fn.pieces],
        },
    )
    converter.register_structure_hook(
        PiecewiseConvexFn,
        lambda value, _: PiecewiseConvexFn(
            dim=value['dim'],
            pieces=tuple(AffinePiece(p['slope'], p['intercept']) for p in value['pieces']),
        ),
    )
    return converter


fn_converter = make_fn_converter()
