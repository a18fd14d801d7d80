from __future__ import annotations

import json
from itertools import combinations

import numpy as np
import pytest

from admmpep.admm import (
    PROX_PIECE_LIMIT,
    AdmmState,
    admm_step,
    build_instance,
    build_instance_from_gram,
    factor_gram,
    factor_rank2,
    instance_from_json,
    instance_to_json,
    measure_R,
    prox_step,
    replay_report,
)
from admmpep.certificate import closed_form_objective
from admmpep.common import GammaContext
from admmpep.interpolate import (
    MonotonePoint,
    PiecewiseConvexFn,
    interpolant,
    is_cyclically_monotone,
    subdiff_contains,
)
from admmpep.model import build_problem
from admmpep.results import EnumerationError, RankError
from admmpep.sdp import SolveStatus, solve


def _prox_objective(fn: PiecewiseConvexFn, v: np.ndarray, x: np.ndarray):
    return fn(x) + 0.5 * float((x - v) @ (x - v))


def _prox_oracle(fn: PiecewiseConvexFn, v: np.ndarray):
    """Minimise over every affine set on which a subset of the pieces ties.

    The true minimiser is the projection of ``v - a_s`` onto the set cut out
    by its own active pieces, so the best candidate is exact.
    """
    slopes, intercepts = fn.slopes, fn.intercepts
    candidates = [v - s for s in slopes]
    for size in range(2, len(fn.pieces) + 1):
        for active in combinations(range(len(fn.pieces)), size):
            head, *tail = active
            normals = slopes[tail] - slopes[head]
            offsets = intercepts[head] - intercepts[tail]
            w = v - slopes[head]
            candidates.append(w - np.linalg.pinv(normals) @ (normals @ w - offsets))
    return min(candidates, key=lambda x: _prox_objective(fn, v, x))


def _random_fn(rng: np.random.Generator, dim: int):
    count = int(rng.integers(1, 7))
    return PiecewiseConvexFn.from_arrays(rng.normal(size=(count, dim)), rng.normal(size=count))


def test_prox_matches_enumeration_oracle(ap_rng: np.random.Generator):
    for _ in range(200):
        dim = int(ap_rng.integers(1, 4))
        fn = _random_fn(ap_rng, dim)
        v = ap_rng.normal(scale=2.0, size=dim)
        assert prox_step(fn, v) == pytest.approx(_prox_oracle(fn, v), abs=1e-6)


def _prox_values(fn: PiecewiseConvexFn, v: np.ndarray, points: np.ndarray):
    values = np.max(points @ fn.slopes.T + fn.intercepts, axis=1)
    return values + 0.5 * np.sum((points - v) ** 2, axis=1)


_COMPASS = np.array(
    [[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=np.float64
)


def _grid_descent_oracle(fn: PiecewiseConvexFn, v: np.ndarray, radius: float = 8.0):
    "Take the best point of a coarse grid around ``v`` and walk downhill from it."
    axis = np.linspace(-radius, radius, 401)
    grid = np.stack(np.meshgrid(axis, axis), axis=-1).reshape(-1, 2) + v
    values = _prox_values(fn, v, grid)
    best, value = grid[np.argmin(values)], float(values.min())

    step = float(axis[1] - axis[0])
    while step > 1e-12:
        trial = best + step * _COMPASS
        trial_values = _prox_values(fn, v, trial)
        i = int(np.argmin(trial_values))
        if trial_values[i] < value:
            best, value = trial[i], float(trial_values[i])
        else:
            step /= 2
    return best


def test_prox_beats_grid_descent_in_two_dimensions(ap_rng: np.random.Generator):
    for _ in range(200):
        fn = _random_fn(ap_rng, 2)
        v = ap_rng.normal(scale=2.0, size=2)
        x = prox_step(fn, v)
        p = _grid_descent_oracle(fn, v)

        at_x, at_p = _prox_objective(fn, v, x), _prox_objective(fn, v, p)
        assert at_x <= at_p + 1e-12
        # The prox objective is 1-strongly convex about its minimiser
        assert 0.5 * float((x - p) @ (x - p)) <= at_p - at_x + 1e-10


def test_prox_of_absolute_value_is_soft_thresholding():
    fn = PiecewiseConvexFn.from_arrays([[1.0], [-1.0]], [0.0, 0.0])
    assert prox_step(fn, [3.0]).tolist() == pytest.approx([2.0])
    assert prox_step(fn, [-0.4]).tolist() == pytest.approx([0.0], abs=1e-12)
    assert prox_step(fn, [-1.5]).tolist() == pytest.approx([-0.5])


def test_prox_validates_input():
    fn = PiecewiseConvexFn.from_arrays(np.eye(PROX_PIECE_LIMIT + 1), np.zeros(PROX_PIECE_LIMIT + 1))
    with pytest.raises(EnumerationError):
        prox_step(fn, np.zeros(PROX_PIECE_LIMIT + 1))
    with pytest.raises(ValueError, match='dimension'):
        prox_step(PiecewiseConvexFn.from_arrays([[1.0]], [0.0]), [0.0, 1.0])


def test_measure_r():
    state = AdmmState([1.0, 0.0], [0.0, 2.0], [3.0, 4.0])
    ctx = GammaContext(1.5)
    # |z|^2 + gamma |y|^2 + (gamma - 1) |x + y|^2
    assert measure_R(state, [0.0, 0.0], ctx) == pytest.approx(25 + 6 + 2.5)
    assert measure_R(state, [3.0, 4.0], ctx, penalty=2.0) == pytest.approx(4 * (6 + 2.5))
    assert measure_R(
        state, [3.0, 4.0], ctx, y_star=[0.0, 2.0], offset=[1.0, 2.0]
    ) == pytest.approx(0.0)


def test_state_max_deviation():
    state = AdmmState([1.0], [2.0], [3.0])
    assert state.dimension == 1
    assert state.max_deviation(AdmmState([1.0], [2.5], [2.9])) == pytest.approx(0.5)
    with pytest.raises(ValueError, match='share one dimension'):
        AdmmState([1.0], [2.0, 0.0], [3.0])


def test_factor_gram():
    root = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, -1.0]])
    x = root.T @ root
    factor = factor_rank2(x)
    assert factor.shape == (2, 3)
    assert factor.T @ factor == pytest.approx(x, abs=1e-12)
    assert np.linalg.norm(factor[0]) >= np.linalg.norm(factor[1])

    with pytest.raises(RankError) as exc_info:
        factor_rank2(np.eye(3))
    assert exc_info.value.expected_rank == 2

    with pytest.raises(RankError):
        factor_gram(np.diag([1.0, -0.5]))


@pytest.mark.parametrize('gamma', [1.65, 1.8, 2.0])
def test_counterexample_replays_and_increases_measure(gamma: float):
    ctx = GammaContext(gamma)
    instance = build_instance(ctx)
    assert instance.dimension == 2

    replayed = admm_step(instance)
    assert replayed.max_deviation(instance.designated_next) <= 1e-7
    assert instance.measure(instance.state_k) == pytest.approx(1, abs=1e-8)
    assert instance.measure(replayed) == pytest.approx(closed_form_objective(ctx), abs=1e-6)
    assert instance.measure(replayed) > 1

    report = replay_report(instance)
    assert report.increased
    assert report.ratio == pytest.approx(closed_form_objective(ctx), abs=1e-6)


@pytest.mark.parametrize('gamma', [1.65, 1.8, 2.0])
def test_counterexample_functions_interpolate_their_points(gamma: float):
    instance = build_instance(GammaContext(gamma))
    x, y, z = instance.state_k
    x_next, y_next, _ = instance.designated_next
    assert instance.f(np.zeros(2)) == pytest.approx(0.0, abs=1e-12)
    assert instance.g(np.zeros(2)) == pytest.approx(0.0, abs=1e-12)
    # Optimality of the prox steps, written as subgradient inclusions
    assert subdiff_contains(instance.f, x_next, z - x_next - y)
    assert subdiff_contains(instance.g, y_next, z - x_next - y_next)
    # y^k itself came out of the previous step, before z^k was updated
    assert subdiff_contains(instance.g, y, z + (gamma - 1) * (x + y))


@pytest.mark.parametrize('beta', [0.5, 2.0, 10.0])
def test_rescaled_replay_keeps_measure_ratio(beta: float):
    instance = build_instance(GammaContext(1.8))
    baseline = replay_report(instance)

    scaled = instance.rescaled(beta)
    report = replay_report(scaled)
    assert report.max_deviation <= 1e-7 * max(beta, 1)
    assert report.measure_k == pytest.approx(beta**2 * baseline.measure_k)
    assert report.ratio == pytest.approx(baseline.ratio, abs=1e-10)


def test_translated_replay_keeps_measure_ratio():
    instance = build_instance(GammaContext(1.8))
    baseline = replay_report(instance)

    moved = instance.translated([1.0, -2.0], [0.5, 3.0])
    assert moved.b.tolist() == [1.5, 1.0]
    x_star, y_star, _ = moved.solution
    assert x_star.tolist() == [1.0, -2.0]
    assert y_star.tolist() == [0.5, 3.0]

    report = replay_report(moved)
    assert report.max_deviation <= 1e-7
    assert report.ratio == pytest.approx(baseline.ratio, abs=1e-10)

    report = replay_report(moved.rescaled(2.0))
    assert report.ratio == pytest.approx(baseline.ratio, abs=1e-10)


def test_rescaling_rejects_nonpositive_penalty():
    instance = build_instance(GammaContext(1.8))
    with pytest.raises(ValueError, match='must be positive'):
        instance.rescaled(0.0)


def test_instance_from_solver_optimum_replays():
    ctx = GammaContext(1.9)
    solution = solve(build_problem(ctx))
    instance = build_instance_from_gram(solution.X, ctx)
    report = replay_report(instance)
    assert report.max_deviation <= 1e-5
    assert report.measure_k == pytest.approx(1, abs=1e-5)
    assert report.measure_next == pytest.approx(solution.objective, abs=1e-5)


def test_instance_json_document():
    instance = build_instance(GammaContext(2.0))
    document = json.loads(json.dumps(instance_to_json(instance)))
    assert document.keys() == {
        'gamma',
        'dimension',
        'z_star',
        'state_k',
        'next',
        'f',
        'g',
        'R_k',
        'R_next',
    }
    assert document['gamma'] == 2.0
    assert document['dimension'] == 2
    assert document['R_k'] == pytest.approx(1, abs=1e-8)
    assert document['R_next'] == pytest.approx(2.154700538, abs=1e-6)
    assert document['state_k'].keys() == {'x', 'y', 'z'}

    restored = instance_from_json(document)
    assert restored.state_k.max_deviation(instance.state_k) == 0.0
    assert replay_report(restored).measure_next == pytest.approx(document['R_next'])


def test_interpolated_function_pieces_stay_under_limit():
    instance = build_instance(GammaContext(1.8))
    assert len(instance.f.pieces) == 2
    assert len(instance.g.pieces) == 3
    assert interpolant([MonotonePoint([0.0], [0.0])]).dim == 1


def test_counterexample_point_sets_are_cyclically_monotone():
    instance = build_instance(GammaContext(1.8))
    x, y, z = instance.state_k
    x_next, y_next, _ = instance.designated_next
    origin = np.zeros(2)
    s1 = [MonotonePoint(origin, origin), MonotonePoint(x_next, z - x_next - y)]
    s2 = [
        MonotonePoint(origin, origin),
        MonotonePoint(y, z + 0.8 * (x + y)),
        MonotonePoint(y_next, z - x_next - y_next),
    ]
    assert is_cyclically_monotone(s1, tolerance=1e-10)
    assert is_cyclically_monotone(s2, tolerance=1e-10)


@pytest.mark.parametrize('gamma', [1.5, 1.55, 1.6])
def test_instance_below_golden_ratio_does_not_increase_measure(gamma: float):
    ctx = GammaContext(gamma)
    solution = solve(build_problem(ctx))
    assert solution.status is SolveStatus.Optimal, solution.diagnostic

    report = replay_report(build_instance_from_gram(solution.X, ctx))
    assert report.max_deviation <= 1e-5
    assert report.measure_k == pytest.approx(1, abs=1e-6)
    assert report.ratio <= 1 + 1e-6
