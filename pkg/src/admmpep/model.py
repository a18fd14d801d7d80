"""The lifted performance estimation problem of one ADMM iteration.

Every vector of the estimation problem is represented by its coordinates in
the Gram factor ``P = [Ax^k, By^k, Ax^{k+1}, By^{k+1}, z^k - z^*]``, so that a
quadratic form in those vectors is linear in ``X = P^T P``.  The column order
is shared by every module of this package.
"""

from __future__ import annotations

from collections.abc import Sequence

import attrs
import numpy as np
import numpy.typing as npt

from .common import GammaContext, Matrix, as_symmetric

GRAM_COLUMNS = ('Ax^k', 'By^k', 'Ax^{k+1}', 'By^{k+1}', 'z^k - z^*')

GRAM_DIMENSION = len(GRAM_COLUMNS)

INEQUALITY_LABELS = (
    '<Ax^{k+1}, (z^k - z^*) - (Ax^{k+1} + By^k)>',
    '<By^k, (z^k - z^*) + (gamma - 1)(Ax^k + By^k)>',
    '<By^{k+1}, (z^k - z^*) - (Ax^{k+1} + By^{k+1})>',
    '<By^k - By^{k+1}, (Ax^{k+1} + By^{k+1}) + (gamma - 1)(Ax^k + By^k)>',
    'three-cycle 0 -> y^k -> y^{k+1} -> 0',
    'three-cycle 0 -> y^{k+1} -> y^k -> 0',
)

EQUALITY_LABEL = 'R^k = 1'

OBJECTIVE_LABEL = 'R^{k+1}'


def gram_labels() -> dict[int, str]:
    "The vector behind each Gram column, keyed by its 1-based index."
    return dict(enumerate(GRAM_COLUMNS, 1))


def constraint_labels() -> dict[str, str]:
    return {
        **{f'A{i}': label for i, label in enumerate(INEQUALITY_LABELS, 1)},
        'A7': EQUALITY_LABEL,
        'C': OBJECTIVE_LABEL,
    }


def unit(index: int, dimension: int = GRAM_DIMENSION) -> Matrix:
    "The ``index``-th unit vector, counting from 1 to match the column contract."
    vector = np.zeros(dimension)
    vector[index - 1] = 1.0
    return vector


def sym_outer(u: npt.ArrayLike, v: npt.ArrayLike) -> Matrix:
    "The symmetric outer product ``(u v^T + v u^T) / 2``."
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    outer = np.outer(u, v)
    return (outer + outer.T) / 2


def trace_inner(a: npt.ArrayLike, b: npt.ArrayLike) -> float:
    "The trace inner product ``tr(a^T b)`` of two symmetric matrices."
    return float(np.sum(np.multiply(a, b)))


def _to_symmetric_stack(matrices: Sequence[npt.ArrayLike]) -> tuple[Matrix, ...]:
    return tuple(as_symmetric(m) for m in matrices)


@attrs.frozen(eq=False)
class SdpProblem:
    """``max <C, X>`` subject to ``<A_i, X> >= 0``, ``<A_eq, X> = rhs`` and ``X`` PSD.

    The estimation problem always has six inequalities; other counts are
    accepted so that small self-test problems can be posed to the solver.
    """

    objective: Matrix = attrs.field(converter=as_symmetric)
    inequalities: tuple[Matrix, ...] = attrs.field(converter=_to_symmetric_stack)
    equality: Matrix = attrs.field(converter=as_symmetric)
    equality_rhs: float = 1.0

    def __attrs_post_init__(self) -> None:
        shape = self.objective.shape
        if self.equality.shape != shape or any(a.shape != shape for a in self.inequalities):
            raise ValueError('all matrices of a problem must share one shape')

    @property
    def dimension(self) -> int:
        return self.objective.shape[0]

    @property
    def constraint_stack(self) -> Matrix:
        "The inequality matrices followed by the equality matrix as one array."
        return np.stack([*self.inequalities, self.equality])


def assemble_problem(gamma: float) -> SdpProblem:
    """Evaluate the matrix formulas at any real ``gamma``.

    No domain check is made; ``build_problem`` is the entry point for the
    estimation problem proper.
    """
    e1, e2, e3, e4, e5 = (unit(i) for i in range(1, GRAM_DIMENSION + 1))

    # (gamma - 1)(Ax^k + By^k), the residual carried over from the previous step
    carried = (gamma - 1) * (e1 + e2)

    a1 = sym_outer(e3, e5 - e3 - e2)
    a2 = sym_outer(e2, e5 + carried)
    a3 = sym_outer(e4, e5 - e3 - e4)
    a4 = sym_outer(e2 - e4, (e3 + e4) + carried)
    a5 = sym_outer(e4, -(e3 + e4) - carried) + sym_outer(e2, e5 + carried)
    a6 = sym_outer(e2, (e3 + e4) + carried) + sym_outer(e4, e5 - e3 - e4)
    a7 = sym_outer(e5, e5) + gamma * sym_outer(e2, e2) + (gamma - 1) * sym_outer(e1 + e2, e1 + e2)

    z_next = e5 - gamma * (e3 + e4)
    c = (
        sym_outer(z_next, z_next)
        + gamma * sym_outer(e4, e4)
        + (gamma - 1) * sym_outer(e3 + e4, e3 + e4)
    )

    return SdpProblem(objective=c, inequalities=(a1, a2, a3, a4, a5, a6), equality=a7)


def build_problem(ctx: GammaContext) -> SdpProblem:
    "Assemble the objective and constraint matrices of the lifted problem at ``ctx.gamma``."
    return assemble_problem(ctx.gamma)


def constraint_values(
    problem: SdpProblem, x: npt.ArrayLike
) -> tuple[tuple[float, ...], float, float]:
    "``(<A_i, X> for each inequality, <A_eq, X>, <C, X>)``."
    x = np.asarray(x, dtype=np.float64)
    return (
        tuple(trace_inner(a, x) for a in problem.inequalities),
        trace_inner(problem.equality, x),
        trace_inner(problem.objective, x),
    )
