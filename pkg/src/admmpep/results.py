from __future__ import annotations

from collections.abc import Callable, Sequence
from typing import TYPE_CHECKING, Any, Final, Protocol, TypeAlias, TypeVar

from loguru import logger

if TYPE_CHECKING:
    from .sdp import SdpSolution

_T = TypeVar('_T')

AnyResult: TypeAlias = '_T | ComputationError | InternalError'


class Result(Protocol):  # pragma: no cover
    @property
    def message(self) -> str:
        ...


class ComputationError(Result, Exception):
    status: Final = 'failure'

    @property
    def message(self) -> str:
        raise NotImplementedError


class DomainError(ComputationError):
    def __init__(self, gamma: float, subexpression: str, value: float | None = None) -> None:
        super().__init__(gamma, subexpression, value)
        self.gamma = gamma
        self.subexpression = subexpression
        self.value = value

    @property
    def message(self) -> str:
        message = f'gamma={self.gamma!r} is outside the domain of {self.subexpression}'
        if self.value is not None:
            message += f' (evaluates to {self.value:.3e})'
        return message


class RankError(ComputationError):
    def __init__(self, expected_rank: int, eigenvalues: Sequence[float], tolerance: float) -> None:
        super().__init__(expected_rank, eigenvalues, tolerance)
        self.expected_rank = expected_rank
        self.eigenvalues = list(eigenvalues)
        self.tolerance = tolerance

    @property
    def message(self) -> str:
        return (
            f'matrix is not of numerical rank {self.expected_rank} at tolerance {self.tolerance:g}; '
            f'eigenvalues: {", ".join(f"{e:.3e}" for e in self.eigenvalues)}'
        )


class MonotonicityError(ComputationError):
    def __init__(self, cycle: Sequence[int], cycle_sum: float) -> None:
        super().__init__(cycle, cycle_sum)
        self.cycle = tuple(cycle)
        self.cycle_sum = cycle_sum

    @property
    def message(self) -> str:
        cycle = ' -> '.join(map(str, (*self.cycle, self.cycle[0])))
        return f'set is not cyclically monotone: cycle {cycle} sums to {self.cycle_sum:.3e}'


class SizeError(ComputationError):
    def __init__(self, size: int, limit: int) -> None:
        super().__init__(size, limit)
        self.size = size
        self.limit = limit

    @property
    def message(self) -> str:
        return f'{self.size} points exceed the enumeration limit of {self.limit}'


class EnumerationError(ComputationError):
    def __init__(self, piece_count: int) -> None:
        super().__init__(piece_count)
        self.piece_count = piece_count

    @property
    def message(self) -> str:
        return f'no active set of the {self.piece_count} pieces satisfies the optimality conditions'


class SolverFailure(ComputationError):
    def __init__(self, solution: SdpSolution) -> None:
        super().__init__(solution)
        self.solution = solution

    @property
    def message(self) -> str:
        solution = self.solution
        return (
            f'solver stopped with status {solution.status.value} after {solution.iterations} iterations'
            + (f': {solution.diagnostic}' if solution.diagnostic else '')
        )


class InternalError(Result, Exception):
    status: Final = 'error'

    @property
    def message(self) -> str:
        return f'internal error: "{self.args[0]}"'


def resultify(fn: Callable[..., _T], *args: Any, **kwargs: Any) -> AnyResult[_T]:
    "Capture and log an exception raised by a computation."
    try:
        return fn(*args, **kwargs)
    except (ComputationError, InternalError) as error:
        return error
    except Exception as error:
        logger.exception('unclassed error')
        return InternalError(error)
