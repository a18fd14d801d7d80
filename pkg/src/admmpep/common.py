from __future__ import annotations

import math
from typing import TypeAlias

import attrs
import numpy as np
import numpy.typing as npt

from .results import DomainError
from .utils import fauxfrozen

Vector: TypeAlias = npt.NDArray[np.float64]
Matrix: TypeAlias = npt.NDArray[np.float64]

GOLDEN_RATIO = (math.sqrt(5) + 1) / 2


def as_vector(value: npt.ArrayLike) -> Vector:
    vector = np.array(value, dtype=np.float64)
    if vector.ndim == 0:
        vector = vector.reshape(1)
    elif vector.ndim != 1:
        raise ValueError(f'expected a vector, got an array of shape {vector.shape}')
    return vector


def as_symmetric(value: npt.ArrayLike) -> Matrix:
    "Coerce a square array to a symmetric matrix, averaging it with its transpose."
    matrix = np.array(value, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f'expected a square matrix, got an array of shape {matrix.shape}')
    return (matrix + matrix.T) / 2


@fauxfrozen
class GammaContext:
    """The dual step length together with the scalars derived from it.

    All closed forms in this package are written for ``gamma > 1``, where
    ``sqrt(gamma**2 - 1)`` is real.
    """

    gamma: float = attrs.field(converter=float)
    sqrt_term: float = attrs.field(init=False, eq=False)

    @gamma.validator  # pyright: ignore[reportAttributeAccessIssue, reportUntypedFunctionDecorator]
    def _check_gamma(self, _attr: attrs.Attribute[float], value: float) -> None:
        if not math.isfinite(value) or value <= 1:
            raise DomainError(value, 'sqrt(gamma**2 - 1), which requires gamma > 1')

    def __attrs_post_init__(self) -> None:
        object.__setattr__(self, 'sqrt_term', math.sqrt(self.gamma**2 - 1))

    @property
    def phi(self) -> float:
        return GOLDEN_RATIO

    @property
    def above_golden_ratio(self) -> bool:
        return self.gamma > GOLDEN_RATIO
