"""Compensated accumulation helpers.

Monte Carlo sums and speckle-frame accumulators are merged across many
partial results; plain float64 addition would make the merged value
depend on partition boundaries and lose low-order bits on long runs.
The Neumaier variant of Kahan summation keeps a running error term and
is immune to the summand being larger than the running total.
"""

from __future__ import annotations

import numpy as np


class CompensatedSum:
    """Running Neumaier-compensated sum of scalars or same-shape arrays."""

    def __init__(self, shape: tuple[int, ...] = ()) -> None:
        self._total = np.zeros(shape, dtype=np.float64)
        self._comp = np.zeros(shape, dtype=np.float64)

    def add(self, value: np.ndarray | float) -> None:
        value = np.asarray(value, dtype=np.float64)
        t = self._total + value
        # Whichever operand is larger in magnitude donated the bits that
        # were lost; recover them from the other side of the addition.
        big = np.abs(self._total) >= np.abs(value)
        self._comp += np.where(big, (self._total - t) + value, (value - t) + self._total)
        self._total = t

    @property
    def value(self) -> np.ndarray | float:
        result = self._total + self._comp
        if result.ndim == 0:
            return float(result)
        return result


def compensated_column_sum(matrix: np.ndarray) -> np.ndarray:
    """Sum over axis 1 with Neumaier compensation, one column at a time."""
    matrix = np.asarray(matrix, dtype=np.float64)
    acc = CompensatedSum(shape=(matrix.shape[0],))
    for col in range(matrix.shape[1]):
        acc.add(matrix[:, col])
    return np.asarray(acc.value)
