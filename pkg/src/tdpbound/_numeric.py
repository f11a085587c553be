"""Small numerical helpers shared across modules."""

from __future__ import annotations

import math


class CompensatedSum:
    """Running Neumaier sum; ``value`` is exact to within a couple of ulps."""

    __slots__ = ("_s", "_c")

    def __init__(self, start: float = 0.0):
        self._s = float(start)
        self._c = 0.0

    def add(self, x: float) -> None:
        x = float(x)
        t = self._s + x
        if abs(self._s) >= abs(x):
            self._c += (self._s - t) + x
        else:
            self._c += (x - t) + self._s
        self._s = t

    @property
    def value(self) -> float:
        return self._s + self._c


def fsum(values) -> float:
    return math.fsum(float(v) for v in values)
