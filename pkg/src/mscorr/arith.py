"""Arithmetic backend shared by the projection and metric kernels.

Kernels work on arrays whose leading axis is the pixel axis and call the
methods of an :class:`Arith` instead of numpy operators.  The plain backend
just evaluates; :class:`CountingArith` also tallies how many scalar operations
each pixel needed, which is how measured cost profiles are obtained from the
exact code that produces metric values.

Only elementwise numpy operations are used so that every pixel's result is
independent of how the pixel axis is partitioned.
"""

from __future__ import annotations

from collections import OrderedDict
from contextlib import contextmanager
from dataclasses import dataclass
from enum import Enum
from typing import Iterator

import numpy as np


class Op(str, Enum):
    ADD = "ADD"
    SUB = "SUB"
    MUL = "MUL"
    DIV = "DIV"
    SHIFT_DIV = "SHIFT_DIV"
    SQRT = "SQRT"
    CBRT = "CBRT"


class Numeric(str, Enum):
    INTEGER = "INTEGER"
    FLOAT = "FLOAT"


class Phase(str, Enum):
    PROJECTION = "projection"
    DISTANCE = "distance"


@dataclass(frozen=True)
class StageTag:
    phase: Phase
    name: str
    parallel: bool
    numeric: Numeric
    per_band: bool


_LAB_EPS = (6.0 / 29.0) ** 3
_LAB_SLOPE = 1.0 / (3.0 * (6.0 / 29.0) ** 2)
_LAB_OFFSET = 4.0 / 29.0


def is_pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


class Arith:
    """Plain float64 arithmetic."""

    @contextmanager
    def stage(
        self,
        phase: Phase,
        name: str,
        *,
        parallel: bool,
        numeric: Numeric = Numeric.FLOAT,
        per_band: bool = False,
    ) -> Iterator[None]:
        yield

    def _tally(self, op: Op, result: np.ndarray) -> np.ndarray:
        return result

    def add(self, a, b):
        return self._tally(Op.ADD, np.add(a, b))

    def sub(self, a, b):
        return self._tally(Op.SUB, np.subtract(a, b))

    def mul(self, a, b):
        return self._tally(Op.MUL, np.multiply(a, b))

    def div(self, a, b):
        return self._tally(Op.DIV, np.divide(a, b))

    def shift_div(self, a, m: int):
        # exact scaling by 2**-m
        return self._tally(Op.SHIFT_DIV, np.ldexp(a, -m))

    def sqrt(self, a):
        return self._tally(Op.SQRT, np.sqrt(a))

    def lab_f(self, t):
        """Piecewise cube root of the L*a*b* transform (one cube-root unit per element)."""
        t = np.asarray(t, dtype=np.float64)
        lin = t * _LAB_SLOPE + _LAB_OFFSET
        return self._tally(Op.CBRT, np.where(t > _LAB_EPS, np.cbrt(t), lin))

    def lab_fprime(self, t):
        """Derivative of :meth:`lab_f`, also counted as one cube-root unit."""
        t = np.asarray(t, dtype=np.float64)
        safe = np.where(t > _LAB_EPS, t, 1.0)
        c = np.cbrt(safe)
        return self._tally(Op.CBRT, np.where(t > _LAB_EPS, 1.0 / (3.0 * c * c), _LAB_SLOPE))

    def sum_last(self, x):
        """Sum over the last axis in a fixed pairwise order (``n - 1`` additions)."""
        x = np.asarray(x)
        while x.shape[-1] > 1:
            n = x.shape[-1]
            h = n // 2
            s = self.add(x[..., :h], x[..., h : 2 * h])
            x = np.concatenate([s, x[..., 2 * h :]], axis=-1) if n % 2 else s
        return x[..., 0]

    def accumulate_last(self, x):
        """Serial multiply-accumulate style sum from zero (``n`` additions)."""
        x = np.asarray(x)
        acc = np.zeros(x.shape[:-1])
        for k in range(x.shape[-1]):
            acc = self.add(acc, x[..., k])
        return acc

    def mean_last(self, x):
        """Mean over the last axis; a shift when the length is a power of two."""
        n = np.asarray(x).shape[-1]
        s = self.sum_last(x)
        if is_pow2(n):
            return self.shift_div(s, n.bit_length() - 1)
        return self.div(s, float(n))


PLAIN = Arith()


class CountingArith(Arith):
    """Arith that records per-pixel operation totals by stage."""

    def __init__(self, pixels: int) -> None:
        self.pixels = pixels
        self.counts: OrderedDict[tuple[StageTag, Op], int] = OrderedDict()
        self._stack: list[StageTag] = []

    @contextmanager
    def stage(self, phase, name, *, parallel, numeric=Numeric.FLOAT, per_band=False):
        self._stack.append(StageTag(Phase(phase), name, parallel, Numeric(numeric), per_band))
        try:
            yield
        finally:
            self._stack.pop()

    def _tally(self, op: Op, result):
        if not self._stack:
            raise RuntimeError(f"{op.value} issued outside a stage")
        n = np.size(result)
        if n % self.pixels:
            raise RuntimeError(f"{op.value} result of size {n} is not per-pixel")
        key = (self._stack[-1], op)
        self.counts[key] = self.counts.get(key, 0) + n // self.pixels
        return result


def tree_sum(values: np.ndarray) -> float:
    """Fixed pairwise reduction of a 1-D array.

    The pairing depends only on the length, never on how the values were
    produced, so results are bit-identical for any worker partitioning.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        return 0.0
    return float(PLAIN.sum_last(x))
