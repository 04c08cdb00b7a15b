"""Scalar reverse-mode tape.

Every operation appends one node holding its value, up to two parent ids and
the local partial derivative with respect to each parent.  ``backward`` is a
single reverse sweep over the node list; ids are dense and parents always
precede children, so no topological sort is needed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class TapeError(ValueError):
    """Rejected input: non-finite values or unknown node ids."""


class SingularOperationError(ArithmeticError):
    pass


@dataclass(frozen=True)
class TapeNode:
    value: float
    parents: tuple[int, ...]
    local_partials: tuple[float, ...]


class Tape:
    def __init__(self):
        self._values: list[float] = []
        self._parents: list[tuple[int, ...]] = []
        self._partials: list[tuple[float, ...]] = []

    def __len__(self) -> int:
        return len(self._values)

    @property
    def next_id(self) -> int:
        return len(self._values)

    @property
    def nodes(self) -> list[TapeNode]:
        return [TapeNode(v, p, d) for v, p, d in zip(self._values, self._parents, self._partials)]

    def node(self, i: int) -> TapeNode:
        self._check(i)
        return TapeNode(self._values[i], self._parents[i], self._partials[i])

    def value(self, i: int) -> float:
        self._check(i)
        return self._values[i]

    def clear(self) -> None:
        self._values.clear()
        self._parents.clear()
        self._partials.clear()

    def _check(self, *ids: int) -> None:
        n = len(self._values)
        for i in ids:
            if not (isinstance(i, int) and 0 <= i < n):
                raise TapeError(f"node id {i!r} is not on this tape (size {n})")

    def _push(self, value: float, parents: tuple[int, ...], partials: tuple[float, ...]) -> int:
        if not math.isfinite(value) or not all(math.isfinite(d) for d in partials):
            raise TapeError(f"non-finite value {value!r} or partials {partials!r} rejected")
        self._values.append(value)
        self._parents.append(parents)
        self._partials.append(partials)
        return len(self._values) - 1

    # -- leaves ------------------------------------------------------------

    def var(self, value: float) -> int:
        value = float(value)
        if not math.isfinite(value):
            raise TapeError(f"variable value must be finite, got {value!r}")
        return self._push(value, (), ())

    const = var

    # -- operations --------------------------------------------------------

    def add(self, a: int, b: int) -> int:
        self._check(a, b)
        return self._push(self._values[a] + self._values[b], (a, b), (1.0, 1.0))

    def sub(self, a: int, b: int) -> int:
        self._check(a, b)
        return self._push(self._values[a] - self._values[b], (a, b), (1.0, -1.0))

    def mul(self, a: int, b: int) -> int:
        self._check(a, b)
        va, vb = self._values[a], self._values[b]
        return self._push(va * vb, (a, b), (vb, va))

    def div(self, a: int, b: int) -> int:
        self._check(a, b)
        va, vb = self._values[a], self._values[b]
        if vb == 0.0:
            raise SingularOperationError(f"division by zero at node {b}")
        return self._push(va / vb, (a, b), (1.0 / vb, -va / (vb * vb)))

    def tanh(self, a: int) -> int:
        self._check(a)
        t = math.tanh(self._values[a])
        return self._push(t, (a,), (1.0 - t * t,))

    def square(self, a: int) -> int:
        self._check(a)
        va = self._values[a]
        return self._push(va * va, (a,), (2.0 * va,))

    def scale(self, a: int, c: float) -> int:
        """Multiply by a constant that is not itself a tape node."""
        self._check(a)
        return self._push(c * self._values[a], (a,), (float(c),))

    def shift(self, a: int, c: float) -> int:
        """Add a constant that is not itself a tape node."""
        self._check(a)
        return self._push(self._values[a] + c, (a,), (1.0,))

    def neg(self, a: int) -> int:
        return self.scale(a, -1.0)

    # -- reverse sweep -----------------------------------------------------

    def backward(self, output: int) -> list[float]:
        self._check(output)
        adj = [0.0] * len(self._values)
        adj[output] = 1.0
        parents, partials = self._parents, self._partials
        for i in range(output, -1, -1):
            g = adj[i]
            if g == 0.0:
                continue
            for p, d in zip(parents[i], partials[i]):
                adj[p] += g * d
        return adj


def var(tape: Tape, value: float) -> int:
    return tape.var(value)


def backward(tape: Tape, output: int) -> list[float]:
    return tape.backward(output)


class PlainOps:
    """Tape stand-in whose "nodes" are the numbers themselves.

    Lets the Taylor and residual code run on floats or numpy arrays without
    recording anything.
    """

    def var(self, value):
        return value

    const = var

    def add(self, a, b):
        return a + b

    def sub(self, a, b):
        return a - b

    def mul(self, a, b):
        return a * b

    def div(self, a, b):
        return a / b

    def tanh(self, a):
        return np.tanh(a)

    def square(self, a):
        return a * a

    def scale(self, a, c):
        return c * a

    def shift(self, a, c):
        return a + c

    def neg(self, a):
        return -a

    def value(self, a):
        return a


PLAIN = PlainOps()
