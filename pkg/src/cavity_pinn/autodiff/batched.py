"""Reverse-mode tape over numpy arrays.

Same recording model as :class:`~cavity_pinn.autodiff.tape.Tape` (dense ids,
parents before children, one reverse sweep) but each node holds an array and
each operation stores a vector-Jacobian product instead of scalar partials.
One node then covers a whole batch of collocation points, which is what makes
training affordable; the scalar tape stays the reference it is checked against.
"""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np

Vjp = Callable[[np.ndarray], tuple]


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class ArrayTape:
    def __init__(self):
        self.values: list[np.ndarray] = []
        self._parents: list[tuple[int, ...]] = []
        self._vjps: list[Optional[Vjp]] = []

    def __len__(self) -> int:
        return len(self.values)

    def _push(self, value, parents=(), vjp=None) -> int:
        self.values.append(value)
        self._parents.append(parents)
        self._vjps.append(vjp)
        return len(self.values) - 1

    def value(self, i: int) -> np.ndarray:
        return self.values[i]

    # -- leaves ------------------------------------------------------------

    def var(self, value) -> int:
        value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise ValueError("non-finite variable value rejected")
        return self._push(value)

    const = var

    # -- elementwise -------------------------------------------------------

    def add(self, a: int, b: int) -> int:
        va, vb = self.values[a], self.values[b]
        sa, sb = va.shape, vb.shape
        return self._push(va + vb, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))

    def sub(self, a: int, b: int) -> int:
        va, vb = self.values[a], self.values[b]
        sa, sb = va.shape, vb.shape
        return self._push(va - vb, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))

    def mul(self, a: int, b: int) -> int:
        va, vb = self.values[a], self.values[b]
        return self._push(
            va * vb, (a, b), lambda g: (_unbroadcast(g * vb, va.shape), _unbroadcast(g * va, vb.shape))
        )

    def square(self, a: int) -> int:
        va = self.values[a]
        return self._push(va * va, (a,), lambda g: (2.0 * g * va,))

    def tanh(self, a: int) -> int:
        t = np.tanh(self.values[a])
        return self._push(t, (a,), lambda g: (g * (1.0 - t * t),))

    def scale(self, a: int, c) -> int:
        va = self.values[a]
        return self._push(c * va, (a,), lambda g: (_unbroadcast(g * c, va.shape),))

    def shift(self, a: int, c) -> int:
        va = self.values[a]
        return self._push(va + c, (a,), lambda g: (_unbroadcast(g, va.shape),))

    def neg(self, a: int) -> int:
        return self.scale(a, -1.0)

    # -- linear algebra and reductions ---------------------------------------

    def matmul(self, a: int, w: int) -> int:
        va, vw = self.values[a], self.values[w]
        return self._push(va @ vw, (a, w), lambda g: (g @ vw.T, va.T @ g))

    def sum(self, a: int) -> int:
        va = self.values[a]
        return self._push(np.asarray(va.sum()), (a,), lambda g: (np.broadcast_to(g, va.shape),))

    def mean(self, a: int) -> int:
        va = self.values[a]
        n = va.size
        return self._push(np.asarray(va.mean()), (a,), lambda g: (np.broadcast_to(g / n, va.shape),))

    def column(self, a: int, j: int) -> int:
        va = self.values[a]

        def vjp(g):
            out = np.zeros_like(va)
            out[:, j] = g
            return (out,)

        return self._push(va[:, j], (a,), vjp)

    # -- stacked Taylor layers ---------------------------------------------
    #
    # A stacked node has shape (k, n, width) with k = 1, 3 or 5 slots in the
    # order value, d/dx, d/dy, d2/dx2, d2/dy2.

    def stacked_dense(self, z: int, w: int, b: int) -> int:
        """Slot-wise z @ W, with the bias added to the value slot only."""
        vz, vw, vb = self.values[z], self.values[w], self.values[b]
        k, n, fi = vz.shape
        out = vz @ vw
        out[0] += vb

        def vjp(g):
            g2 = g.reshape(k * n, -1)
            gz = (g2 @ vw.T).reshape(k, n, fi)
            gw = vz.reshape(k * n, fi).T @ g2
            return gz, gw, g[0].sum(axis=0)

        return self._push(out, (z, w, b), vjp)

    def stacked_tanh(self, z: int) -> int:
        """tanh with chain-rule propagation of the derivative slots.

        out = (a, s dx, s dy, s dxx - 2as dx^2, s dyy - 2as dy^2),
        a = tanh(v), s = 1 - a^2.
        """
        vz = self.values[z]
        k = vz.shape[0]
        a = np.tanh(vz[0])
        s = 1.0 - a * a
        out = np.empty_like(vz)
        out[0] = a
        if k >= 3:
            out[1:3] = s * vz[1:3]
        if k == 5:
            two_as = 2.0 * a * s
            out[3:5] = s * vz[3:5] - two_as * vz[1:3] ** 2

        def vjp(g):
            gz = np.empty_like(vz)
            gv = s * g[0]
            if k >= 3:
                d = vz[1:3]
                m2as = -2.0 * a * s
                gz[1:3] = s * g[1:3]
                gv = gv + m2as * (g[1] * d[0] + g[2] * d[1])
            if k == 5:
                dd = vz[3:5]
                gz[1:3] += (2.0 * m2as) * d * g[3:5]
                gz[3:5] = s * g[3:5]
                gv = gv + m2as * (g[3] * dd[0] + g[4] * dd[1])
                gv = gv - 2.0 * s * (s - 2.0 * a * a) * (g[3] * d[0] ** 2 + g[4] * d[1] ** 2)
            gz[0] = gv
            return (gz,)

        return self._push(out, (z,), vjp)

    def slot(self, a: int, k: int) -> int:
        """Slot ``k`` of a stacked (slots, n, 1) output as an (n,) node."""
        va = self.values[a]

        def vjp(g):
            out = np.zeros_like(va)
            out[k, :, 0] = g
            return (out,)

        return self._push(va[k, :, 0], (a,), vjp)

    # -- reverse sweep -----------------------------------------------------

    def backward(self, output: int) -> list[Optional[np.ndarray]]:
        """Adjoints of ``output`` with respect to every node (None where zero)."""
        adj: list[Optional[np.ndarray]] = [None] * len(self.values)
        adj[output] = np.ones_like(self.values[output])
        parents, vjps = self._parents, self._vjps
        for i in range(output, -1, -1):
            g = adj[i]
            if g is None or not parents[i]:
                continue
            for p, gp in zip(parents[i], vjps[i](g)):
                adj[p] = gp if adj[p] is None else adj[p] + gp
        return adj

    def grad(self, output: int, wrt) -> list[np.ndarray]:
        adj = self.backward(output)
        return [np.zeros_like(self.values[i]) if adj[i] is None else adj[i] for i in wrt]
