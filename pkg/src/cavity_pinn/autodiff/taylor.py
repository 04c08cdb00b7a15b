"""Forward propagation of (f, f_x, f_y, f_xx, f_yy) through dense tanh layers.

Each slot is built from ordinary tape operations, so a residual assembled from
the slots can be differentiated with respect to the weights in one reverse
sweep.  Mixed derivatives are never needed and are not carried.

A slot may be ``None``, meaning structurally zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional, Sequence


@dataclass(frozen=True)
class TaylorTuple:
    tape: Any
    val: Any
    dx: Any
    dy: Any
    dxx: Any
    dyy: Any

    @property
    def slots(self) -> tuple:
        return (self.val, self.dx, self.dy, self.dxx, self.dyy)

    def values(self) -> tuple:
        """Slot values read back from the tape (None slots stay None)."""
        return tuple(None if s is None else self.tape.value(s) for s in self.slots)


def input_tuple(tape, value: float, kind: str) -> TaylorTuple:
    """Seed tuple for a network input: ``kind`` is 'x', 'y' or 'const'."""
    if kind not in ("x", "y", "const"):
        raise ValueError(f"unknown input kind {kind!r}")
    zero = tape.const(0.0)
    one = tape.const(1.0)
    v = tape.var(value)
    return TaylorTuple(
        tape,
        v,
        one if kind == "x" else zero,
        one if kind == "y" else zero,
        zero,
        zero,
    )


def _add(tape, a, b):
    if a is None:
        return b
    if b is None:
        return a
    return tape.add(a, b)


def _mul(tape, a, b):
    if a is None or b is None:
        return None
    return tape.mul(a, b)


def taylor_affine(inputs: Sequence[TaylorTuple], weights: Sequence[int], bias: int) -> TaylorTuple:
    """One neuron: z = sum_i w_i a_i + b, applied slot-wise."""
    if len(inputs) != len(weights):
        raise ValueError(f"shape mismatch: {len(inputs)} inputs but {len(weights)} weights")
    if not inputs:
        raise ValueError("taylor_affine needs at least one input")
    tape = inputs[0].tape
    if any(t.tape is not tape for t in inputs):
        raise ValueError("all Taylor tuples must live on the same tape")
    out = [None] * 5
    for t, w in zip(inputs, weights):
        for k, s in enumerate(t.slots):
            out[k] = _add(tape, out[k], _mul(tape, w, s))
    out[0] = _add(tape, out[0], bias)
    return TaylorTuple(tape, *out)


def taylor_tanh(z: TaylorTuple, second_order: bool = True) -> TaylorTuple:
    """tanh applied to a tuple.

    With a = tanh(z), s = 1 - a^2:
    (a, s z_x, s z_y, s z_xx - 2 a s z_x^2, s z_yy - 2 a s z_y^2).
    ``second_order=False`` leaves the curvature slots empty.
    """
    tape = z.tape
    a = tape.tanh(z.val)
    s = tape.shift(tape.neg(tape.square(a)), 1.0)
    dx = _mul(tape, s, z.dx)
    dy = _mul(tape, s, z.dy)
    if not second_order:
        return TaylorTuple(tape, a, dx, dy, None, None)
    k = tape.scale(tape.mul(a, s), -2.0)

    def curvature(d, dd):
        corr = None if d is None else tape.mul(k, tape.square(d))
        return _add(tape, _mul(tape, s, dd), corr)

    return TaylorTuple(tape, a, dx, dy, curvature(z.dx, z.dxx), curvature(z.dy, z.dyy))
