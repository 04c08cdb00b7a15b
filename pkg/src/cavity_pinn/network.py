"""Shared-trunk MLP with separate u, v, p heads.

Layout of a :class:`ParameterSet`: layers are stored in the order trunk,
head u, head v, head p, each head ending in a linear 1-output layer.  Every
layer contributes its weight matrix (fan_in x fan_out, row-major) followed by
its bias vector to the flat ``values`` array.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from cavity_pinn.autodiff import ArrayTape, TaylorTuple, input_tuple, taylor_affine, taylor_tanh

HEADS = ("u", "v", "p")
RE_SCALE = 300.0
CHECKPOINT_MAGIC = "# cavity-pinn checkpoint v1"


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int = 2
    trunk_depth: int = 3
    head_depth: int = 3
    width: int = 100

    def __post_init__(self):
        if self.input_dim not in (2, 3):
            raise ShapeError(f"input_dim must be 2 (x, y) or 3 (x, y, Re), got {self.input_dim}")
        if self.trunk_depth < 0 or self.head_depth < 0 or self.width < 1:
            raise ShapeError("depths must be >= 0 and width >= 1")

    @property
    def uses_re(self) -> bool:
        return self.input_dim == 3

    def layer_shapes(self) -> list[tuple[int, int]]:
        w = self.width
        shapes = []
        fan = self.input_dim
        for _ in range(self.trunk_depth):
            shapes.append((fan, w))
            fan = w
        trunk_out = fan
        for _ in HEADS:
            fan = trunk_out
            for _ in range(self.head_depth):
                shapes.append((fan, w))
                fan = w
            shapes.append((fan, 1))
        return shapes

    def n_params(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_shapes())


@dataclass
class ParameterSet:
    values: np.ndarray
    shapes: list[tuple[int, int]]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.shapes = [(int(a), int(b)) for a, b in self.shapes]
        expected = sum(fi * fo + fo for fi, fo in self.shapes)
        if self.values.shape != (expected,):
            raise ShapeError(f"expected {expected} parameter values, got shape {self.values.shape}")

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """(W, b) views into ``values``; writing to them mutates the set."""
        out, k = [], 0
        for fi, fo in self.shapes:
            w = self.values[k : k + fi * fo].reshape(fi, fo)
            k += fi * fo
            b = self.values[k : k + fo]
            k += fo
            out.append((w, b))
        return out

    @classmethod
    def from_layers(cls, layers) -> "ParameterSet":
        shapes = [tuple(np.shape(w)) for w, _ in layers]
        flat = np.concatenate([np.concatenate([np.ravel(w), np.ravel(b)]) for w, b in layers])
        return cls(flat, shapes)

    def copy(self) -> "ParameterSet":
        return ParameterSet(self.values.copy(), list(self.shapes))

    def __eq__(self, other):
        if not isinstance(other, ParameterSet):
            return NotImplemented
        return self.shapes == other.shapes and np.array_equal(self.values, other.values)


def init_xavier(spec: NetworkSpec, seed: int) -> ParameterSet:
    """Glorot-normal weights (std = sqrt(2 / (fan_in + fan_out))), zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    for fi, fo in spec.layer_shapes():
        std = math.sqrt(2.0 / (fi + fo))
        layers.append((rng.normal(0.0, std, size=(fi, fo)), np.zeros(fo)))
    return ParameterSet.from_layers(layers)


def _check(params: ParameterSet, spec: NetworkSpec) -> None:
    if params.shapes != spec.layer_shapes():
        raise ShapeError("parameter shapes do not match the network spec")


def network_inputs(spec: NetworkSpec, x, y, re=None) -> np.ndarray:
    """Stack coordinates (and scaled Re) into an (n, input_dim) array."""
    if spec.uses_re and re is None:
        raise ShapeError("this network takes Re as an input; none given")
    if not spec.uses_re and re is not None:
        raise ShapeError("this network has no Re input, but Re was given")
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.broadcast_to(np.asarray(y, dtype=np.float64), x.shape)
    cols = [x, y]
    if spec.uses_re:
        cols.append(np.broadcast_to(np.asarray(re, dtype=np.float64), x.shape) / RE_SCALE)
    return np.stack(cols, axis=1)


def _split(spec: NetworkSpec, layers):
    t = spec.trunk_depth
    per_head = spec.head_depth + 1
    trunk = layers[:t]
    heads = [layers[t + k * per_head : t + (k + 1) * per_head] for k in range(len(HEADS))]
    return trunk, heads


def forward_inputs(params: ParameterSet, spec: NetworkSpec, inputs: np.ndarray):
    """Plain forward pass on an (n, input_dim) array; returns u, v, p arrays."""
    _check(params, spec)
    trunk, heads = _split(spec, params.layers())
    a = inputs
    for w, b in trunk:
        a = np.tanh(a @ w + b)
    outs = []
    for head in heads:
        h = a
        for w, b in head[:-1]:
            h = np.tanh(h @ w + b)
        w, b = head[-1]
        outs.append((h @ w + b)[:, 0])
    return tuple(outs)


def _dense_point(a: list[float], w: np.ndarray, b: np.ndarray, activate: bool) -> list[float]:
    # same summation order as taylor_affine, so the tape reproduces it bit for bit
    out = []
    for j in range(w.shape[1]):
        acc = float(w[0, j]) * a[0]
        for i in range(1, len(a)):
            acc = acc + float(w[i, j]) * a[i]
        acc = acc + float(b[j])
        out.append(math.tanh(acc) if activate else acc)
    return out


def forward(params: ParameterSet, spec: NetworkSpec, x, y, re=None):
    """(u, v, p) at a point, or arrays of them when x/y are arrays.

    Scalar points go through a plain-Python evaluation whose rounding matches
    :func:`forward_taylor` exactly; arrays take the vectorised path.
    """
    inputs = network_inputs(spec, x, y, re)
    if np.ndim(x) or np.ndim(y):
        return forward_inputs(params, spec, inputs)
    _check(params, spec)
    trunk, heads = _split(spec, params.layers())
    a = [float(t) for t in inputs[0]]
    for w, b in trunk:
        a = _dense_point(a, w, b, activate=True)
    outs = []
    for head in heads:
        h = a
        for w, b in head[:-1]:
            h = _dense_point(h, w, b, activate=True)
        w, b = head[-1]
        outs.append(_dense_point(h, w, b, activate=False)[0])
    return tuple(outs)


# -- scalar tape -----------------------------------------------------------------

def tape_parameters(tape, params: ParameterSet) -> list[tuple[list[list[int]], list[int]]]:
    """Record every parameter as a tape variable, grouped per layer as (W ids, b ids)."""
    out = []
    for w, b in params.layers():
        wid = [[tape.var(float(w[i, j])) for j in range(w.shape[1])] for i in range(w.shape[0])]
        bid = [tape.var(float(bb)) for bb in b]
        out.append((wid, bid))
    return out


def flat_ids(layer_ids) -> list[int]:
    """Layer-grouped tape ids in ``ParameterSet.values`` order."""
    ids = []
    for wid, bid in layer_ids:
        for row in wid:
            ids.extend(row)
        ids.extend(bid)
    return ids


def _dense_taylor(inputs: list[TaylorTuple], wid, bid, activate: bool) -> list[TaylorTuple]:
    fo = len(bid)
    out = []
    for j in range(fo):
        z = taylor_affine(inputs, [row[j] for row in wid], bid[j])
        out.append(taylor_tanh(z) if activate else z)
    return out


def forward_taylor(params: ParameterSet, spec: NetworkSpec, tape, x: float, y: float, re=None, layer_ids=None):
    """Forward pass on the scalar tape carrying first and second x/y derivatives.

    ``layer_ids`` (from :func:`tape_parameters`) lets several calls share one
    set of parameter nodes; if omitted the parameters are recorded afresh.
    """
    _check(params, spec)
    if spec.uses_re and re is None:
        raise ShapeError("this network takes Re as an input; none given")
    if not spec.uses_re and re is not None:
        raise ShapeError("this network has no Re input, but Re was given")
    if layer_ids is None:
        layer_ids = tape_parameters(tape, params)
    a = [input_tuple(tape, x, "x"), input_tuple(tape, y, "y")]
    if spec.uses_re:
        a.append(input_tuple(tape, float(re) / RE_SCALE, "const"))
    trunk, heads = _split(spec, layer_ids)
    for wid, bid in trunk:
        a = _dense_taylor(a, wid, bid, activate=True)
    outs = []
    for head in heads:
        h = a
        for wid, bid in head[:-1]:
            h = _dense_taylor(h, wid, bid, activate=True)
        wid, bid = head[-1]
        outs.append(_dense_taylor(h, wid, bid, activate=False)[0])
    return tuple(outs)


# -- batched tape ----------------------------------------------------------------

def tape_layers(tape: ArrayTape, params: ParameterSet) -> list[tuple[int, int]]:
    return [(tape.var(w), tape.var(b)) for w, b in params.layers()]


def layer_grads_to_flat(tape: ArrayTape, adj, layer_nodes) -> np.ndarray:
    parts = []
    for wn, bn in layer_nodes:
        for node in (wn, bn):
            g = adj[node]
            parts.append(np.zeros(tape.values[node].size) if g is None else np.ravel(g))
    return np.concatenate(parts)


def forward_batch(tape: ArrayTape, layer_nodes, spec: NetworkSpec, inputs: np.ndarray, order: int = 0):
    """Batched forward on an :class:`ArrayTape`.

    ``order`` selects which spatial derivatives are carried: 0 (values only),
    1 (gradient) or 2 (gradient and the two pure second derivatives).
    Returns three :class:`TaylorTuple` whose slots are (n,) array nodes, with
    ``None`` for slots not carried.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    k = (1, 3, 5)[order]
    n = inputs.shape[0]
    seed = np.zeros((k, n, spec.input_dim))
    seed[0] = inputs
    if order:
        seed[1, :, 0] = 1.0
        seed[2, :, 1] = 1.0
    a = tape.const(seed)
    trunk, heads = _split(spec, layer_nodes)
    for w, b in trunk:
        a = tape.stacked_tanh(tape.stacked_dense(a, w, b))
    outs = []
    for head in heads:
        h = a
        for w, b in head[:-1]:
            h = tape.stacked_tanh(tape.stacked_dense(h, w, b))
        w, b = head[-1]
        z = tape.stacked_dense(h, w, b)
        slots = [tape.slot(z, j) for j in range(k)] + [None] * (5 - k)
        outs.append(TaylorTuple(tape, *slots))
    return tuple(outs)


# -- checkpoints -------------------------------------------------------------------

def save_checkpoint(path, params: ParameterSet, spec: Optional[NetworkSpec] = None) -> None:
    """Text checkpoint: magic line, optional spec line, shapes table, one double per line.

    Values are written with ``repr`` (shortest round-tripping form), so a load
    reproduces the parameters bit for bit.
    """
    lines = [CHECKPOINT_MAGIC]
    if spec is not None:
        lines.append(f"spec {spec.input_dim} {spec.trunk_depth} {spec.head_depth} {spec.width}")
    lines.append(f"layers {len(params.shapes)}")
    lines += [f"{fi} {fo}" for fi, fo in params.shapes]
    lines.append(f"values {params.values.size}")
    lines += [repr(float(v)) for v in params.values]
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> tuple[ParameterSet, Optional[NetworkSpec]]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    k = 1
    spec = None
    if lines[k].startswith("spec "):
        spec = NetworkSpec(*(int(t) for t in lines[k].split()[1:]))
        k += 1
    n_layers = int(lines[k].split()[1])
    shapes = [tuple(int(t) for t in lines[k + 1 + i].split()) for i in range(n_layers)]
    k += 1 + n_layers
    n_vals = int(lines[k].split()[1])
    values = np.array([float(t) for t in lines[k + 1 : k + 1 + n_vals]])
    if values.size != n_vals:
        raise ValueError(f"{path}: truncated checkpoint ({values.size} of {n_vals} values)")
    return ParameterSet(values, shapes), spec
