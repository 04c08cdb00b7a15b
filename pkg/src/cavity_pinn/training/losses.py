"""Composite training loss: data misfit plus weighted residual and wall terms."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from cavity_pinn.autodiff import ArrayTape
from cavity_pinn.dataset import CollocationSet, Dataset
from cavity_pinn.network import (
    NetworkSpec,
    ParameterSet,
    forward_batch,
    layer_grads_to_flat,
    network_inputs,
    tape_layers,
)
from cavity_pinn.physics import RHO, continuity_residual, momentum_residual


class LossError(ValueError):
    pass


class PhysicsMode(enum.Enum):
    CONTINUITY = "continuity"
    FULL = "full"

    @classmethod
    def parse(cls, name) -> "PhysicsMode":
        if isinstance(name, PhysicsMode):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            raise LossError(f"unknown physics mode {name!r}; expected 'continuity' or 'full'") from None


@dataclass(frozen=True)
class LossBreakdown:
    mse_data: Optional[float]
    mse_pde: Optional[float]
    mse_bc: Optional[float]
    lam: float
    total: float


def total_loss(mse_data: Optional[float], mse_pde: Optional[float], mse_bc: Optional[float], lam: float) -> LossBreakdown:
    """total = mse_data + lam * (mse_pde + mse_bc); absent terms are None."""
    has_data = mse_data is not None
    has_phys = mse_pde is not None or mse_bc is not None
    if not has_data and not has_phys:
        raise LossError("loss needs a data term or a physics term")
    total = mse_data if has_data else 0.0
    if lam != 0 and has_phys:
        total = total + lam * ((mse_pde or 0.0) + (mse_bc or 0.0))
    return LossBreakdown(mse_data, mse_pde, mse_bc, lam, total)


@dataclass(frozen=True)
class _PointFluid:
    mu: np.ndarray
    rho: float = RHO


def _inputs(spec: NetworkSpec, xy_re: np.ndarray) -> np.ndarray:
    re = xy_re[:, 2] if spec.uses_re else None
    return network_inputs(spec, xy_re[:, 0], xy_re[:, 1], re)


def _sq_err_sum(tape, preds, targets) -> int:
    acc = None
    for node, target in zip(preds, targets):
        sq = tape.square(tape.sub(node, tape.const(target)))
        acc = sq if acc is None else tape.add(acc, sq)
    return acc


def data_term(tape: ArrayTape, layer_nodes, spec: NetworkSpec, ds: Dataset) -> int:
    """Mean over samples of the summed squared u, v, p errors."""
    if len(ds) == 0:
        raise LossError("data term needs a non-empty dataset")
    u, v, p = forward_batch(tape, layer_nodes, spec, _inputs(spec, ds.data[:, :3]))
    acc = _sq_err_sum(tape, (u.val, v.val, p.val), (ds.data[:, 3], ds.data[:, 4], ds.data[:, 5]))
    return tape.mean(acc)


def residual_mean(tape: ArrayTape, u, v, p, mu, mode: PhysicsMode) -> int:
    """Mean squared residual over points from (u, v, p) Taylor tuples on ``tape``.

    Any source of tuples works: network outputs or an analytic field lifted
    onto the tape.
    """
    acc = tape.square(continuity_residual(u, v))
    if PhysicsMode.parse(mode) is PhysicsMode.FULL:
        rx, ry = momentum_residual(u, v, p, _PointFluid(mu=mu))
        acc = tape.add(acc, tape.add(tape.square(rx), tape.square(ry)))
    return tape.mean(acc)


def physics_terms(tape: ArrayTape, layer_nodes, spec: NetworkSpec, colloc: CollocationSet, mode: PhysicsMode):
    """(mse_pde node, mse_bc node); either may be None when its point set is empty."""
    mode = PhysicsMode.parse(mode)
    if colloc.interior.shape[0] == 0:
        raise LossError("physics term needs interior collocation points")
    order = 2 if mode is PhysicsMode.FULL else 1
    u, v, p = forward_batch(tape, layer_nodes, spec, _inputs(spec, colloc.interior), order=order)
    mse_pde = residual_mean(tape, u, v, p, RHO / colloc.interior[:, 2], mode)
    mse_bc = None
    if colloc.boundary.shape[0]:
        ub, vb, _ = forward_batch(tape, layer_nodes, spec, _inputs(spec, colloc.boundary[:, :3]))
        acc = _sq_err_sum(tape, (ub.val, vb.val), (colloc.boundary[:, 3], colloc.boundary[:, 4]))
        mse_bc = tape.mean(acc)
    return mse_pde, mse_bc


@dataclass
class LossGraph:
    tape: ArrayTape
    layer_nodes: list
    data: Optional[int]
    pde: Optional[int]
    bc: Optional[int]
    total: int
    lam: float

    def breakdown(self) -> LossBreakdown:
        val = lambda n: None if n is None else float(self.tape.values[n])
        return LossBreakdown(val(self.data), val(self.pde), val(self.bc), self.lam, val(self.total))

    def gradient(self) -> np.ndarray:
        adj = self.tape.backward(self.total)
        return layer_grads_to_flat(self.tape, adj, self.layer_nodes)


def build_loss(
    params: ParameterSet,
    spec: NetworkSpec,
    data: Optional[Dataset],
    colloc: Optional[CollocationSet],
    lam: float,
    mode=PhysicsMode.FULL,
    track_physics: bool = False,
) -> LossGraph:
    """Record the full objective on a fresh tape.

    With ``lam == 0`` the physics terms only enter the graph when
    ``track_physics`` is set, and even then they are not connected to the total,
    so they cannot reach the gradient.
    """
    has_data = data is not None and len(data) > 0
    want_phys = colloc is not None and (lam != 0 or track_physics)
    if not has_data and not (colloc is not None and lam != 0):
        raise LossError("stage has neither data nor weighted physics")
    tape = ArrayTape()
    layer_nodes = tape_layers(tape, params)
    d = data_term(tape, layer_nodes, spec, data) if has_data else None
    pde = bc = None
    if want_phys:
        pde, bc = physics_terms(tape, layer_nodes, spec, colloc, mode)
    total = d
    if lam != 0 and pde is not None:
        phys = pde if bc is None else tape.add(pde, bc)
        weighted = tape.scale(phys, float(lam))
        total = weighted if total is None else tape.add(total, weighted)
    return LossGraph(tape, layer_nodes, d, pde, bc, total, float(lam))


def mse_data(ds: Dataset, params: ParameterSet, spec: NetworkSpec) -> float:
    tape = ArrayTape()
    return float(tape.values[data_term(tape, tape_layers(tape, params), spec, ds)])


def mse_pde(colloc: CollocationSet, params: ParameterSet, spec: NetworkSpec, mode=PhysicsMode.FULL):
    """(mse_pde, mse_bc) as plain floats."""
    tape = ArrayTape()
    pde, bc = physics_terms(tape, tape_layers(tape, params), spec, colloc, mode)
    return float(tape.values[pde]), (None if bc is None else float(tape.values[bc]))
