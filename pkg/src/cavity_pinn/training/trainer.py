"""Full-batch ADAM training of one stage, with loss-threshold / epoch-cap stopping."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from cavity_pinn.dataset import CollocationSet, Dataset
from cavity_pinn.network import NetworkSpec, ParameterSet, save_checkpoint
from cavity_pinn.training.adam import AdamState, adam_step
from cavity_pinn.training.losses import PhysicsMode, build_loss

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "total", "mse_data", "mse_pde", "mse_bc")


class DivergenceError(RuntimeError):
    """Loss became non-finite; ``checkpoint`` holds the last parameters with a finite loss."""

    def __init__(self, message: str, checkpoint: ParameterSet, epoch: int, log_rows):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.epoch = epoch
        self.log = list(log_rows)


@dataclass(frozen=True)
class StopRule:
    max_epochs: int = 50_000
    loss_threshold: Optional[float] = None

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")


@dataclass
class StageConfig:
    spec: NetworkSpec
    init: ParameterSet
    data: Optional[Dataset]
    colloc: Optional[CollocationSet]
    lam: float
    stop: StopRule
    mode: PhysicsMode = PhysicsMode.FULL
    lr: float = 1e-3
    track_physics: bool = False


@dataclass
class TrainResult:
    params: ParameterSet
    log: list = field(repr=False)
    stop_reason: str = ""
    epochs: int = 0
    steps: int = 0

    @property
    def final_loss(self) -> float:
        return self.log[-1][1]


def train(stage: StageConfig) -> TrainResult:
    """Run ADAM until the stop rule fires.

    Epoch ``e`` (1-based) evaluates the loss at the parameters left by the
    previous ``e - 1`` steps and logs it.  If the loss is at or below the
    threshold the stage stops there without stepping, so the returned
    parameters are the ones whose loss met the threshold; otherwise one ADAM
    step is taken.
    """
    params = stage.init.copy()
    state = AdamState.zeros(params.values.size, lr=stage.lr)
    rows = []
    reason = "max_epochs"
    threshold = stage.stop.loss_threshold
    epoch = 0
    for epoch in range(1, stage.stop.max_epochs + 1):
        graph = build_loss(params, stage.spec, stage.data, stage.colloc, stage.lam, stage.mode, stage.track_physics)
        b = graph.breakdown()
        if not math.isfinite(b.total):
            raise DivergenceError(f"non-finite loss at epoch {epoch}", params, epoch, rows)
        rows.append((epoch, b.total, b.mse_data, b.mse_pde, b.mse_bc))
        if threshold is not None and b.total <= threshold:
            reason = "threshold"
            break
        grad = graph.gradient()
        new_values = adam_step(state, params.values, grad)
        if not np.all(np.isfinite(new_values)):
            raise DivergenceError(f"non-finite parameters after epoch {epoch}", params, epoch, rows)
        params = ParameterSet(new_values, params.shapes)
        if epoch % 1000 == 0:
            log.debug("epoch %d: total %.4e", epoch, b.total)
    return TrainResult(params, rows, reason, epoch, state.t)


def write_log(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for row in rows:
            w.writerow([row[0]] + ["" if v is None else format(v, ".17g") for v in row[1:]])


def read_log(path) -> list:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != LOG_COLUMNS:
            raise ValueError(f"{path}: unexpected log header {header}")
        for rec in reader:
            rows.append((int(rec[0]),) + tuple(None if v == "" else float(v) for v in rec[1:]))
    return rows


def first_epoch_below(rows, threshold: float) -> Optional[int]:
    for row in rows:
        if row[1] <= threshold:
            return row[0]
    return None


def save_result(directory, name: str, result: TrainResult, spec: NetworkSpec) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_checkpoint(d / f"{name}.ckpt", result.params, spec)
    write_log(d / f"{name}_log.csv", result.log)
