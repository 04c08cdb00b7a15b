"""Multi-stage training strategies for transfer to an unseen Reynolds number.

=====  =========================================  ==========================================
name   step 1                                     step 2
=====  =========================================  ==========================================
A1     data at the base Re (lambda = 0)           -
A2     as A1                                      physics only at the new Re, from A1
B1     data + physics at the base Re              -
B2     as B1                                      physics only at the new Re, from B1
B3     as B1                                      physics at new + base Re, data at base Re
C1     -                                          physics only at the new Re, from random
=====  =========================================  ==========================================
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, MutableMapping, Optional, Sequence

from cavity_pinn.cavity_solver import FlowField
from cavity_pinn.dataset import make_collocation_set, make_training_set
from cavity_pinn.network import NetworkSpec, ParameterSet, init_xavier
from cavity_pinn.physics import LidProfile
from cavity_pinn.training.losses import PhysicsMode
from cavity_pinn.training.trainer import StageConfig, StopRule, TrainResult, train

STRATEGY_NAMES = ("A1", "A2", "B1", "B2", "B3", "C1")


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class StageSpec:
    step: int
    init: str  # "random" or "previous"
    data_re: tuple[float, ...]
    physics_re: tuple[float, ...]
    lam: float
    stop: StopRule

    def key(self) -> tuple:
        return (self.init, self.data_re, self.physics_re, self.lam, self.stop)


@dataclass(frozen=True)
class StrategySpec:
    name: str
    stages: tuple[StageSpec, ...]


def make_strategy(
    name: str,
    new_re: float,
    base_re: Sequence[float] = (50.0, 100.0),
    stop: StopRule = StopRule(),
    transfer_stop: Optional[StopRule] = None,
    lam: float = 1.0,
) -> StrategySpec:
    if name not in STRATEGY_NAMES:
        raise ConfigurationError(f"unknown strategy {name!r}; expected one of {', '.join(STRATEGY_NAMES)}")
    base = tuple(float(r) for r in base_re)
    new = (float(new_re),)
    transfer_stop = transfer_stop or stop
    data_only = StageSpec(1, "random", base, (), 0.0, stop)
    data_phys = StageSpec(1, "random", base, base, lam, stop)
    table = {
        "A1": (data_only,),
        "A2": (data_only, StageSpec(2, "previous", (), new, lam, transfer_stop)),
        "B1": (data_phys,),
        "B2": (data_phys, StageSpec(2, "previous", (), new, lam, transfer_stop)),
        "B3": (data_phys, StageSpec(2, "previous", base, new + base, lam, transfer_stop)),
        "C1": (StageSpec(2, "random", (), new, lam, transfer_stop),),
    }
    return StrategySpec(name, table[name])


@dataclass
class TransferContext:
    """Everything a strategy needs besides its own spec.

    ``fields`` maps Re to a solved field for every Re that carries data.
    """

    fields: Mapping[float, FlowField]
    spec: NetworkSpec
    train_grid: int = 32
    interior_m: int = 32
    boundary_m: int = 128
    lid: LidProfile = LidProfile.REGULARIZED
    lr: float = 1e-3
    mode: PhysicsMode = PhysicsMode.FULL
    track_physics: bool = False


@dataclass
class StageRun:
    stage: StageSpec
    init: ParameterSet
    result: TrainResult


@dataclass
class StrategyRun:
    strategy: StrategySpec
    stages: list[StageRun] = field(default_factory=list)

    @property
    def final(self) -> StageRun:
        return self.stages[-1]


def stage_config(stage: StageSpec, ctx: TransferContext, init: ParameterSet) -> StageConfig:
    data = None
    if stage.data_re:
        missing = [r for r in stage.data_re if r not in ctx.fields]
        if missing:
            raise ConfigurationError(f"no solved field for data at Re = {missing}")
        data = make_training_set([(r, ctx.fields[r]) for r in stage.data_re], ctx.train_grid)
    colloc = None
    if stage.physics_re:
        colloc = make_collocation_set(stage.physics_re, ctx.interior_m, ctx.boundary_m, ctx.lid)
    return StageConfig(
        spec=ctx.spec,
        init=init,
        data=data,
        colloc=colloc,
        lam=stage.lam,
        stop=stage.stop,
        mode=ctx.mode,
        lr=ctx.lr,
        track_physics=ctx.track_physics,
    )


def run_strategy(
    strategy: StrategySpec,
    ctx: TransferContext,
    seed: int,
    cache: Optional[MutableMapping] = None,
) -> StrategyRun:
    """Execute the stages in order.

    ``cache`` lets strategies that share a first stage (A1/A2, B1/B2/B3) train
    it once per seed; the warm start then begins from exactly that checkpoint.
    """
    if not ctx.spec.uses_re and len({*strategy.stages[0].data_re, *strategy.stages[-1].physics_re}) > 1:
        raise ConfigurationError("multi-Re strategies need a network with an Re input")
    run = StrategyRun(strategy)
    prev: Optional[ParameterSet] = None
    history: tuple = ()
    for stage in strategy.stages:
        if stage.init == "random":
            init = init_xavier(ctx.spec, seed)
            history = ()
        elif stage.init == "previous":
            if prev is None:
                raise ConfigurationError(f"{strategy.name}: step {stage.step} warm-starts from a missing checkpoint")
            init = prev
        else:
            raise ConfigurationError(f"unknown stage init {stage.init!r}")
        history = history + (stage.key(),)
        key = (seed, history)
        if cache is not None and key in cache:
            result = cache[key]
        else:
            result = train(stage_config(stage, ctx, init))
            if cache is not None:
                cache[key] = result
        run.stages.append(StageRun(stage, init, result))
        prev = result.params
    return run
