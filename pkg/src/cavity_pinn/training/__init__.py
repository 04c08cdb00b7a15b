"""Loss assembly, ADAM, single-stage training and multi-stage strategies."""
from cavity_pinn.training.adam import AdamState, adam_step
from cavity_pinn.training.evaluation import VARIABLES, evaluate_test_mse
from cavity_pinn.training.losses import (
    LossBreakdown,
    LossError,
    LossGraph,
    PhysicsMode,
    build_loss,
    residual_mean,
    mse_data,
    mse_pde,
    total_loss,
)
from cavity_pinn.training.strategies import (
    STRATEGY_NAMES,
    ConfigurationError,
    StageSpec,
    StrategyRun,
    StrategySpec,
    TransferContext,
    run_strategy,
    make_strategy,
)
from cavity_pinn.training.trainer import (
    DivergenceError,
    StageConfig,
    StopRule,
    TrainResult,
    first_epoch_below,
    read_log,
    save_result,
    train,
    write_log,
)
