"""Training loop, optimizer step and history."""

from .history import COLUMNS, IterationRecord, TrainHistory, read_history
from .trainer import (
    Objective,
    OptimizerState,
    Schedule,
    TrainConfig,
    WeightUpdate,
    step,
    train,
)

__all__ = [
    "COLUMNS",
    "IterationRecord",
    "Objective",
    "OptimizerState",
    "Schedule",
    "TrainConfig",
    "TrainHistory",
    "WeightUpdate",
    "read_history",
    "step",
    "train",
]
