"""Losses, the Adam optimizer, the training loop and checkpoints."""

from .adam import Adam, OptimizerState, adam_step
from .checkpoint import (
    Checkpoint,
    capture,
    config_diff,
    load_checkpoint,
    read_checkpoint,
    restore,
    save_checkpoint,
    write_checkpoint,
)
from .losses import (
    LossBreakdown,
    LossWeights,
    compute_losses,
    frame_loss,
    frame_loss_terms,
    latent_loss,
    latent_loss_terms,
    loss_contributions,
)
from .trainer import EpochStats, TrainingLog, evaluate_loss, split_sequence, train_epoch

__all__ = [
    "Adam",
    "Checkpoint",
    "EpochStats",
    "LossBreakdown",
    "LossWeights",
    "OptimizerState",
    "TrainingLog",
    "adam_step",
    "capture",
    "compute_losses",
    "config_diff",
    "evaluate_loss",
    "frame_loss",
    "frame_loss_terms",
    "latent_loss",
    "latent_loss_terms",
    "load_checkpoint",
    "loss_contributions",
    "read_checkpoint",
    "restore",
    "save_checkpoint",
    "split_sequence",
    "train_epoch",
    "write_checkpoint",
]
