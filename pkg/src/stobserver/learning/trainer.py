"""Mini-batch training loop and the per-epoch CSV log."""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..errors import DimensionError
from ..observer import ObserverModel
from ..tensor_core import Tensor, backward, no_grad
from .adam import Adam
from .losses import LossWeights, compute_losses

LOG_COLUMNS = ("epoch", "L_y", "L_x", "L_z", "L_xi", "total", "seconds")


@dataclass
class EpochStats:
    epoch: int
    L_y: float
    L_x: float
    L_z: float
    L_xi: float
    total: float
    seconds: float
    skipped_steps: int = 0

    def row(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k in LOG_COLUMNS}


def split_sequence(batch: np.ndarray, t_in: int, t_out: int) -> tuple[np.ndarray, np.ndarray]:
    """Split ``(N, T, C, H, W)`` into observed and future frames."""
    if batch.ndim != 5:
        raise DimensionError(f"sequences must be (N, T, C, H, W), got {batch.shape}")
    if batch.shape[1] < t_in + t_out:
        raise DimensionError(f"sequence length {batch.shape[1]} is shorter than t_in + t_out = {t_in + t_out}")
    return batch[:, :t_in], batch[:, t_in:t_in + t_out]


def batch_losses(model: ObserverModel, batch: np.ndarray, weights: LossWeights):
    cfg = model.config
    y_in, y_out = split_sequence(np.asarray(batch, dtype=cfg.np_dtype), cfg.t_in, cfg.t_out)
    roll = model.forecast_sequence(Tensor(y_in), cfg.t_out)
    pred_lat = tgt_lat = None
    if weights.needs_latents:
        xs, zs, xis = model.target_latents(y_out)
        pred_lat = {"x": roll.x_hat, "z": roll.z_hat, "xi": roll.xi_hat}
        tgt_lat = {"x": xs, "z": zs, "xi": xis}
    return compute_losses(roll.frames, Tensor(y_out), pred_lat, tgt_lat, weights)


def train_epoch(model: ObserverModel, data: np.ndarray, weights: LossWeights, optimizer: Adam,
                batch_size: int, rng: np.random.Generator, epoch: int = 0) -> EpochStats:
    """One pass over ``data`` in a seeded random order.

    Reported losses are sample-weighted means over the batches of the epoch.
    """
    t0 = time.perf_counter()
    order = rng.permutation(len(data))
    sums = dict.fromkeys(("L_y", "L_x", "L_z", "L_xi", "total"), 0.0)
    skipped = 0
    for start in range(0, len(order), batch_size):
        idx = np.sort(order[start:start + batch_size])
        optimizer.zero_grad()
        losses = batch_losses(model, data[idx], weights)
        backward(losses.total)
        if not optimizer.step():
            skipped += 1
        for k, v in losses.as_floats().items():
            sums[k] += v * len(idx)
    n = len(order)
    return EpochStats(epoch=epoch, seconds=time.perf_counter() - t0, skipped_steps=skipped,
                      **{k: v / n for k, v in sums.items()})


def evaluate_loss(model: ObserverModel, data: np.ndarray, weights: LossWeights, batch_size: int) -> dict[str, float]:
    sums = dict.fromkeys(("L_y", "L_x", "L_z", "L_xi", "total"), 0.0)
    with no_grad():
        for start in range(0, len(data), batch_size):
            chunk = data[start:start + batch_size]
            for k, v in batch_losses(model, chunk, weights).as_floats().items():
                sums[k] += v * len(chunk)
    return {k: v / len(data) for k, v in sums.items()}


class TrainingLog:
    """Appends one CSV row per epoch."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        if not self.path.exists() or self.path.stat().st_size == 0:
            with self.path.open("w", newline="") as fh:
                csv.writer(fh).writerow(LOG_COLUMNS)

    def append(self, stats: EpochStats) -> None:
        with self.path.open("a", newline="") as fh:
            csv.DictWriter(fh, LOG_COLUMNS).writerow(stats.row())

    def read(self) -> list[dict[str, float]]:
        with self.path.open(newline="") as fh:
            return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]
