"""Latent error decay between two observer trajectories under identical inputs."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import ConfigurationError
from ..tensor_core import Tensor, no_grad
from .model import ObserverModel


def latent_error_decay(
    model: ObserverModel,
    xi_a0,
    xi_b0,
    drivers: Sequence | Tensor,
    steps: int,
    handoff: str = "chain",
) -> np.ndarray:
    """Return ``e_k = max|xi_a,k - xi_b,k|`` for ``k = 0..steps``.

    Both trajectories run ``forecast_step`` with the same driving latent at
    every step, so the input projection cancels. With the ``chain`` hand-off
    each step consumes the previous predicted state and the gap evolves as
    ``A^k ∘ (xi_a0 - xi_b0)``. With ``recompute`` every step after the first
    re-derives its state from the shared driving latent, as the rollout does,
    so the gap vanishes from step 2 on. ``drivers`` is one latent reused at
    every step or a sequence of at least ``steps`` latents.
    """
    if handoff not in ("chain", "recompute"):
        raise ConfigurationError(f"unknown hand-off {handoff!r}")
    dt = model.config.np_dtype
    xa = np.asarray(xi_a0.data if isinstance(xi_a0, Tensor) else xi_a0, dtype=dt)
    xb = np.asarray(xi_b0.data if isinstance(xi_b0, Tensor) else xi_b0, dtype=dt)
    n = xa.shape[0]
    if isinstance(drivers, (Tensor, np.ndarray)):
        drivers = [drivers] * steps
    # both trajectories ride in one batch; a single-sample driver broadcasts,
    # so B(x) is computed once and added to both
    pair = Tensor(np.concatenate([xa, xb]))
    errors = [float(np.abs(xa - xb).max())]
    with no_grad():
        for k in range(steps):
            x = drivers[k] if isinstance(drivers[k], Tensor) else Tensor(np.asarray(drivers[k], dtype=dt))
            if handoff == "recompute" and k > 0:
                xi = model.dynamic_transform(model.state_estimate(x)).data
                pair = Tensor(np.concatenate([xi, xi]))
            if x.shape[0] == 1:
                pair = model.forecast_step(pair, x)
            else:
                pair = Tensor(np.concatenate([model.forecast_step(pair[:n], x).data,
                                              model.forecast_step(pair[n:], x).data]))
            errors.append(float(np.abs(pair.data[:n] - pair.data[n:]).max()))
    return np.asarray(errors)


def decay_envelope(model: ObserverModel, e0: float, steps: int) -> np.ndarray:
    """Geometric bound ``(max A)^k * e0`` for ``k = 0..steps``."""
    with no_grad():
        a_max = float(model.coefficient().data.max())
    return e0 * a_max ** np.arange(steps + 1)
