"""Verification suites shared by the CLI and the test-suite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .learning import LossWeights, compute_losses, loss_contributions
from .observer import ObserverConfig, ObserverModel, decay_envelope, latent_error_decay
from .tensor_core import (
    Parameter,
    Tensor,
    backward,
    center_pad_kernel,
    clamp,
    concat,
    conv2d,
    conv_transpose2d,
    finite_diff_check,
    group_norm,
    hadamard,
    leaky_relu,
    sigmoid,
    square,
    stack,
    tabs,
)

# central-difference step: large enough that float64 rounding in the
# objective stays well below the tolerance, small enough for curvature
FD_EPS = 1e-5

MICRO_CONFIG = ObserverConfig(
    channels=1, height=16, width=16, t_in=4, t_out=4, delta=2, n_s=2, c_s=8, n_h=1, c_h=16, n_t=1, c_t=16,
    dtype="float64",
)


def _p(rng, *shape, scale=1.0, shift=0.0) -> Parameter:
    return Parameter(rng.standard_normal(shape) * scale + shift)


def _away_from_zero(rng, *shape) -> Parameter:
    # keeps probes of kinked functions (abs, leaky relu) off the kink
    v = rng.uniform(0.1, 1.0, shape) * rng.choice([-1.0, 1.0], shape)
    return Parameter(v)


def op_gradchecks(seed: int = 0) -> dict[str, float]:
    """Max relative finite-difference error for every differentiable operator."""
    rng = np.random.default_rng(seed)
    out = {}

    x, w, b = _p(rng, 2, 3, 7, 6), _p(rng, 4, 3, 3, 3), _p(rng, 4)
    g = rng.standard_normal((2, 4, 4, 3))
    out["conv2d"] = finite_diff_check(lambda: (conv2d(x, w, b, 2, 1) * g).sum(), [x, w, b], eps=FD_EPS)

    xt, wt, bt = _p(rng, 2, 3, 4, 3), _p(rng, 3, 2, 3, 3), _p(rng, 2)
    gt = rng.standard_normal((2, 2, 8, 6))
    out["conv_transpose2d"] = finite_diff_check(
        lambda: (conv_transpose2d(xt, wt, bt, 2, 1, 1) * gt).sum(), [xt, wt, bt], eps=FD_EPS)

    xn, gam, bet = _p(rng, 2, 4, 3, 3, scale=2.0, shift=1.0), _p(rng, 4), _p(rng, 4)
    gn = rng.standard_normal((2, 4, 3, 3))
    out["group_norm"] = finite_diff_check(lambda: (group_norm(xn, 2, gam, bet) * gn).sum(), [xn, gam, bet], eps=FD_EPS)

    xl = _away_from_zero(rng, 3, 5)
    gl = rng.standard_normal((3, 5))
    out["leaky_relu"] = finite_diff_check(lambda: (leaky_relu(xl, 0.2) * gl).sum(), [xl], eps=FD_EPS)
    out["abs"] = finite_diff_check(lambda: (tabs(xl) * gl).sum(), [xl], eps=FD_EPS)

    xs = _p(rng, 3, 5)
    out["sigmoid"] = finite_diff_check(lambda: (sigmoid(xs) * gl).sum(), [xs], eps=FD_EPS)
    out["square"] = finite_diff_check(lambda: (square(xs) * gl).sum(), [xs], eps=FD_EPS)

    xc = Parameter(rng.uniform(0.2, 0.8, (3, 5)))
    out["clamp"] = finite_diff_check(lambda: (clamp(xc, 0.1, 0.9) * gl).sum(), [xc], eps=FD_EPS)

    ha, hb = _p(rng, 2, 3, 4), _p(rng, 3, 4)
    gh = rng.standard_normal((2, 3, 4))
    out["hadamard"] = finite_diff_check(lambda: (hadamard(ha, hb) * gh).sum(), [ha, hb], eps=FD_EPS)

    k3 = _p(rng, 2, 2, 3, 3)
    gk = rng.standard_normal((2, 2, 7, 7))
    out["center_pad_kernel"] = finite_diff_check(lambda: (center_pad_kernel(k3, 7) * gk).sum(), [k3], eps=1e-4)

    u, v = _p(rng, 2, 3), _p(rng, 2, 3)
    gs = rng.standard_normal((2, 2, 3))
    out["concat_stack"] = finite_diff_check(
        lambda: (stack([u, v], axis=1) * gs).sum() + (concat([u, v], axis=0) * gs.reshape(4, 3)).sum(), [u, v], eps=FD_EPS)

    r = _p(rng, 2, 6)
    gr = rng.standard_normal((3, 4))
    out["reshape_getitem_mean"] = finite_diff_check(
        lambda: (r.reshape((3, 4)) * gr).sum() + r[:, 1:4].mean() * 3.0 + (r - r * 0.5).sum(), [r], eps=FD_EPS)
    return out


def _composed_problem(seed: int, config: ObserverConfig):
    """Model plus a closure giving the training loss on a fixed two-group rollout.

    ``loss(kind)`` returns the reported total (``"total"``) or its
    per-element contributions (``"terms"``).
    """
    rng = np.random.default_rng(seed)
    model = ObserverModel(config, seed=seed)
    cfg = model.config
    y = rng.random((2, cfg.t_in + cfg.t_out, cfg.channels, cfg.height, cfg.width))
    y_in, y_out = Tensor(y[:, : cfg.t_in]), Tensor(y[:, cfg.t_in:])
    weights = LossWeights(*rng.uniform(0.1, 1.0, 4))
    xs, zs, xis = model.target_latents(y_out.data)
    targets = {"x": xs, "z": zs, "xi": xis}

    def loss(kind: str = "terms"):
        roll = model.forecast_sequence(y_in, cfg.t_out)
        preds = {"x": roll.x_hat, "z": roll.z_hat, "xi": roll.xi_hat}
        if kind == "total":
            return compute_losses(roll.frames, y_out, preds, targets, weights).total
        return loss_contributions(roll.frames, y_out, preds, targets, weights)

    return model, loss


def composed_gradcheck(seed: int = 0, max_coords: int | None = 6, config: ObserverConfig = MICRO_CONFIG) -> float:
    """Finite-difference check of the full training loss through a two-group
    rollout (warm-up plus one re-encoded prediction), every latent term on.

    The loss is handed over as its per-element contributions so the check
    differences them before summing."""
    model, loss = _composed_problem(seed, config)
    return finite_diff_check(loss, model.parameters(), eps=FD_EPS, max_coords=max_coords, seed=seed)


def total_loss_gradient_gap(seed: int = 0, config: ObserverConfig = MICRO_CONFIG) -> float:
    """Max relative gap between backprop through the reported total loss and
    through the sum of its contributions (the objective the check differences)."""
    model, loss = _composed_problem(seed, config)
    grads = []
    for kind in ("total", "terms"):
        model.zero_grad()
        out = loss(kind)
        backward(out if kind == "total" else out.sum())
        grads.append([np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in model.parameters()])
    scale = max(max(np.abs(g).max() for g in grads[0]), 1e-300)
    return float(max(np.abs(a - b).max() for a, b in zip(*grads)) / scale)


@dataclass
class DecayResult:
    seed: int
    errors: np.ndarray
    envelope: np.ndarray

    @property
    def holds(self) -> bool:
        return bool(np.all(self.errors <= self.envelope))


def decay_trial(config: ObserverConfig, seed: int, steps: int = 50, handoff: str | None = None) -> DecayResult:
    """Two rollouts from perturbed initial states under one random driving sequence."""
    model = ObserverModel(config, seed=seed)
    rng = np.random.default_rng(10_000 + seed)
    lh, lw = model.encoder.latent_hw
    shape = (1, config.c_t, lh, lw)
    xi_a = rng.standard_normal(shape)
    xi_b = xi_a + rng.standard_normal(shape)
    drivers = [rng.standard_normal((1, config.c_s, lh, lw)) for _ in range(steps)]
    errors = latent_error_decay(model, xi_a, xi_b, drivers, steps, handoff or config.xi_handoff)
    return DecayResult(seed, errors, decay_envelope(model, errors[0], steps))


def decay_suite(config: ObserverConfig, n_models: int = 20, steps: int = 50,
                handoff: str | None = None) -> list[DecayResult]:
    return [decay_trial(config, seed, steps, handoff) for seed in range(n_models)]
