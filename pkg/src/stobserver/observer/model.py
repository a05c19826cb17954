"""The observer network and its multi-step rollout."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, DimensionError, GroupingError, NumericalError
from ..tensor_core import (
    Module,
    Parameter,
    Tensor,
    clamp,
    hadamard,
    initialize,
    no_grad,
    sigmoid,
    stack,
)
from .config import ObserverConfig
from .grouping import degroup, group
from .layers import Conv, ConvBlock, DeconvBlock, InceptionBlock, inception_stack


class SpatialEncoder(Module):
    """``n_s`` strided conv blocks; records every block's output size."""

    def __init__(self, cfg: ObserverConfig, rng, dtype):
        self.in_channels = cfg.group_channels
        self.hw = [(cfg.height, cfg.width)]
        self.blocks = []
        cin = self.in_channels
        for s in cfg.stride_plan:
            h, w = self.hw[-1]
            self.hw.append(((h + 2 - 3) // s + 1, (w + 2 - 3) // s + 1))
            self.blocks.append(ConvBlock(cin, cfg.c_s, s, cfg.slope, cfg.norm_groups, rng, dtype))
            cin = cfg.c_s

    @property
    def latent_hw(self) -> tuple[int, int]:
        return self.hw[-1]

    def __call__(self, y: Tensor) -> tuple[Tensor, list[Tensor]]:
        if y.ndim != 4 or y.shape[1] != self.in_channels or tuple(y.shape[2:]) != self.hw[0]:
            raise DimensionError(
                f"encoder expects (N, {self.in_channels}, {self.hw[0][0]}, {self.hw[0][1]}), got {y.shape}"
            )
        feats = []
        h = y
        for block in self.blocks:
            h = block(h)
            feats.append(h)
        return h, feats


class SpatialDecoder(Module):
    """Transposed-conv blocks mirroring the encoder, then a 1x1 readout conv."""

    def __init__(self, cfg: ObserverConfig, encoder: SpatialEncoder, rng, dtype):
        self.skips = cfg.skips
        self.c_s = cfg.c_s
        self.hw = list(encoder.hw)
        plan = cfg.stride_plan
        self.blocks = []
        for j in range(cfg.n_s):
            i = cfg.n_s - j  # mirrors encoder block i (1-based)
            self.blocks.append(
                DeconvBlock(cfg.c_s, cfg.c_s, plan[i - 1], self.hw[i - 1], self.hw[i], cfg.slope, cfg.norm_groups,
                            rng, dtype)
            )
            if min(self.blocks[-1].output_padding) < 0 or max(self.blocks[-1].output_padding) >= plan[i - 1]:
                raise ConfigurationError(f"decoder block {j}: cannot restore size {self.hw[i - 1]}")
        self.readout = Conv(cfg.c_s, cfg.group_channels, 1, rng, dtype)

    def __call__(self, x: Tensor, enc_feats: list[Tensor] | None = None) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.c_s or tuple(x.shape[2:]) != self.hw[-1]:
            raise DimensionError(f"decoder expects (N, {self.c_s}, {self.hw[-1][0]}, {self.hw[-1][1]}), got {x.shape}")
        n_s = len(self.blocks)
        h = x
        for j, block in enumerate(self.blocks, start=1):
            h = block(h)
            if tuple(h.shape[2:]) != self.hw[n_s - j]:
                raise ConfigurationError(f"decoder block {j} produced {h.shape[2:]}, expected {self.hw[n_s - j]}")
            if self.skips and enc_feats is not None and j < n_s:
                h = h + enc_feats[n_s - j - 1]
        return self.readout(h)


@dataclass
class Rollout:
    """Outputs of one multi-step forecast.

    ``frames`` is ``(N, tau, C, H, W)``; the latent lists hold one entry per
    predicted group, ``drivers`` the latent ``x`` fed to each observer step.
    """

    frames: Tensor
    x_hat: list[Tensor] = field(default_factory=list)
    z_hat: list[Tensor] = field(default_factory=list)
    xi_hat: list[Tensor] = field(default_factory=list)
    drivers: list[Tensor] = field(default_factory=list)


class ObserverModel(Module):
    """Encoder, state estimation, dynamic transform, linear forecast, inverses, decoder."""

    def __init__(self, config: ObserverConfig, seed: int = 0):
        self.config = config
        cfg = config
        rng = np.random.default_rng(seed)
        dt = cfg.np_dtype
        act, slope, groups = cfg.inception_act, cfg.slope, cfg.norm_groups
        self.encoder = SpatialEncoder(cfg, rng, dt)
        self.h_inv = inception_stack(cfg.c_s, cfg.c_h, cfg.c_h, cfg.n_h, rng, dt, act, slope, groups)
        self.t_fwd = inception_stack(cfg.c_h, cfg.c_t, cfg.c_t, cfg.n_t, rng, dt, act, slope, groups)
        lh, lw = self.encoder.latent_hw
        self.a_raw = Parameter(initialize((cfg.c_t, lh, lw), cfg.a_init, rng, dt), init=cfg.a_init)
        if cfg.b_variant == "none":
            self.b_proj = None
        elif cfg.b_variant == "inception":
            self.b_proj = InceptionBlock(cfg.c_s, cfg.c_t, rng, dt, act=False)
        else:
            self.b_proj = Conv(cfg.c_s, cfg.c_t, 1 if cfg.b_variant == "conv1x1" else 3, rng, dt)
        self.t_inv = inception_stack(cfg.c_t, cfg.c_t, cfg.c_h, cfg.n_t, rng, dt, act, slope, groups)
        self.h_fwd = inception_stack(cfg.c_h, cfg.c_h, cfg.c_s, cfg.n_h, rng, dt, act, slope, groups)
        self.decoder = SpatialDecoder(cfg, self.encoder, rng, dt)

    # -- the five observer steps and the spatial maps ------------------------
    def spatial_encode(self, y: Tensor) -> tuple[Tensor, list[Tensor]]:
        return self.encoder(y)

    def state_estimate(self, x: Tensor) -> Tensor:
        for block in self.h_inv:
            x = block(x)
        return x

    def dynamic_transform(self, z: Tensor) -> Tensor:
        for block in self.t_fwd:
            z = block(z)
        return z

    def coefficient(self) -> Tensor:
        """Effective elementwise transition coefficient ``A``."""
        cfg = self.config
        if cfg.a_constraint == "sigmoid":
            return sigmoid(self.a_raw)
        if cfg.a_constraint == "clamp":
            return clamp(self.a_raw, *cfg.clamp_range)
        return self.a_raw

    def project_input(self, x: Tensor) -> Tensor | None:
        return None if self.b_proj is None else self.b_proj(x)

    def forecast_step(self, xi_prev: Tensor, x_prev: Tensor) -> Tensor:
        """``A ∘ xi_prev + B(x_prev)`` with ``A`` broadcast over the batch."""
        if tuple(xi_prev.shape[1:]) != self.a_raw.shape:
            raise DimensionError(f"latent state shape {xi_prev.shape} does not match A {self.a_raw.shape}")
        out = hadamard(xi_prev, self.coefficient())
        b = self.project_input(x_prev)
        return out if b is None else out + b

    def dynamic_invert(self, xi_hat: Tensor, z_skip: Tensor | None = None) -> Tensor:
        z = xi_hat
        for block in self.t_inv:
            z = block(z)
        if self.config.skips and z_skip is not None:
            z = z + z_skip
        return z

    def latent_output(self, z_hat: Tensor, x_skip: Tensor | None = None) -> Tensor:
        x = z_hat
        for block in self.h_fwd:
            x = block(x)
        if self.config.skips and x_skip is not None:
            x = x + x_skip
        return x

    def spatial_decode(self, x_hat: Tensor, enc_feats: list[Tensor] | None = None) -> Tensor:
        return self.decoder(x_hat, enc_feats)

    # -- rollouts ------------------------------------------------------------
    def _as_sequence(self, y) -> tuple[Tensor, bool]:
        y = y if isinstance(y, Tensor) else Tensor(np.asarray(y, dtype=self.config.np_dtype))
        if y.ndim == 4:
            return y.reshape((1,) + y.shape), True
        if y.ndim != 5:
            raise DimensionError(f"sequence must be (N,T,C,H,W) or (T,C,H,W), got {y.shape}")
        return y, False

    def forecast_sequence(self, y_in, horizon: int | None = None, xi_handoff: str | None = None) -> Rollout:
        """Forecast ``horizon`` frames after ``y_in`` with the grouped hybrid strategy.

        Input groups drive the observer one after another; once they run out,
        each predicted group is re-encoded and drives the next step. With the
        ``chain`` hand-off the previous step's predicted linear state seeds the
        next step; ``recompute`` re-derives it from the driving latent.
        """
        cfg = self.config
        horizon = cfg.t_out if horizon is None else horizon
        handoff = xi_handoff or cfg.xi_handoff
        d = cfg.delta
        if horizon < d or horizon % d:
            raise GroupingError(f"horizon {horizon} must be a positive multiple of delta={d}")
        y, squeeze = self._as_sequence(y_in)
        groups = group(y, d)
        n_in, n_out = groups.shape[1], horizon // d

        out = Rollout(frames=None)  # type: ignore[arg-type]
        predicted: list[Tensor] = []
        xi = None
        for k in range(n_in + n_out - 1):
            driving = groups[:, k] if k < n_in else predicted[-1]
            x, feats = self.spatial_encode(driving)
            needs_z = xi is None or handoff == "recompute" or k >= n_in - 1
            z = self.state_estimate(x) if needs_z else None
            if xi is None or handoff == "recompute":
                xi = self.dynamic_transform(z)
            xi_hat = self.forecast_step(xi, x)
            xi = xi_hat
            if k < n_in - 1:
                continue  # warm-up: the next input group is observed
            z_hat = self.dynamic_invert(xi_hat, z)
            x_hat = self.latent_output(z_hat, x)
            y_hat = self.spatial_decode(x_hat, feats)
            if not np.isfinite(y_hat.data).all():
                raise NumericalError(f"non-finite activations at observer step {k + 1}")
            predicted.append(y_hat)
            out.drivers.append(x)
            out.xi_hat.append(xi_hat)
            out.z_hat.append(z_hat)
            out.x_hat.append(x_hat)
        frames = degroup(stack(predicted, axis=1), d)
        out.frames = frames.reshape(frames.shape[1:]) if squeeze else frames
        return out

    def predict(self, y_in, horizon: int | None = None) -> np.ndarray:
        with no_grad():
            return self.forecast_sequence(y_in, horizon).frames.data

    def target_latents(self, y_future) -> tuple[list[Tensor], list[Tensor], list[Tensor]]:
        """Encode ground-truth future groups to detached ``x``, ``z``, ``xi`` targets."""
        y, _ = self._as_sequence(y_future)
        groups = group(y, self.config.delta)
        xs, zs, xis = [], [], []
        with no_grad():
            for k in range(groups.shape[1]):
                x, _ = self.spatial_encode(groups[:, k])
                z = self.state_estimate(x)
                xs.append(x)
                zs.append(z)
                xis.append(self.dynamic_transform(z))
        return xs, zs, xis
