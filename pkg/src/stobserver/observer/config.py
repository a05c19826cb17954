"""Observer hyperparameters."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError

B_VARIANTS = ("none", "conv1x1", "conv3x3", "inception")
A_CONSTRAINTS = ("sigmoid", "clamp", "none")
A_INITS = ("normal", "uniform", "kaiming-uniform")
XI_HANDOFFS = ("chain", "recompute")
DTYPES = ("float32", "float64")


@dataclass(frozen=True)
class ObserverConfig:
    """Geometry, depth/width and ablation switches of one observer network.

    ``n_s``/``c_s`` size the spatial encoder and decoder, ``n_h``/``c_h`` the
    state-estimation and latent-output Inception stacks, ``n_t``/``c_t`` the
    dynamic transformation and its inverse. ``delta`` frames are folded into
    channels per observer step.
    """

    channels: int = 1
    height: int = 64
    width: int = 64
    t_in: int = 10
    t_out: int = 10
    delta: int = 10
    n_s: int = 4
    c_s: int = 64
    n_h: int = 2
    c_h: int = 512
    n_t: int = 2
    c_t: int = 512
    b_variant: str = "inception"
    a_constraint: str = "sigmoid"
    a_init: str = "kaiming-uniform"
    clamp_range: tuple[float, float] = (0.01, 0.99)
    skips: bool = True
    slope: float = 0.2
    inception_act: bool = True
    xi_handoff: str = "chain"
    norm_groups: int | None = None
    dtype: str = "float32"
    # encoder stride plan; empty means alternate 2, 1, 2, 1, ... starting with 2
    strides: tuple[int, ...] = field(default=())

    def __post_init__(self):
        ints = dict(
            channels=self.channels, height=self.height, width=self.width, t_in=self.t_in, t_out=self.t_out,
            delta=self.delta, n_s=self.n_s, c_s=self.c_s, n_h=self.n_h, c_h=self.c_h, n_t=self.n_t, c_t=self.c_t,
        )
        for name, v in ints.items():
            if int(v) != v or v < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {v!r}")
        if self.t_in % self.delta or self.t_out % self.delta:
            raise ConfigurationError(
                f"t_in={self.t_in} and t_out={self.t_out} must both be divisible by delta={self.delta}"
            )
        for name, value, allowed in (
            ("b_variant", self.b_variant, B_VARIANTS),
            ("a_constraint", self.a_constraint, A_CONSTRAINTS),
            ("a_init", self.a_init, A_INITS),
            ("xi_handoff", self.xi_handoff, XI_HANDOFFS),
            ("dtype", self.dtype, DTYPES),
        ):
            if value not in allowed:
                raise ConfigurationError(f"{name}={value!r}; expected one of {allowed}")
        lo, hi = self.clamp_range
        if not 0.0 < lo <= hi < 1.0:
            raise ConfigurationError(f"clamp_range {self.clamp_range} must lie inside (0, 1)")
        if not 0.0 <= self.slope < 1.0:
            raise ConfigurationError(f"slope must be in [0, 1), got {self.slope}")
        if self.strides and (len(self.strides) != self.n_s or min(self.strides) < 1):
            raise ConfigurationError(f"strides {self.strides} must list n_s={self.n_s} positive ints")
        object.__setattr__(self, "clamp_range", tuple(float(v) for v in self.clamp_range))
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    @property
    def stride_plan(self) -> tuple[int, ...]:
        if self.strides:
            return self.strides
        return tuple(2 if i % 2 == 0 else 1 for i in range(self.n_s))

    @property
    def group_channels(self) -> int:
        return self.channels * self.delta

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["clamp_range"] = list(self.clamp_range)
        d["strides"] = list(self.strides)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ObserverConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigurationError(f"unknown observer config keys: {unknown}")
        d = dict(d)
        if "clamp_range" in d:
            d["clamp_range"] = tuple(d["clamp_range"])
        if "strides" in d:
            d["strides"] = tuple(d["strides"])
        return cls(**d)

    def replace(self, **changes) -> ObserverConfig:
        return dataclasses.replace(self, **changes)


def default_norm_groups(channels: int, requested: int | None = None) -> int:
    g = requested if requested is not None else min(8, channels)
    return g if channels % g == 0 else 1
