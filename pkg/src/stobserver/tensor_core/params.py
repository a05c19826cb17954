"""Trainable parameters, seeded initializers and a minimal module container."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from ..errors import ConfigurationError
from .tensor import Tensor

INITS = ("normal", "uniform", "kaiming-uniform", "zeros", "ones")


def _fan_in(shape: tuple[int, ...]) -> int:
    if len(shape) < 2:
        return shape[0]
    return int(shape[1] * np.prod(shape[2:], dtype=np.int64))


def initialize(shape, init: str, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    """Draw an initial value; same ``rng`` state gives bit-identical output.

    ``kaiming-uniform`` uses bound ``sqrt(6 / fan_in)`` (gain of a ReLU),
    ``uniform`` is U(0, 1) and ``normal`` is N(0, 1).
    """
    shape = tuple(int(s) for s in shape)
    if init == "normal":
        v = rng.standard_normal(shape)
    elif init == "uniform":
        v = rng.random(shape)
    elif init == "kaiming-uniform":
        bound = math.sqrt(6.0 / _fan_in(shape))
        v = rng.uniform(-bound, bound, shape)
    elif init == "conv-default":
        # kaiming-uniform with negative slope sqrt(5): bound 1/sqrt(fan_in)
        bound = 1.0 / math.sqrt(_fan_in(shape))
        v = rng.uniform(-bound, bound, shape)
    elif init == "zeros":
        v = np.zeros(shape)
    elif init == "ones":
        v = np.ones(shape)
    else:
        raise ConfigurationError(f"unknown initializer {init!r}; expected one of {INITS}")
    return v.astype(dtype)


class Parameter(Tensor):
    """A leaf tensor that always requires grad and remembers how it was initialized."""

    __slots__ = ("init",)

    def __init__(self, data, init: str = "zeros"):
        super().__init__(data, requires_grad=True)
        self.init = init


class Module:
    """Attribute-walking container; parameter names are dotted attribute paths."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{name}.{i}", item

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise ConfigurationError(f"state mismatch: missing={missing[:5]} unexpected={extra[:5]}")
        for name, p in own.items():
            if state[name].shape != p.shape:
                raise ConfigurationError(f"{name}: shape {state[name].shape} != {p.shape}")
            p.data = state[name].astype(p.dtype, copy=True)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())
