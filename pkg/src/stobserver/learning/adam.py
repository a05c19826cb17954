"""Adam with bias-corrected moments and a skip policy for non-finite gradients."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from ..errors import NumericalError
from ..tensor_core import Parameter

log = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    consecutive_skips: int = 0

    def hyper(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
                "step": self.step, "consecutive_skips": self.consecutive_skips}


def adam_step(params: dict[str, Parameter], grads: dict[str, np.ndarray | None], state: OptimizerState,
              max_skips: int = 10) -> bool:
    """Apply one update in place. Returns ``False`` when the step was skipped.

    Parameters without a gradient keep their value and moments. A step whose
    gradients contain NaN/inf is skipped; ``max_skips`` consecutive skips raise.
    """
    if any(g is not None and not np.isfinite(g).all() for g in grads.values()):
        state.consecutive_skips += 1
        log.warning("non-finite gradient, skipping step %d (%d in a row)", state.step + 1, state.consecutive_skips)
        if state.consecutive_skips >= max_skips:
            raise NumericalError(f"{state.consecutive_skips} consecutive non-finite gradients")
        return False
    state.consecutive_skips = 0
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)
    return True


class Adam:
    def __init__(self, named_params: Iterable[tuple[str, Parameter]], lr: float = 0.01, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, max_skips: int = 10):
        self.params = dict(named_params)
        self.state = OptimizerState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        self.max_skips = max_skips

    def step(self) -> bool:
        grads = {name: p.grad for name, p in self.params.items()}
        return adam_step(self.params, grads, self.state, self.max_skips)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
