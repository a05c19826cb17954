"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from ..errors import ConfigurationError, NumericalError
from .tensor import Tensor, backward, branch_mode, no_grad


def finite_diff_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-6,
    max_coords: int | None = None,
    seed: int = 0,
    floor: float = 1e-6,
    freeze_kinks: bool = True,
) -> float:
    """Max relative error between backprop and central differences.

    The objective is the sum of the entries of ``f()``. A non-scalar ``f``
    lets the central quotient difference the entries before summing them
    (with exact summation), so the rounding of a large total does not drown
    small gradient components.

    ``f`` is re-evaluated with each probed coordinate shifted by ``±eps``.
    Relative error per coordinate is ``|a - n| / max(|a|, |n|, floor)``, so
    gradients below ``floor`` are compared in absolute terms.
    ``max_coords`` probes a seeded random subset of each tensor's coordinates.

    A kink of a piecewise-linear op (leaky ReLU, abs, clamp) falling inside
    ``[x - eps, x + eps]`` would mix two linear pieces into the quotient. With
    ``freeze_kinks`` every perturbed evaluation holds each piecewise op on the
    branch it took at the base point, i.e. stays on the smooth piece whose
    derivative backprop computes.
    """
    if not 1e-6 <= eps <= 1e-3:
        raise ConfigurationError(f"eps must lie in [1e-6, 1e-3], got {eps}")
    for p in params:
        if p.dtype != np.float64:
            raise ConfigurationError("finite-difference checks need 64-bit tensors")
        p.grad = None

    branches: list[np.ndarray] = []
    with branch_mode("record", branches):
        out = f()
    if not np.isfinite(out.data).all():
        raise NumericalError("objective is not finite at the base point")
    backward(out if out.size == 1 else out.sum())
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        if max_coords is None or flat.size <= max_coords:
            coords = np.arange(flat.size)
        else:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for i in coords:
            ana = a.reshape(-1)[i]
            num = _central(f, flat, i, eps, branches if freeze_kinks else None)
            err = abs(ana - num) / max(abs(ana), abs(num), floor)
            worst = max(worst, err)
    return float(worst)


def _central(f, flat: np.ndarray, i: int, h: float, branches=None) -> float:
    orig = flat[i]
    flat[i] = orig + h
    fp = _values(f, branches)
    flat[i] = orig - h
    fm = _values(f, branches)
    flat[i] = orig
    return math.fsum(fp - fm) / (2.0 * h)


def _values(f, branches=None) -> np.ndarray:
    with no_grad():
        if branches is None:
            v = np.array(f().data, dtype=np.float64).reshape(-1)
        else:
            with branch_mode("replay", branches):
                v = np.array(f().data, dtype=np.float64).reshape(-1)
    if not np.isfinite(v).all():
        raise NumericalError("objective became non-finite during a perturbation")
    return v
