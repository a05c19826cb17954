"""Folding ``delta`` consecutive frames into the channel axis and back.

Frame ``i*delta + j`` lands in group ``i``, channel block ``j``. In row-major
layout both directions are pure reshapes, so the round trip is bit-exact.
"""

from __future__ import annotations

from ..errors import GroupingError


def group(y, delta: int):
    """``(..., T, C, H, W)`` -> ``(..., T/delta, C*delta, H, W)``; numpy or Tensor."""
    if delta < 1:
        raise GroupingError(f"group size must be positive, got {delta}")
    *lead, t, c, h, w = y.shape
    if t % delta:
        raise GroupingError(f"sequence length T={t} is not divisible by group size delta={delta}")
    return y.reshape(tuple(lead) + (t // delta, c * delta, h, w))


def degroup(Y, delta: int):
    """Inverse of :func:`group`."""
    if delta < 1:
        raise GroupingError(f"group size must be positive, got {delta}")
    *lead, g, cd, h, w = Y.shape
    if cd % delta:
        raise GroupingError(f"channel count {cd} is not divisible by group size delta={delta}")
    return Y.reshape(tuple(lead) + (g * delta, cd // delta, h, w))


__all__ = ["group", "degroup"]
