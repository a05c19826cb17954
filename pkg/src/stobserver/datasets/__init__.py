"""Synthetic sequences, normalization, splits and the ``STDS`` file format."""

from .io import (
    DatasetFile,
    Split,
    denormalize,
    from_bytes,
    normalize,
    read_dataset,
    split,
    split_indices,
    to_bytes,
    write_dataset,
)
from .motion import (
    MotionSpec,
    bounce_steps,
    gen_bouncing_blobs,
    gen_moving_digits,
    glyph,
    reflect,
    trajectories,
)

__all__ = [
    "DatasetFile",
    "MotionSpec",
    "Split",
    "bounce_steps",
    "denormalize",
    "from_bytes",
    "gen_bouncing_blobs",
    "gen_moving_digits",
    "glyph",
    "normalize",
    "read_dataset",
    "reflect",
    "split",
    "split_indices",
    "to_bytes",
    "trajectories",
    "write_dataset",
]
