"""Spatiotemporal observer architecture and multi-step rollout."""

from .config import ObserverConfig, default_norm_groups
from .decay import decay_envelope, latent_error_decay
from .grouping import degroup, group
from .layers import ConvBlock, DeconvBlock, InceptionBlock
from .model import ObserverModel, Rollout, SpatialDecoder, SpatialEncoder

__all__ = [
    "ConvBlock",
    "DeconvBlock",
    "InceptionBlock",
    "ObserverConfig",
    "ObserverModel",
    "Rollout",
    "SpatialDecoder",
    "SpatialEncoder",
    "decay_envelope",
    "default_norm_groups",
    "degroup",
    "group",
    "latent_error_decay",
]
