"""Spatiotemporal observer: encoder, linear latent observer and decoder for
sequence forecasting, trained with dynamic regularization."""

__version__ = "0.1.0"
