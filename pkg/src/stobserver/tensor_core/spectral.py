"""Largest singular value of a convolution viewed as a linear operator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError
from .ops import _pair, conv2d_raw, conv_transpose2d_raw, conv_transpose_out_size


@dataclass(frozen=True)
class SpectralEstimate:
    value: float
    converged: bool
    iterations: int

    def __float__(self) -> float:
        return self.value


def conv_output_hw(hw, kernel, stride, padding) -> tuple[int, int]:
    (h, w), (kh, kw), (sh, sw), (ph, pw) = _pair(hw), _pair(kernel), _pair(stride), _pair(padding)
    return (h + 2 * ph - kh) // sh + 1, (w + 2 * pw - kw) // sw + 1


def spectral_norm(
    weight: np.ndarray,
    input_hw,
    stride=1,
    padding=0,
    transposed: bool = False,
    output_padding=0,
    max_iter: int = 200,
    tol: float = 1e-4,
    seed: int = 0,
) -> SpectralEstimate:
    """Power iteration on ``W^T W`` for the operator induced by a conv weight.

    For ``transposed=False`` ``weight`` is ``[Cout, Cin, kh, kw]`` applied by
    :func:`conv2d_raw` to a ``[Cin, *input_hw]`` map; for ``transposed=True``
    it is a ``[Cin, Cout, kh, kw]`` transposed-convolution weight.
    Stops once the step and the extrapolated remaining rise are both below
    ``tol`` relative to the estimate.
    """
    if input_hw is None:
        raise ConfigurationError("spectral_norm needs the input geometry (H, W)")
    w = np.asarray(weight, dtype=np.float64)
    h, wd = _pair(input_hw)
    kh, kw = w.shape[2:]
    stride, padding, opad = _pair(stride), _pair(padding), _pair(output_padding)

    if transposed:
        cin = w.shape[0]
        ho = conv_transpose_out_size(h, kh, stride[0], padding[0], opad[0])
        wo = conv_transpose_out_size(wd, kw, stride[1], padding[1], opad[1])

        def fwd(v):
            return conv_transpose2d_raw(v, w, stride, padding, opad)

        def adj(u):
            return conv2d_raw(u, w, stride, padding)[:, :, :h, :wd]

    else:
        cin = w.shape[1]
        ho, wo = conv_output_hw((h, wd), (kh, kw), stride, padding)
        back_pad = (
            h - conv_transpose_out_size(ho, kh, stride[0], padding[0], 0),
            wd - conv_transpose_out_size(wo, kw, stride[1], padding[1], 0),
        )

        def fwd(v):
            return conv2d_raw(v, w, stride, padding)

        def adj(u):
            return conv_transpose2d_raw(u, w, stride, padding, back_pad)

    rng = np.random.default_rng(seed)
    v = rng.standard_normal((1, cin, h, wd))
    v /= np.linalg.norm(v)
    sigma, prev_step = 0.0, None
    for it in range(1, max_iter + 1):
        u = fwd(v)
        new_sigma = float(np.linalg.norm(u))
        if new_sigma == 0.0:
            return SpectralEstimate(0.0, True, it)
        v = adj(u)
        v /= np.linalg.norm(v)
        step = new_sigma - sigma
        if prev_step is not None and 0.0 <= step <= tol * new_sigma:
            # estimates rise geometrically; bound the remaining tail by the
            # observed contraction ratio before declaring convergence
            ratio = step / prev_step if prev_step > 0 else 0.0
            tail = step * ratio / (1.0 - ratio) if ratio < 1.0 else np.inf
            if tail <= tol * new_sigma:
                return SpectralEstimate(new_sigma, True, it)
        prev_step = step
        sigma = new_sigma
    return SpectralEstimate(sigma, False, max_iter)
