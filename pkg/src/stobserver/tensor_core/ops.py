"""Differentiable operators used by the observer network.

Convolutions follow the deep-learning convention (cross-correlation, NCHW
layout, weights ``[Cout, Cin, kh, kw]``; transposed-convolution weights
``[Cin, Cout, kh, kw]``). Both are lowered to one matrix product over an
im2col buffer; input gradients reuse the same path on a dilated canvas.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigurationError, DimensionError
from .tensor import Tensor, _unbroadcast, as_tensor, branch, make_node


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


# -- raw numpy kernels (shared with the spectral-norm power iteration) ----
def im2col(x: np.ndarray, kh: int, kw: int, stride: tuple[int, int], padding: tuple[int, int]):
    """Return columns ``[N*Ho*Wo, C*kh*kw]`` and the output spatial size."""
    n, c, h, w = x.shape
    sh, sw = stride
    ph, pw = padding
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    if kh == 1 and kw == 1:
        win = x[:, :, : sh * (ho - 1) + 1 : sh, : sw * (wo - 1) + 1 : sw]
        return win.transpose(0, 2, 3, 1).reshape(n * ho * wo, c), ho, wo
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, : sh * (ho - 1) + 1 : sh, : sw * (wo - 1) + 1 : sw]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    return cols, ho, wo


def col2im(cols: np.ndarray, shape: tuple[int, int, int, int], kh: int, kw: int, stride, padding) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add columns back into an image of ``shape``."""
    n, c, h, w = shape
    sh, sw = stride
    ph, pw = padding
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    cols = cols.reshape(n, ho, wo, c, kh, kw)
    img = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            img[:, :, i : i + sh * (ho - 1) + 1 : sh, j : j + sw * (wo - 1) + 1 : sw] += cols[
                :, :, :, :, i, j
            ].transpose(0, 3, 1, 2)
    return img[:, :, ph : ph + h, pw : pw + w]


def conv2d_raw(x: np.ndarray, w: np.ndarray, stride=1, padding=0) -> np.ndarray:
    cout, _, kh, kw = w.shape
    cols, ho, wo = im2col(x, kh, kw, _pair(stride), _pair(padding))
    out = cols @ w.reshape(cout, -1).T
    return out.reshape(x.shape[0], ho, wo, cout).transpose(0, 3, 1, 2)


def conv_transpose_out_size(h: int, k: int, stride: int, padding: int, output_padding: int) -> int:
    return (h - 1) * stride - 2 * padding + k + output_padding


def conv_input_grad(g: np.ndarray, w: np.ndarray, in_hw: tuple[int, int], stride=1, padding=0) -> np.ndarray:
    """Adjoint of ``conv2d_raw(., w)`` applied to ``g``, landing on an ``in_hw`` image.

    The gradient is spread onto a zero-dilated canvas and correlated with the
    flipped, channel-swapped kernel, so it is one im2col GEMM rather than a
    scatter over kernel taps. Rows of ``in_hw`` no window reaches stay zero.
    """
    n, cout, ho, wo = g.shape
    _, cin, kh, kw = w.shape
    (sh, sw), (ph, pw) = _pair(stride), _pair(padding)
    h, wd = in_hw
    # canvas spans the padded input plus kernel overhang on both sides
    lo_h, lo_w = kh - 1, kw - 1
    hc = h + 2 * ph + 2 * (kh - 1)
    wc = wd + 2 * pw + 2 * (kw - 1)
    canvas = np.zeros((n, cout, hc, wc), dtype=g.dtype)
    canvas[:, :, lo_h : lo_h + sh * (ho - 1) + 1 : sh, lo_w : lo_w + sw * (wo - 1) + 1 : sw] = g
    # only the window starts that land on real (unpadded) input positions
    canvas = canvas[:, :, ph : ph + h + kh - 1, pw : pw + wd + kw - 1]
    wf = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    return conv2d_raw(canvas, wf, 1, 0)


def conv_transpose2d_raw(y: np.ndarray, w: np.ndarray, stride=1, padding=0, output_padding=0) -> np.ndarray:
    _, _, h, wd = y.shape
    _, _, kh, kw = w.shape
    (sh, sw), (ph, pw), (oh, ow) = _pair(stride), _pair(padding), _pair(output_padding)
    ho = conv_transpose_out_size(h, kh, sh, ph, oh)
    wo = conv_transpose_out_size(wd, kw, sw, pw, ow)
    return conv_input_grad(y, w, (ho, wo), stride, padding)


# -- convolution -----------------------------------------------------------
def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride=1, padding=0) -> Tensor:
    """2-D cross-correlation of ``x [N,Cin,H,W]`` with ``weight [Cout,Cin,kh,kw]``."""
    if x.ndim != 4:
        raise DimensionError(f"conv2d: input must be rank 4 (N,C,H,W), got shape {x.shape}")
    if weight.ndim != 4:
        raise DimensionError(f"conv2d: weight must be rank 4, got shape {weight.shape}")
    n, cin, h, w = x.shape
    cout, wcin, kh, kw = weight.shape
    if wcin != cin:
        raise DimensionError(f"conv2d: channel axis (1) mismatch, input has {cin}, weight expects {wcin}")
    stride, padding = _pair(stride), _pair(padding)
    if min(stride) < 1:
        raise ConfigurationError("conv2d: stride must be >= 1")
    if kh > h + 2 * padding[0]:
        raise DimensionError(f"conv2d: kernel height {kh} exceeds padded height axis (2) {h + 2 * padding[0]}")
    if kw > w + 2 * padding[1]:
        raise DimensionError(f"conv2d: kernel width {kw} exceeds padded width axis (3) {w + 2 * padding[1]}")
    if bias is not None and bias.shape != (cout,):
        raise DimensionError(f"conv2d: bias shape {bias.shape} != ({cout},)")

    cols, ho, wo = im2col(x.data, kh, kw, stride, padding)
    wmat = weight.data.reshape(cout, -1)
    out = (cols @ wmat.T).reshape(n, ho, wo, cout)
    if bias is not None:
        out = out + bias.data
    out = out.transpose(0, 3, 1, 2)
    if not (x.requires_grad or weight.requires_grad or (bias is not None and bias.requires_grad)):
        cols = None
    xshape = x.shape

    def bw(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, cout)
        gx = gw = gb = None
        if x.requires_grad:
            gx = conv_input_grad(g, weight.data, xshape[2:], stride, padding)
        if weight.requires_grad:
            gw = (g2.T @ cols).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=0)
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(np.ascontiguousarray(out), parents, bw)


def conv_transpose2d(
    x: Tensor, weight: Tensor, bias: Tensor | None = None, stride=1, padding=0, output_padding=0
) -> Tensor:
    """Transposed convolution; the exact adjoint of :func:`conv2d` with the same weight."""
    if x.ndim != 4:
        raise DimensionError(f"conv_transpose2d: input must be rank 4 (N,C,H,W), got shape {x.shape}")
    n, cin, h, w = x.shape
    wcin, cout, kh, kw = weight.shape
    if wcin != cin:
        raise DimensionError(f"conv_transpose2d: channel axis (1) mismatch, input has {cin}, weight expects {wcin}")
    stride, padding, opad = _pair(stride), _pair(padding), _pair(output_padding)
    if min(stride) < 1:
        raise ConfigurationError("conv_transpose2d: stride must be >= 1")
    if opad[0] >= stride[0] or opad[1] >= stride[1] or min(opad) < 0:
        raise ConfigurationError(f"conv_transpose2d: output_padding {opad} must be in [0, stride {stride})")
    if bias is not None and bias.shape != (cout,):
        raise DimensionError(f"conv_transpose2d: bias shape {bias.shape} != ({cout},)")

    out = conv_transpose2d_raw(x.data, weight.data, stride, padding, opad)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    xdata = x.data
    wmat = weight.data.reshape(cin, -1)

    def bw(g):
        # the output-padding margin is outside every kernel window; im2col
        # over the enlarged canvas recovers the forward's tap layout
        ph, pw = padding
        hb = max((h - 1) * stride[0] + kh, ph + g.shape[2])
        wb = max((w - 1) * stride[1] + kw, pw + g.shape[3])
        canvas = np.zeros((n, cout, hb, wb), dtype=g.dtype)
        canvas[:, :, ph : ph + g.shape[2], pw : pw + g.shape[3]] = g
        cols, ho, wo = im2col(canvas, kh, kw, stride, (0, 0))
        cols = cols.reshape(n, ho, wo, -1)[:, :h, :w].reshape(n * h * w, -1)
        gx = gw = gb = None
        if x.requires_grad:
            gx = (cols @ wmat.T).reshape(n, h, w, cin).transpose(0, 3, 1, 2)
        if weight.requires_grad:
            gw = (xdata.transpose(0, 2, 3, 1).reshape(-1, cin).T @ cols).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(np.ascontiguousarray(out), parents, bw)


def center_pad_kernel(w: Tensor, size: int) -> Tensor:
    """Zero-pad a ``[..., k, k]`` kernel to ``[..., size, size]`` keeping it centered."""
    k = w.shape[-1]
    if w.shape[-2] != k or (size - k) % 2:
        raise DimensionError(f"cannot center a {w.shape[-2:]} kernel in {size}x{size}")
    p = (size - k) // 2
    if p == 0:
        return w
    widths = [(0, 0)] * (w.ndim - 2) + [(p, p), (p, p)]
    return make_node(np.pad(w.data, widths), (w,), lambda g: (g[..., p : p + k, p : p + k],))


# -- normalization and activations -----------------------------------------
def group_norm(x: Tensor, groups: int, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each (sample, channel group) to zero mean / unit variance, then affine."""
    if x.ndim != 4:
        raise DimensionError(f"group_norm: input must be rank 4, got {x.shape}")
    n, c, h, w = x.shape
    if groups < 1 or c % groups:
        raise ConfigurationError(f"group_norm: {c} channels not divisible into {groups} groups")
    if eps <= 0:
        raise ConfigurationError("group_norm: eps must be positive")
    xg = x.data.reshape(n, groups, -1)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mu) * inv).reshape(n, c, h, w)
    g4 = gamma.data.reshape(1, c, 1, 1)
    out = xhat * g4 + beta.data.reshape(1, c, 1, 1)

    def bw(g):
        gx = ggamma = gbeta = None
        if gamma.requires_grad:
            ggamma = (g * xhat).sum(axis=(0, 2, 3))
        if beta.requires_grad:
            gbeta = g.sum(axis=(0, 2, 3))
        if x.requires_grad:
            dxhat = (g * g4).reshape(n, groups, -1)
            xh = xhat.reshape(n, groups, -1)
            gx = inv * (dxhat - dxhat.mean(axis=2, keepdims=True) - xh * (dxhat * xh).mean(axis=2, keepdims=True))
            gx = gx.reshape(n, c, h, w)
        return gx, ggamma, gbeta

    return make_node(out, (x, gamma, beta), bw)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    """``max(x, slope*x)``; the kink at 0 takes the ``slope`` branch."""
    if not 0.0 <= slope < 1.0:
        raise ConfigurationError(f"leaky_relu slope must be in [0, 1), got {slope}")
    pos = branch(x.data > 0)
    scale = np.where(pos, 1.0, slope).astype(x.dtype)
    return make_node(x.data * scale, (x,), lambda g: (g * scale,))


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    e = np.exp(-np.abs(d))
    s = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)
    return make_node(s, (x,), lambda g: (g * s * (1.0 - s),))


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    side = branch(np.where(x.data < lo, -1, np.where(x.data > hi, 1, 0)).astype(np.int8))
    inside = side == 0
    out = np.where(inside, x.data, np.where(side < 0, lo, hi)).astype(x.dtype)
    return make_node(out, (x,), lambda g: (g * inside,))


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; ``b`` may omit ``a``'s leading batch axis."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and a.shape[1:] != b.shape:
        raise DimensionError(f"hadamard: shapes {a.shape} and {b.shape} are incompatible")
    sa, sb = a.shape, b.shape
    return make_node(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, sa), _unbroadcast(g * a.data, sb)),
    )
