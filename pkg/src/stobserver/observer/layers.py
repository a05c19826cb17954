"""Building blocks: strided conv blocks, their transposed mirrors, Inception."""

from __future__ import annotations

import numpy as np

from ..tensor_core import (
    Module,
    Parameter,
    Tensor,
    center_pad_kernel,
    conv2d,
    conv_transpose2d,
    group_norm,
    initialize,
    leaky_relu,
)
from ..tensor_core.ops import conv_transpose_out_size
from .config import default_norm_groups

INCEPTION_KERNELS = (3, 5, 7, 11)


def _param(shape, init, rng, dtype) -> Parameter:
    return Parameter(initialize(shape, init, rng, dtype), init=init)


class GroupNorm(Module):
    def __init__(self, channels: int, groups: int | None, dtype):
        self.groups = default_norm_groups(channels, groups)
        self.gamma = Parameter(np.ones(channels, dtype=dtype), init="ones")
        self.beta = Parameter(np.zeros(channels, dtype=dtype), init="zeros")

    def __call__(self, x: Tensor) -> Tensor:
        return group_norm(x, self.groups, self.gamma, self.beta, eps=1e-5)


class Conv(Module):
    """Bare convolution (no norm, no activation), ``same`` padding for odd kernels."""

    def __init__(self, cin: int, cout: int, kernel: int, rng, dtype, stride: int = 1, bias: bool = True):
        self.weight = _param((cout, cin, kernel, kernel), "conv-default", rng, dtype)
        self.bias = Parameter(np.zeros(cout, dtype=dtype), init="zeros") if bias else None
        self.stride = stride
        self.padding = kernel // 2

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvBlock(Module):
    """Conv2d -> GroupNorm -> LeakyReLU.

    The conv has no bias: the normalization would subtract it again.
    """

    def __init__(self, cin: int, cout: int, stride: int, slope: float, groups, rng, dtype, kernel: int = 3):
        self.conv = Conv(cin, cout, kernel, rng, dtype, stride=stride, bias=False)
        self.norm = GroupNorm(cout, groups, dtype)
        self.slope = slope

    def __call__(self, x: Tensor) -> Tensor:
        return leaky_relu(self.norm(self.conv(x)), self.slope)


class DeconvBlock(Module):
    """ConvTranspose2d -> GroupNorm -> LeakyReLU, restoring a known input size (no bias)."""

    def __init__(self, cin, cout, stride, out_hw, in_hw, slope, groups, rng, dtype, kernel: int = 3):
        self.weight = _param((cin, cout, kernel, kernel), "conv-default", rng, dtype)
        self.norm = GroupNorm(cout, groups, dtype)
        self.stride = stride
        self.padding = kernel // 2
        self.output_padding = tuple(
            o - conv_transpose_out_size(i, kernel, stride, self.padding, 0) for o, i in zip(out_hw, in_hw)
        )
        self.slope = slope

    def __call__(self, x: Tensor) -> Tensor:
        y = conv_transpose2d(x, self.weight, None, self.stride, self.padding, self.output_padding)
        return leaky_relu(self.norm(y), self.slope)


class InceptionBlock(Module):
    """1x1 entry conv followed by parallel 3/5/7/11 convs whose outputs are summed.

    Same-padded convolutions of one input distribute over addition, so the
    branch sum is evaluated as a single 11x11 convolution with the centered,
    zero-padded kernels added together. With ``act`` the sum passes through
    GroupNorm and LeakyReLU (and the branches carry no bias, which the
    normalization would cancel); without it the block is linear.
    """

    def __init__(self, cin: int, cout: int, rng, dtype, act: bool = True, slope: float = 0.2, groups=None):
        self.entry = Conv(cin, cout, 1, rng, dtype)
        self.branches = [Conv(cout, cout, k, rng, dtype, bias=not act) for k in INCEPTION_KERNELS]
        self.act = act
        self.slope = slope
        self.norm = GroupNorm(cout, groups, dtype) if act else None

    def merged_kernel(self) -> tuple[Tensor, Tensor | None]:
        size = max(INCEPTION_KERNELS)
        weight = center_pad_kernel(self.branches[0].weight, size)
        bias = self.branches[0].bias
        for b in self.branches[1:]:
            weight = weight + center_pad_kernel(b.weight, size)
            if bias is not None:
                bias = bias + b.bias
        return weight, bias

    def composed_kernel(self) -> tuple[np.ndarray, np.ndarray]:
        """The whole linear part as one ``[cout, cin, 11, 11]`` kernel plus bias."""
        w, b = self.merged_kernel()
        w1 = self.entry.weight.data[:, :, 0, 0]
        kernel = np.einsum("omhw,mi->oihw", w.data, w1)
        bias = np.einsum("omhw,m->o", w.data, self.entry.bias.data)
        if b is not None:
            bias = bias + b.data
        return kernel, bias

    def __call__(self, x: Tensor) -> Tensor:
        u = self.entry(x)
        w, b = self.merged_kernel()
        v = conv2d(u, w, b, 1, w.shape[-1] // 2)
        if self.act:
            v = leaky_relu(self.norm(v), self.slope)
        return v

    def identity_(self) -> None:
        """Set weights so the linear path is the identity map (needs cin == cout)."""
        cout, cin = self.entry.weight.shape[:2]
        assert cin == cout, "identity needs matching channel counts"
        eye = np.eye(cout, dtype=self.entry.weight.dtype)
        self.entry.weight.data[...] = eye[:, :, None, None]
        self.entry.bias.data[...] = 0
        for i, br in enumerate(self.branches):
            br.weight.data[...] = 0
            if br.bias is not None:
                br.bias.data[...] = 0
            if i == 0:
                k = br.weight.shape[-1] // 2
                br.weight.data[:, :, k, k] = eye


def inception_stack(cin: int, cmid: int, cout: int, n: int, rng, dtype, act: bool, slope: float, groups):
    """``n`` Inception blocks mapping ``cin`` -> ``cmid`` -> ... -> ``cout`` channels."""
    chans = [cin] + [cmid] * (n - 1) + [cout]
    return [InceptionBlock(chans[i], chans[i + 1], rng, dtype, act, slope, groups) for i in range(n)]
