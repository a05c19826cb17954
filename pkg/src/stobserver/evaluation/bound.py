"""Covering-number complexity terms and the generalization-bound slack.

Every stem layer is summarized by its Frobenius norm ``a``, operator norm
``s``, activation Lipschitz constant ``rho``, output channels ``c``, kernel
side ``r`` and output dimension ``d``. The elementwise ``A`` multiplication is
one extra stem layer with its own ``a_A``, ``s_A``, ``d_A``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from ..tensor_core import no_grad, spectral_norm

ACTIVATION_LIPSCHITZ = {"leaky-relu": 1.0, "identity": 1.0, "sigmoid": 0.25}


@dataclass(frozen=True)
class LayerBound:
    a: float
    s: float
    rho: float
    c: int
    r: int
    d: int
    name: str = ""

    def __post_init__(self):
        if min(self.a, self.s, self.rho) < 0 or min(self.c, self.r, self.d) < 1:
            raise ConfigurationError(f"layer {self.name or '?'}: norms must be >= 0 and geometry >= 1")

    @property
    def complexity(self) -> float:
        return self.c**2 * self.r**2 * self.a * math.sqrt(self.d / self.c)


@dataclass
class BoundInputs:
    """Stem layers in order with the ``A`` layer at index ``a_index``; the
    vine reuses the first ``n_encoder`` stem layers and then ``b``."""

    stem: list[LayerBound]
    a_index: int
    a_A: float
    s_A: float
    d_A: int
    b: LayerBound
    n_encoder: int
    x_fro: float
    n: int
    eta: float = 1.0
    M: float = 1.0
    delta: float = 0.05
    rho_A: float = 1.0
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError(f"sample count n must be >= 1, got {self.n}")
        if not 0 <= self.a_index <= len(self.stem):
            raise ConfigurationError(f"A position {self.a_index} outside the {len(self.stem)}-layer stem")
        if not 0 <= self.n_encoder <= len(self.stem):
            raise ConfigurationError("n_encoder exceeds the stem depth")
        for name in ("x_fro", "eta", "M", "s_A", "d_A"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if not 0 < self.delta < 1:
            raise ConfigurationError(f"confidence delta must be in (0, 1), got {self.delta}")

    @property
    def depth(self) -> int:
        """Stem depth counting ``A`` as a layer."""
        return len(self.stem) + 1


def complexity_stem(b: BoundInputs) -> float:
    """``R_S``: product of all stem Lipschitz factors times the weighted layer sum.

    The layer sum skips ``A`` (it has its own ``d_A^4 a_A / s_A`` term) and the
    final stem layer.
    """
    prod = b.rho_A * b.s_A
    for layer in b.stem:
        prod *= layer.rho * layer.s
    # stem positions 1..L_S with A inserted at a_index; sum runs to L_S - 1
    ordered = b.stem[: b.a_index] + [None] + b.stem[b.a_index:]
    total = b.d_A**4 * b.a_A / b.s_A
    for layer in ordered[:-1]:
        if layer is not None and layer.a > 0:  # a zero layer adds nothing, even with s = 0
            if layer.s == 0:
                raise ConfigurationError(f"layer {layer.name}: zero operator norm in the denominator")
            total += layer.complexity / layer.s
    return 2.0 * prod * total * b.depth**2


def complexity_vine(b: BoundInputs) -> float:
    """``R_V``: encoder Lipschitz product times the input-projection term."""
    prod = 1.0
    for layer in b.stem[: b.n_encoder]:
        prod *= layer.rho * layer.s
    return 2.0 * prod * b.b.rho * b.b.complexity


def rademacher_term(n: int, x_fro: float, r_total: float, eta: float) -> float:
    return 16.0 * n ** (-5.0 / 8.0) * (x_fro * r_total / eta) ** 0.25


def bound_diagnostics(b: BoundInputs) -> dict[str, float]:
    r_s = complexity_stem(b)
    r_v = complexity_vine(b)
    r = (math.sqrt(r_s) + math.sqrt(r_v)) ** 2
    term = rademacher_term(b.n, b.x_fro, r, b.eta)
    gap = 2.0 * term + b.M * math.sqrt(math.log(1.0 / b.delta) / (2.0 * b.n))
    return {"R_S": r_s, "R_V": r_v, "R": r, "rademacher_term": term, "bound_gap_term": gap}


# -- extraction from a model ----------------------------------------------
def _layer(name, weight, hw_in, stride, padding, transposed=False, output_padding=0, rho=1.0, seed=0):
    w = np.asarray(weight, dtype=np.float64)
    est = spectral_norm(w, hw_in, stride=stride, padding=padding, transposed=transposed,
                        output_padding=output_padding, seed=seed)
    cout = w.shape[1] if transposed else w.shape[0]
    if transposed:
        ho = (hw_in[0] - 1) * stride - 2 * padding + w.shape[2] + output_padding[0]
        wo = (hw_in[1] - 1) * stride - 2 * padding + w.shape[3] + output_padding[1]
    else:
        ho = (hw_in[0] + 2 * padding - w.shape[2]) // stride + 1
        wo = (hw_in[1] + 2 * padding - w.shape[3]) // stride + 1
    return LayerBound(a=float(np.linalg.norm(w)), s=est.value, rho=rho, c=cout, r=w.shape[-1], d=cout * ho * wo,
                      name=name)


def bound_inputs_from_model(model, x_fro: float, n: int, eta: float = 1.0, M: float = 1.0,
                            delta: float = 0.05) -> BoundInputs:
    """Measure every stem layer of an observer model.

    Normalization layers are not counted (treated as identity); Inception
    blocks enter through their composed linear kernel.
    """
    cfg = model.config
    enc = model.encoder
    lh, lw = enc.latent_hw
    stem: list[LayerBound] = []
    with no_grad():
        for i, (block, s) in enumerate(zip(enc.blocks, cfg.stride_plan)):
            stem.append(_layer(f"encoder.{i}", block.conv.weight.data, enc.hw[i], s, 1))
        rho_inc = 1.0 if cfg.inception_act else ACTIVATION_LIPSCHITZ["identity"]
        pre = [("h_inv", model.h_inv), ("t_fwd", model.t_fwd)]
        post = [("t_inv", model.t_inv), ("h_fwd", model.h_fwd)]
        for name, stack in pre:
            for j, blk in enumerate(stack):
                stem.append(_layer(f"{name}.{j}", blk.composed_kernel()[0], (lh, lw), 1, 5, rho=rho_inc))
        a_index = len(stem)
        for name, stack in post:
            for j, blk in enumerate(stack):
                stem.append(_layer(f"{name}.{j}", blk.composed_kernel()[0], (lh, lw), 1, 5, rho=rho_inc))
        dec = model.decoder
        for j, blk in enumerate(dec.blocks, start=1):
            hw_in = dec.hw[len(dec.blocks) - j + 1]
            stem.append(_layer(f"decoder.{j - 1}", blk.weight.data, hw_in, blk.stride, blk.padding, transposed=True,
                               output_padding=blk.output_padding))
        stem.append(_layer("decoder.readout", dec.readout.weight.data, dec.hw[0], 1, 0,
                           rho=ACTIVATION_LIPSCHITZ["identity"]))
        coef = model.coefficient().data.astype(np.float64)
        if model.b_proj is None:
            raise ConfigurationError("bound diagnostics need an input projection B")
        if hasattr(model.b_proj, "composed_kernel"):
            wb, pad = model.b_proj.composed_kernel()[0], 5
        else:
            wb, pad = model.b_proj.weight.data, model.b_proj.padding
        b = _layer("B", wb, (lh, lw), 1, pad, rho=ACTIVATION_LIPSCHITZ["identity"])
    return BoundInputs(
        stem=stem, a_index=a_index, a_A=float(np.linalg.norm(coef)), s_A=float(np.abs(coef).max()),
        d_A=int(coef.size), b=b, n_encoder=len(enc.blocks), x_fro=x_fro, n=n, eta=eta, M=M, delta=delta,
    )
