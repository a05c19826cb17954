"""Frame loss plus dynamic regularization on the predicted latents."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ..errors import ConfigurationError, DimensionError
from ..tensor_core import Tensor, concat, square, tabs


@dataclass(frozen=True)
class LossWeights:
    """``lambda0`` weights the L1 part of the frame loss; ``lambda1..3`` the
    latent terms on ``x``, ``z`` and ``xi``."""

    lambda0: float = 1.0
    lambda1: float = 0.0
    lambda2: float = 0.0
    lambda3: float = 0.0

    def __post_init__(self):
        for k, v in self.as_dict().items():
            if not v >= 0.0:
                raise ConfigurationError(f"{k} must be nonnegative, got {v}")

    def as_dict(self) -> dict[str, float]:
        return {"lambda0": self.lambda0, "lambda1": self.lambda1, "lambda2": self.lambda2, "lambda3": self.lambda3}

    @property
    def needs_latents(self) -> bool:
        return self.lambda1 > 0 or self.lambda2 > 0 or self.lambda3 > 0


@dataclass
class LossBreakdown:
    L_y: Tensor
    L_x: Tensor
    L_z: Tensor
    L_xi: Tensor
    total: Tensor

    def as_floats(self) -> dict[str, float]:
        return {k: getattr(self, k).item() for k in ("L_y", "L_x", "L_z", "L_xi", "total")}


def frame_loss_terms(pred: Tensor, truth: Tensor, lambda0: float) -> Tensor:
    """Per-element contributions to :func:`frame_loss`; they sum to it."""
    if pred.shape != truth.shape:
        raise DimensionError(f"prediction {pred.shape} and target {truth.shape} differ")
    if pred.ndim != 5:
        raise DimensionError(f"frames must be (N, L, C, H, W), got {pred.shape}")
    n, length = pred.shape[:2]
    e = truth - pred
    terms = square(e)
    if lambda0:
        terms = terms + tabs(e) * lambda0
    return terms * (1.0 / (n * length))


def frame_loss(pred: Tensor, truth: Tensor, lambda0: float) -> Tensor:
    """Mean over samples and frames of ``||e||_2^2 + lambda0 * ||e||_1`` per frame."""
    return frame_loss_terms(pred, truth, lambda0).sum()


def latent_loss_terms(preds: Sequence[Tensor], targets: Sequence[Tensor]) -> list[Tensor]:
    """Per-element contributions to :func:`latent_loss`, one tensor per step."""
    if len(preds) != len(targets) or not preds:
        raise DimensionError(f"{len(preds)} predicted vs {len(targets)} target latents")
    scale = 1.0 / (preds[0].shape[0] * len(preds))
    out = []
    for p, t in zip(preds, targets):
        if p.shape != t.shape:
            raise DimensionError(f"latent prediction {p.shape} and target {t.shape} differ")
        out.append(square(t - p) * scale)
    return out


def _sum_terms(terms: Sequence[Tensor]) -> Tensor:
    total = terms[0].sum()
    for t in terms[1:]:
        total = total + t.sum()
    return total


def latent_loss(preds: Sequence[Tensor], targets: Sequence[Tensor]) -> Tensor:
    """Mean over samples and forecast steps of the squared L2 distance."""
    return _sum_terms(latent_loss_terms(preds, targets))


def _weighted_latents(weights: LossWeights, pred_latents, target_latents):
    for key, lam in (("x", weights.lambda1), ("z", weights.lambda2), ("xi", weights.lambda3)):
        if lam > 0:
            if pred_latents is None or target_latents is None:
                raise ConfigurationError(f"latent weight for {key} is positive but no latents were given")
            yield key, lam, latent_loss_terms(pred_latents[key], target_latents[key])


def loss_contributions(
    pred_frames: Tensor,
    true_frames: Tensor,
    pred_latents: dict[str, Sequence[Tensor]] | None,
    target_latents: dict[str, Sequence[Tensor]] | None,
    weights: LossWeights,
) -> Tensor:
    """Flat vector of weighted per-element terms whose sum is the total loss.

    Finite-difference checks difference this vector before summing, which
    keeps the rounding of a large total out of small gradient components.
    """
    parts = [frame_loss_terms(pred_frames, true_frames, weights.lambda0).reshape((-1,))]
    for _, lam, terms in _weighted_latents(weights, pred_latents, target_latents):
        parts += [(t * lam).reshape((-1,)) for t in terms]
    return concat(parts, axis=0)


def compute_losses(
    pred_frames: Tensor,
    true_frames: Tensor,
    pred_latents: dict[str, Sequence[Tensor]] | None,
    target_latents: dict[str, Sequence[Tensor]] | None,
    weights: LossWeights,
) -> LossBreakdown:
    """Combine the frame loss with the ``x``/``z``/``xi`` latent penalties.

    Latent dictionaries use keys ``"x"``, ``"z"``, ``"xi"``. Targets must be
    detached. A latent term is evaluated only when its weight is positive and
    is reported as zero otherwise.
    """
    ly = frame_loss(pred_frames, true_frames, weights.lambda0)
    zero = Tensor(ly.data * 0)
    terms = {"x": zero, "z": zero, "xi": zero}
    total = ly
    for key, lam, parts in _weighted_latents(weights, pred_latents, target_latents):
        terms[key] = _sum_terms(parts)
        total = total + terms[key] * lam
    return LossBreakdown(ly, terms["x"], terms["z"], terms["xi"], total)
