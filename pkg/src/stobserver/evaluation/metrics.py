"""Pixel metrics, SSIM, radar reflectivity and skill scores."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigurationError, DimensionError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass
class FrameMetric:
    """Per-frame curve (averaged over samples and pixels) and its mean."""

    per_frame: np.ndarray
    mean: float


def _as_sequences(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise DimensionError(f"prediction {pred.shape} and truth {truth.shape} differ")
    if pred.ndim == 4:
        pred, truth = pred[None], truth[None]
    if pred.ndim != 5:
        raise DimensionError(f"expected (N, T, C, H, W) or (T, C, H, W), got {pred.shape}")
    return pred, truth


def _framewise(values: np.ndarray) -> FrameMetric:
    per_frame = values.mean(axis=(0, 2, 3, 4))
    return FrameMetric(per_frame, float(per_frame.mean()))


def mse(pred, truth) -> FrameMetric:
    p, t = _as_sequences(pred, truth)
    return _framewise((p - t) ** 2)


def mae(pred, truth) -> FrameMetric:
    p, t = _as_sequences(pred, truth)
    return _framewise(np.abs(p - t))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = len(g)
    rows = sliding_window_view(img, k, axis=0) @ g
    return sliding_window_view(rows, k, axis=1) @ g


def ssim(a, b, data_range: float = 1.0, return_flag: bool = False):
    """Mean local SSIM of two single-channel frames.

    Frames smaller than the window fall back to one SSIM over global
    statistics; ``return_flag`` then also reports whether that happened.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise DimensionError(f"ssim needs two equal 2-D frames, got {a.shape} and {b.shape}")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    fallback = min(a.shape) < SSIM_WINDOW
    if fallback:
        mu_a, mu_b = a.mean(), b.mean()
        va, vb = a.var(), b.var()
        cov = ((a - mu_a) * (b - mu_b)).mean()
    else:
        g = gaussian_window()
        mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
        va = _filter_valid(a * a, g) - mu_a**2
        vb = _filter_valid(b * b, g) - mu_b**2
        cov = _filter_valid(a * b, g) - mu_a * mu_b
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (va + vb + c2))
    value = float(np.mean(s))
    return (value, fallback) if return_flag else value


def ssim_sequence(pred, truth, data_range: float = 1.0) -> tuple[FrameMetric, bool]:
    """Per-frame SSIM averaged over samples and channels; flag marks any global fallback."""
    p, t = _as_sequences(pred, truth)
    n, steps, c = p.shape[:3]
    vals = np.empty((n, steps, c))
    any_fallback = False
    for i in range(n):
        for k in range(steps):
            for ch in range(c):
                vals[i, k, ch], fb = ssim(p[i, k, ch], t[i, k, ch], data_range, return_flag=True)
                any_fallback |= fb
    per_frame = vals.mean(axis=(0, 2))
    return FrameMetric(per_frame, float(per_frame.mean())), any_fallback


def dbz_transform(p):
    """Pixel value in [0, 255] to radar reflectivity in dBZ."""
    p = np.asarray(p, dtype=np.float64)
    if p.size and (p.min() < 0 or p.max() > 255):
        raise ConfigurationError("pixel values must lie in [0, 255]")
    return p * 95.0 / 255.0 - 10.0


class ConfusionCounts(NamedTuple):
    tp: int
    fn: int
    fp: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn

    def __add__(self, other):  # type: ignore[override]
        return ConfusionCounts(*(x + y for x, y in zip(self, other)))


class SkillScore(NamedTuple):
    """A score plus whether its denominator vanished (value is then 0)."""

    value: float
    degenerate: bool


def confusion_counts(pred_dbz, truth_dbz, threshold: float) -> ConfusionCounts:
    """Binarize both fields at ``>= threshold`` and count the four outcomes."""
    p = np.asarray(pred_dbz)
    t = np.asarray(truth_dbz)
    if p.shape != t.shape:
        raise DimensionError(f"prediction {p.shape} and truth {t.shape} differ")
    pb = p >= threshold
    tb = t >= threshold
    tp = int(np.count_nonzero(pb & tb))
    fp = int(np.count_nonzero(pb & ~tb))
    fn = int(np.count_nonzero(~pb & tb))
    return ConfusionCounts(tp, fn, fp, int(p.size) - tp - fp - fn)


def hss(c: ConfusionCounts) -> SkillScore:
    den = (c.tp + c.fn) * (c.fn + c.tn) + (c.tp + c.fp) * (c.fp + c.tn)
    if den == 0:
        return SkillScore(0.0, True)
    return SkillScore(2.0 * (c.tp * c.tn - c.fn * c.fp) / den, False)


def csi(c: ConfusionCounts) -> SkillScore:
    den = c.tp + c.fn + c.fp
    if den == 0:
        return SkillScore(0.0, True)
    return SkillScore(c.tp / den, False)


def skill_scores(pred_dbz, truth_dbz, thresholds, per_frame: bool = False) -> dict:
    """HSS/CSI per threshold, pooling every pixel of every frame.

    With ``per_frame`` the scores are computed per time index instead (pooled
    over samples), which gives one value per forecast frame.
    """
    p = np.asarray(pred_dbz)
    t = np.asarray(truth_dbz)
    out = {}
    for thr in thresholds:
        if per_frame:
            if p.ndim != 5:
                raise DimensionError("per-frame skill scores need (N, T, C, H, W) input")
            counts = [confusion_counts(p[:, k], t[:, k], thr) for k in range(p.shape[1])]
            out[thr] = {"hss": [hss(c).value for c in counts], "csi": [csi(c).value for c in counts]}
        else:
            c = confusion_counts(p, t, thr)
            h, s = hss(c), csi(c)
            out[thr] = {"hss": h.value, "csi": s.value, "degenerate": h.degenerate or s.degenerate}
    return out
