"""Forecast metrics, skill scores, bound diagnostics and report emission."""

from .bound import (
    ACTIVATION_LIPSCHITZ,
    BoundInputs,
    LayerBound,
    bound_diagnostics,
    bound_inputs_from_model,
    complexity_stem,
    complexity_vine,
    rademacher_term,
)
from .metrics import (
    ConfusionCounts,
    FrameMetric,
    SkillScore,
    confusion_counts,
    csi,
    dbz_transform,
    gaussian_window,
    hss,
    mae,
    mse,
    skill_scores,
    ssim,
    ssim_sequence,
)
from .report import (
    MetricsReport,
    config_hash,
    emit_report,
    evaluate_forecast,
    load_report,
    persistence_forecast,
    pgm_bytes,
    render_frames,
)

__all__ = [
    "ACTIVATION_LIPSCHITZ",
    "BoundInputs",
    "ConfusionCounts",
    "FrameMetric",
    "LayerBound",
    "MetricsReport",
    "SkillScore",
    "bound_diagnostics",
    "bound_inputs_from_model",
    "complexity_stem",
    "complexity_vine",
    "config_hash",
    "confusion_counts",
    "csi",
    "dbz_transform",
    "emit_report",
    "evaluate_forecast",
    "gaussian_window",
    "hss",
    "load_report",
    "mae",
    "mse",
    "persistence_forecast",
    "pgm_bytes",
    "rademacher_term",
    "render_frames",
    "skill_scores",
    "ssim",
    "ssim_sequence",
]
