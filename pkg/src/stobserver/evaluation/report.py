"""Metrics reports (JSON + CSV) and PGM frame dumps."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DimensionError
from .metrics import dbz_transform, mae, mse, skill_scores, ssim_sequence


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class MetricsReport:
    per_frame: dict[str, list[float]]
    aggregate: dict[str, float]
    thresholds: dict[str, dict] = field(default_factory=dict)
    bound: dict[str, float] | None = None
    config_hash: str = ""
    flags: dict[str, bool] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> MetricsReport:
        return cls(**d)


def persistence_forecast(last_frame, horizon: int) -> np.ndarray:
    """Repeat the last observed frame ``(N, C, H, W)`` over ``horizon`` steps."""
    last = np.asarray(last_frame)
    return np.repeat(last[:, None], horizon, axis=1)


def evaluate_forecast(pred, truth, thresholds=(), data_range: float = 1.0,
                      config: dict | None = None, last_observed=None) -> MetricsReport:
    """Framewise MSE/MAE/SSIM on normalized frames; HSS/CSI after mapping to dBZ.

    Normalized values are scaled to the [0, 255] pixel range before the
    reflectivity transform. With ``last_observed`` (``(N, C, H, W)``) the
    report also carries the persistence baseline MSE and the ratio to it.
    """
    m, a = mse(pred, truth), mae(pred, truth)
    s, fallback = ssim_sequence(pred, truth, data_range)
    per_frame = {"mse": m.per_frame.tolist(), "mae": a.per_frame.tolist(), "ssim": s.per_frame.tolist()}
    aggregate = {"mse": m.mean, "mae": a.mean, "ssim": s.mean}
    if last_observed is not None:
        base = mse(persistence_forecast(last_observed, np.shape(truth)[1]), truth)
        per_frame["mse_persistence"] = base.per_frame.tolist()
        aggregate["mse_persistence"] = base.mean
        aggregate["mse_ratio"] = m.mean / base.mean if base.mean > 0 else float("inf")
    scores = {}
    if thresholds:
        p = dbz_transform(np.clip(np.asarray(pred, dtype=np.float64) * 255.0, 0, 255))
        t = dbz_transform(np.clip(np.asarray(truth, dtype=np.float64) * 255.0, 0, 255))
        scores = {str(k): v for k, v in skill_scores(p, t, thresholds).items()}
    return MetricsReport(per_frame, aggregate, scores, None, config_hash(config or {}), {"ssim_global_fallback": fallback})


def emit_report(report: MetricsReport, path) -> tuple[Path, Path]:
    """Write ``<path>.json`` (full report) and ``<path>.csv`` (per-frame rows)."""
    base = Path(path)
    base = base.with_suffix("") if base.suffix in (".json", ".csv") else base
    jpath, cpath = base.with_suffix(".json"), base.with_suffix(".csv")
    jpath.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    keys = list(report.per_frame)
    with cpath.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", *keys])
        for k in range(len(report.per_frame[keys[0]]) if keys else 0):
            w.writerow([k + 1, *(repr(report.per_frame[c][k]) for c in keys)])
    return jpath, cpath


def load_report(path) -> MetricsReport:
    p = Path(path)
    p = p if p.suffix == ".json" else p.with_suffix(".json")
    return MetricsReport.from_dict(json.loads(p.read_text()))


def pgm_bytes(frame: np.ndarray) -> bytes:
    """Binary PGM (P5, maxval 255) of a 2-D frame with values in [0, 1]."""
    f = np.asarray(frame, dtype=np.float64)
    if f.ndim != 2:
        raise DimensionError(f"PGM frames must be 2-D, got {f.shape}")
    h, w = f.shape
    pixels = np.clip(np.round(f * 255.0), 0, 255).astype(np.uint8)
    return f"P5\n{w} {h}\n255\n".encode() + pixels.tobytes()


def render_frames(sequence, out_dir, truth=None, prefix: str = "pf") -> list[Path]:
    """Dump a ``(T, C, H, W)`` or ``(T, H, W)`` sequence as PGM files.

    With ``truth`` also writes the ground truth and ``|GT - PF|`` maps.
    Channels beyond the first get a ``_c<k>`` suffix.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim == 3:
        seq = seq[:, None]
    if seq.ndim != 4:
        raise DimensionError(f"expected (T, C, H, W) frames, got {seq.shape}")
    gt = None
    if truth is not None:
        gt = np.asarray(truth, dtype=np.float64).reshape(seq.shape)
    written = []

    def dump(name, frame):
        p = out / name
        p.write_bytes(pgm_bytes(frame))
        written.append(p)

    for k in range(seq.shape[0]):
        for c in range(seq.shape[1]):
            tag = f"{k + 1:03d}" + (f"_c{c}" if seq.shape[1] > 1 else "")
            dump(f"{prefix}_{tag}.pgm", seq[k, c])
            if gt is not None:
                dump(f"gt_{tag}.pgm", gt[k, c])
                dump(f"diff_{tag}.pgm", np.abs(gt[k, c] - seq[k, c]))
    return written
