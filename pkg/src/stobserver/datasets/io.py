"""The ``STDS`` dataset container, normalization and splits."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError, FormatError

MAGIC = b"STDS"
VERSION = 1
HEADER = struct.Struct("<4sI5IBB")  # magic, version, N, T, C, H, W, dtype tag, normalized
DTYPE_TAGS = {np.dtype("<f4"): 1, np.dtype("<f8"): 2, np.dtype("u1"): 3}
TAG_DTYPES = {v: k for k, v in DTYPE_TAGS.items()}


@dataclass
class DatasetFile:
    """Sequences ``(N, T, C, H, W)``; ``normalized`` promises values in [0, 1]."""

    data: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        if self.data.ndim != 5:
            raise FormatError(f"dataset must be (N, T, C, H, W), got {self.data.shape}")
        if self.data.dtype.newbyteorder("<") not in DTYPE_TAGS:
            raise FormatError(f"unsupported dataset dtype {self.data.dtype}")
        if self.normalized and self.data.size and (self.data.min() < 0 or self.data.max() > 1):
            raise FormatError("normalized flag set but values leave [0, 1]")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __len__(self) -> int:
        return self.data.shape[0]

    def subset(self, idx) -> DatasetFile:
        return DatasetFile(self.data[idx], self.normalized)


def to_bytes(ds: DatasetFile) -> bytes:
    le = ds.data.dtype.newbyteorder("<")
    header = HEADER.pack(MAGIC, VERSION, *ds.data.shape, DTYPE_TAGS[le], int(ds.normalized))
    return header + np.ascontiguousarray(ds.data, dtype=le).tobytes()


def from_bytes(raw: bytes) -> DatasetFile:
    if len(raw) < HEADER.size:
        raise FormatError(f"truncated header: {len(raw)} of {HEADER.size} bytes at offset 0")
    magic, version, n, t, c, h, w, tag, norm = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0")
    if version != VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    if tag not in TAG_DTYPES:
        raise FormatError(f"unknown dtype tag {tag} at offset 28")
    if norm not in (0, 1):
        raise FormatError(f"normalization flag {norm} at offset 29 must be 0 or 1")
    dt = TAG_DTYPES[tag]
    expected = n * t * c * h * w * dt.itemsize
    got = len(raw) - HEADER.size
    if got != expected:
        kind = "truncated" if got < expected else "oversized"
        raise FormatError(
            f"{kind} payload: {got} bytes after the header, expected {expected}; "
            f"payload ends at offset {len(raw)}, should end at {HEADER.size + expected}"
        )
    data = np.frombuffer(raw, dtype=dt, offset=HEADER.size).reshape(n, t, c, h, w).copy()
    return DatasetFile(data, bool(norm))


def write_dataset(path, ds: DatasetFile) -> None:
    Path(path).write_bytes(to_bytes(ds))


def read_dataset(path) -> DatasetFile:
    return from_bytes(Path(path).read_bytes())


def normalize(raw: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Affine map sending ``lo`` to 0 and ``hi`` to 1."""
    if not hi > lo:
        raise ConfigurationError(f"normalize needs hi > lo, got lo={lo}, hi={hi}")
    return (np.asarray(raw, dtype=np.float64) - lo) / (hi - lo)


def denormalize(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if not hi > lo:
        raise ConfigurationError(f"denormalize needs hi > lo, got lo={lo}, hi={hi}")
    return np.asarray(x, dtype=np.float64) * (hi - lo) + lo


@dataclass
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def split_indices(n: int, parts, seed: int = 0) -> Split:
    """Shuffle ``range(n)`` and cut it into train/val/test.

    ``parts`` is either three fractions summing to 1 (val and test are
    rounded, train takes the rest) or three integer counts with sum <= n.
    """
    parts = tuple(parts)
    if len(parts) != 3 or min(parts) < 0:
        raise ConfigurationError(f"split needs three nonnegative parts, got {parts}")
    if all(isinstance(p, (int, np.integer)) for p in parts):
        counts = [int(p) for p in parts]
        if sum(counts) > n:
            raise ConfigurationError(f"counts {counts} exceed {n} samples")
    else:
        if abs(sum(parts) - 1.0) > 1e-9:
            raise ConfigurationError(f"fractions {parts} must sum to 1")
        n_val, n_test = round(parts[1] * n), round(parts[2] * n)
        counts = [n - n_val - n_test, n_val, n_test]
    order = np.random.default_rng(seed).permutation(n)
    a, b = counts[0], counts[0] + counts[1]
    return Split(np.sort(order[:a]), np.sort(order[a:b]), np.sort(order[b:b + counts[2]]))


def split(ds: DatasetFile, parts, seed: int = 0) -> tuple[DatasetFile, DatasetFile, DatasetFile]:
    idx = split_indices(len(ds), parts, seed)
    return ds.subset(idx.train), ds.subset(idx.val), ds.subset(idx.test)
