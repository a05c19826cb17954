"""Binary checkpoint: config, parameters, Adam moments, epoch and RNG state.

Layout (all integers little-endian)::

    b"STOB" | u32 version | u32 n + config JSON | u32 n + state JSON | u32 records
    record: u32 n + name | u8 dtype tag | u32 rank | u64 extent * rank | payload

JSON is canonical (sorted keys, compact separators), so saving a loaded
checkpoint reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from ..tensor_core import Module
from .adam import Adam

MAGIC = b"STOB"
VERSION = 1
DTYPE_TAGS = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}
TAG_DTYPES = {v: k for k, v in DTYPE_TAGS.items()}


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


@dataclass
class Checkpoint:
    config: dict
    state: dict
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def epoch(self) -> int:
        return int(self.state.get("epoch", 0))


def _check_path(path) -> Path:
    if path is None or str(path) == "":
        raise FileNotFoundError("checkpoint path is empty")
    return Path(path)


def write_checkpoint(path, ckpt: Checkpoint) -> None:
    path = _check_path(path)
    parts = [MAGIC, struct.pack("<I", VERSION)]
    for blob in (canonical_json(ckpt.config), canonical_json(ckpt.state)):
        parts += [struct.pack("<I", len(blob)), blob]
    parts.append(struct.pack("<I", len(ckpt.arrays)))
    for name in sorted(ckpt.arrays):
        arr = np.asarray(ckpt.arrays[name])
        le = arr.dtype.newbyteorder("<")
        if le not in DTYPE_TAGS:
            raise CheckpointError(f"record {name!r}: unsupported dtype {arr.dtype}")
        key = name.encode()
        parts += [struct.pack("<I", len(key)), key, struct.pack("<BI", DTYPE_TAGS[le], arr.ndim)]
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=le).tobytes())
    path.write_bytes(b"".join(parts))


def read_checkpoint(path) -> Checkpoint:
    raw = _check_path(path).read_bytes()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(raw):
            raise CheckpointError(f"truncated checkpoint at byte offset {pos} (need {n} more bytes)")
        chunk = raw[pos:pos + n]
        pos += n
        return chunk

    if take(4) != MAGIC:
        raise CheckpointError("bad magic at byte offset 0; not a checkpoint file")
    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise CheckpointError(f"checkpoint format version {version}, this build reads {VERSION}")
    blobs = []
    for _ in range(2):
        (n,) = struct.unpack("<I", take(4))
        blobs.append(json.loads(take(n)))
    (count,) = struct.unpack("<I", take(4))
    arrays = {}
    for _ in range(count):
        (n,) = struct.unpack("<I", take(4))
        name = take(n).decode()
        offset = pos
        tag, rank = struct.unpack("<BI", take(5))
        if tag not in TAG_DTYPES:
            raise CheckpointError(f"record {name!r}: unknown dtype tag {tag} at byte offset {offset}")
        shape = struct.unpack(f"<{rank}Q", take(8 * rank))
        dt = TAG_DTYPES[tag]
        size = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        arrays[name] = np.frombuffer(take(size), dtype=dt).reshape(shape).copy()
    if pos != len(raw):
        raise CheckpointError(f"{len(raw) - pos} trailing bytes after the last record at offset {pos}")
    return Checkpoint(blobs[0], blobs[1], arrays)


def capture(model: Module, config: dict, optimizer: Adam | None = None, epoch: int = 0,
            rng: np.random.Generator | None = None) -> Checkpoint:
    """Snapshot everything needed to continue training bit-exactly."""
    arrays = {f"param/{k}": v for k, v in model.state_dict().items()}
    state: dict = {"epoch": int(epoch)}
    if optimizer is not None:
        st = optimizer.state
        state["optimizer"] = st.hyper()
        for k, v in st.m.items():
            arrays[f"adam.m/{k}"] = v.copy()
            arrays[f"adam.v/{k}"] = st.v[k].copy()
    if rng is not None:
        state["rng"] = rng.bit_generator.state
    return Checkpoint(config=config, state=state, arrays=arrays)


def config_diff(expected: dict, found: dict, prefix: str = "") -> list[str]:
    """Human-readable list of differing keys between two nested config dicts."""
    out = []
    for key in sorted(set(expected) | set(found)):
        a, b = expected.get(key, "<missing>"), found.get(key, "<missing>")
        if isinstance(a, dict) and isinstance(b, dict):
            out += config_diff(a, b, f"{prefix}{key}.")
        elif a != b:
            out.append(f"{prefix}{key}: checkpoint={b!r} current={a!r}")
    return out


def restore(ckpt: Checkpoint, model: Module, config: dict, optimizer: Adam | None = None,
            rng: np.random.Generator | None = None) -> int:
    """Load a checkpoint into live objects after checking the config matches.

    Returns the stored epoch.
    """
    diff = config_diff(config, ckpt.config)
    if diff:
        raise CheckpointError("checkpoint config does not match:\n  " + "\n  ".join(diff))
    params = {k[len("param/"):]: v for k, v in ckpt.arrays.items() if k.startswith("param/")}
    model.load_state_dict(params)
    if optimizer is not None:
        hyper = ckpt.state.get("optimizer")
        if hyper is None:
            raise CheckpointError("checkpoint carries no optimizer state")
        st = optimizer.state
        st.lr, st.beta1, st.beta2, st.eps = hyper["lr"], hyper["beta1"], hyper["beta2"], hyper["eps"]
        st.step, st.consecutive_skips = hyper["step"], hyper["consecutive_skips"]
        st.m = {k[len("adam.m/"):]: v.copy() for k, v in ckpt.arrays.items() if k.startswith("adam.m/")}
        st.v = {k[len("adam.v/"):]: v.copy() for k, v in ckpt.arrays.items() if k.startswith("adam.v/")}
    if rng is not None:
        if "rng" not in ckpt.state:
            raise CheckpointError("checkpoint carries no RNG state")
        rng.bit_generator.state = ckpt.state["rng"]
    return ckpt.epoch


def save_checkpoint(path, model: Module, config: dict, optimizer: Adam | None = None, epoch: int = 0,
                    rng: np.random.Generator | None = None) -> None:
    write_checkpoint(path, capture(model, config, optimizer, epoch, rng))


def load_checkpoint(path, model: Module, config: dict, optimizer: Adam | None = None,
                    rng: np.random.Generator | None = None) -> int:
    return restore(read_checkpoint(path), model, config, optimizer, rng)
