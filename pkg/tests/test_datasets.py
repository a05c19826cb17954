import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stobserver.datasets import (
    DatasetFile,
    MotionSpec,
    bounce_steps,
    denormalize,
    from_bytes,
    gen_bouncing_blobs,
    gen_moving_digits,
    glyph,
    normalize,
    read_dataset,
    reflect,
    split,
    split_indices,
    to_bytes,
    trajectories,
    write_dataset,
)
from stobserver.datasets.io import HEADER
from stobserver.errors import ConfigurationError, FormatError

# p0 = 0, v = 3, walls at 0 and 10, worked out by hand
BOUNCE_TABLE = [0, 3, 6, 9, 8, 5, 2, 1, 4, 7, 10, 7, 4, 1, 2, 5, 8, 9, 6, 3]


# -- kinematics -----------------------------------------------------------------
def test_bounce_table_stepwise():
    assert bounce_steps(0.0, 3.0, 10.0, 20) == BOUNCE_TABLE


def test_bounce_table_closed_form():
    got = reflect(3.0 * np.arange(20), 10.0)
    np.testing.assert_array_equal(got, BOUNCE_TABLE)


@settings(max_examples=60, deadline=None)
@given(
    p0=st.floats(0, 50),
    v=st.floats(-20, 20),
    limit=st.floats(1, 50),
    steps=st.integers(1, 30),
)
def test_reflect_agrees_with_simulation(p0, v, limit, steps):
    p0 = min(p0, limit)
    closed = reflect(p0 + v * np.arange(steps), limit)
    np.testing.assert_allclose(closed, bounce_steps(p0, v, limit, steps), atol=1e-9)
    assert closed.min() >= 0 and closed.max() <= limit


def test_trajectories_stay_inside_frame():
    spec = MotionSpec(n_objects=3, sprite_size=12, speed_range=(2, 6))
    pos = trajectories(spec, 10, 30, (40, 64), np.random.default_rng(0))
    assert pos.shape == (10, 30, 3, 2)
    assert pos[..., 0].max() <= 64 - 12 and pos[..., 1].max() <= 40 - 12 and pos.min() >= 0


def test_sprite_larger_than_frame_rejected():
    with pytest.raises(ConfigurationError):
        gen_bouncing_blobs(MotionSpec(sprite_size=20), 1, 2, 16, 16)


# -- generators -------------------------------------------------------------------
@pytest.mark.parametrize("gen", [gen_moving_digits, gen_bouncing_blobs])
def test_static_sequence_is_constant(gen):
    spec = MotionSpec(n_objects=1, velocity=(0.0, 0.0), position=(10.0, 20.0))
    frames = gen(spec, 2, 6, 48, 48).data
    for k in range(1, 6):
        np.testing.assert_array_equal(frames[:, k], frames[:, 0])


@pytest.mark.parametrize("gen", [gen_moving_digits, gen_bouncing_blobs])
def test_one_pixel_per_frame_shifts_by_one_column(gen):
    spec = MotionSpec(n_objects=1, velocity=(1.0, 0.0), position=(4.0, 10.0))
    frames = gen(spec, 1, 8, 32, 48).data[0, :, 0]
    for k in range(7):
        np.testing.assert_allclose(frames[k + 1, :, 1:], frames[k, :, :-1], atol=1e-7)


def test_blob_peak_is_one_at_its_center():
    spec = MotionSpec(n_objects=1, sprite_size=12, velocity=(0.0, 0.0), position=(20.0, 9.0))
    frame = gen_bouncing_blobs(spec, 1, 1, 40, 40).data[0, 0, 0]
    assert frame.max() == 1.0
    assert np.unravel_index(frame.argmax(), frame.shape) == (15, 26)


def test_blob_mass_is_conserved_away_from_walls():
    spec = MotionSpec(n_objects=1, sprite_size=12, velocity=(1.5, 0.7), position=(20.0, 20.0))
    frames = gen_bouncing_blobs(spec, 1, 8, 64, 64).data.astype(np.float64)
    mass = frames.sum(axis=(2, 3, 4))[0]
    sigma = 2.0
    np.testing.assert_allclose(mass, 2 * np.pi * sigma**2, rtol=1e-6)


@pytest.mark.parametrize("gen", [gen_moving_digits, gen_bouncing_blobs])
def test_generators_are_deterministic(gen):
    a = gen(MotionSpec(seed=4), 3, 5, 32, 32).data
    b = gen(MotionSpec(seed=4), 3, 5, 32, 32).data
    c = gen(MotionSpec(seed=5), 3, 5, 32, 32).data
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_generators_produce_normalized_float32():
    ds = gen_bouncing_blobs(MotionSpec(), 2, 3, 32, 32, channels=2)
    assert ds.shape == (2, 3, 2, 32, 32) and ds.data.dtype == np.float32 and ds.normalized
    assert 0.0 <= ds.data.min() and ds.data.max() <= 1.0
    assert not np.array_equal(ds.data[:, :, 0], ds.data[:, :, 1])


@pytest.mark.parametrize("digit", range(10))
def test_glyphs_are_distinct_binary_sprites(digit):
    g = glyph(digit, 12)
    assert g.shape == (12, 12) and set(np.unique(g)) <= {0.0, 1.0}
    others = [glyph(d, 12) for d in range(10) if d != digit]
    assert all(not np.array_equal(g, o) for o in others)


# -- dataset files ------------------------------------------------------------------------
@pytest.mark.parametrize("dtype", [np.float32, np.float64, np.uint8])
def test_dataset_bytes_round_trip(dtype):
    data = (np.random.default_rng(0).random((2, 3, 1, 4, 5)) * (200 if dtype == np.uint8 else 1)).astype(dtype)
    ds = DatasetFile(data, normalized=dtype != np.uint8)
    back = from_bytes(to_bytes(ds))
    assert back.normalized == ds.normalized and back.data.dtype == data.dtype
    np.testing.assert_array_equal(back.data, data)


def test_two_sample_file_size_and_header(tmp_path):
    ds = DatasetFile(np.zeros((2, 5, 1, 8, 6), dtype=np.float32), normalized=True)
    write_dataset(tmp_path / "d.stds", ds)
    raw = (tmp_path / "d.stds").read_bytes()
    assert HEADER.size == 30
    assert len(raw) == 30 + 2 * 5 * 1 * 8 * 6 * 4
    assert raw[:4] == b"STDS"
    assert struct.unpack_from("<6I", raw, 4) == (1, 2, 5, 1, 8, 6)
    assert raw[28] == 1 and raw[29] == 1
    np.testing.assert_array_equal(read_dataset(tmp_path / "d.stds").data, ds.data)


def test_truncated_payload_reports_offsets():
    raw = to_bytes(DatasetFile(np.zeros((2, 2, 1, 3, 3), dtype=np.float32)))
    with pytest.raises(FormatError, match="truncated payload.*should end at 174"):
        from_bytes(raw[:-4])
    with pytest.raises(FormatError, match="oversized"):
        from_bytes(raw + b"\0")
    with pytest.raises(FormatError, match="truncated header"):
        from_bytes(raw[:10])


@pytest.mark.parametrize("offset,value,msg", [(0, b"XXXX", "magic"), (4, b"\x09", "version"),
                                              (28, b"\x07", "dtype tag"), (29, b"\x02", "offset 29")])
def test_corrupt_header_fields(offset, value, msg):
    raw = bytearray(to_bytes(DatasetFile(np.zeros((1, 1, 1, 2, 2), dtype=np.float32))))
    raw[offset:offset + len(value)] = value
    with pytest.raises(FormatError, match=msg):
        from_bytes(bytes(raw))


def test_dataset_validation():
    with pytest.raises(FormatError):
        DatasetFile(np.zeros((2, 3, 4)))
    with pytest.raises(FormatError):
        DatasetFile(np.full((1, 1, 1, 2, 2), 2.0, dtype=np.float32), normalized=True)
    with pytest.raises(FormatError):
        DatasetFile(np.zeros((1, 1, 1, 2, 2), dtype=np.int32))


# -- normalization and splits -----------------------------------------------------------------
def test_normalize_endpoints_and_inverse():
    raw = np.array([0.0, 127.5, 255.0])
    x = normalize(raw, 0, 255)
    np.testing.assert_array_equal(x, [0.0, 0.5, 1.0])
    np.testing.assert_allclose(denormalize(x, 0, 255), raw)
    with pytest.raises(ConfigurationError):
        normalize(raw, 5, 5)


def test_split_fractions_partition():
    s = split_indices(100, (0.8, 0.1, 0.1), seed=3)
    assert (len(s.train), len(s.val), len(s.test)) == (80, 10, 10)
    allidx = np.concatenate([s.train, s.val, s.test])
    assert sorted(allidx.tolist()) == list(range(100))


def test_split_is_seeded():
    a, b = split_indices(50, (0.6, 0.2, 0.2), 1), split_indices(50, (0.6, 0.2, 0.2), 1)
    np.testing.assert_array_equal(a.test, b.test)
    assert not np.array_equal(a.test, split_indices(50, (0.6, 0.2, 0.2), 2).test)


def test_split_counts_and_errors():
    ds = DatasetFile(np.zeros((10, 1, 1, 2, 2), dtype=np.float32))
    tr, va, te = split(ds, (6, 2, 1))
    assert (len(tr), len(va), len(te)) == (6, 2, 1)
    with pytest.raises(ConfigurationError):
        split_indices(10, (8, 2, 1))
    with pytest.raises(ConfigurationError):
        split_indices(10, (0.5, 0.2, 0.2))
