"""HBT1 and RAWTENS1 file round-trips and format validation."""

import struct

import numpy as np
import pytest

from hbt import DataIOError, RngStream, generate_mask, hetero_binarize, reconstruct
from hbt.io import HBT_MAGIC, read_hbt, read_raw_tensor, write_hbt, write_raw_tensor


def sample_hbt(seed=50, shape=(6, 7)):
    t = RngStream(seed).normal(int(np.prod(shape))).reshape(shape)
    return hetero_binarize(t, generate_mask(t, 1.6, "middle-out"))


class TestHbtFormat:
    def test_roundtrip_bits_lossless(self, tmp_path):
        h = sample_hbt()
        path = tmp_path / "t.hbt"
        write_hbt(path, h)
        back = read_hbt(path)
        assert back.shape == h.shape
        np.testing.assert_array_equal(back.mask, h.mask)
        for a, b in zip(back.planes, h.planes):
            np.testing.assert_array_equal(a.signs, b.signs)
            # Scales pass through 32-bit storage.
            assert a.scale == float(np.float32(b.scale))

    def test_float32_scales_roundtrip_exactly(self, tmp_path):
        h = sample_hbt(seed=51)
        path = tmp_path / "t.hbt"
        write_hbt(path, h)
        once = read_hbt(path)
        write_hbt(path, once)
        twice = read_hbt(path)
        assert twice.scales() == pytest.approx(once.scales(), abs=0)

    def test_reconstruction_close_to_original(self, tmp_path):
        h = sample_hbt(seed=52)
        path = tmp_path / "t.hbt"
        write_hbt(path, h)
        np.testing.assert_allclose(reconstruct(read_hbt(path)), reconstruct(h), atol=1e-6)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.hbt"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(DataIOError, match="magic"):
            read_hbt(path)

    def test_bad_version_rejected(self, tmp_path):
        h = sample_hbt()
        path = tmp_path / "t.hbt"
        write_hbt(path, h)
        raw = bytearray(path.read_bytes())
        raw[4:8] = struct.pack("<I", 99)
        path.write_bytes(bytes(raw))
        with pytest.raises(DataIOError, match="version"):
            read_hbt(path)

    def test_truncated_rejected(self, tmp_path):
        h = sample_hbt()
        path = tmp_path / "t.hbt"
        write_hbt(path, h)
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(DataIOError, match="truncated"):
            read_hbt(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        h = sample_hbt()
        path = tmp_path / "t.hbt"
        write_hbt(path, h)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(DataIOError, match="trailing"):
            read_hbt(path)

    def test_mask_activity_mismatch_rejected(self, tmp_path):
        h = sample_hbt()
        path = tmp_path / "t.hbt"
        write_hbt(path, h)
        raw = bytearray(path.read_bytes())
        # Mask bytes start after magic, version, rank, dims, max_bits, count.
        offset = 4 + 4 + 4 + 4 * len(h.shape) + 1 + 8
        raw[offset] = 7 if raw[offset] != 7 else 6
        path.write_bytes(bytes(raw))
        with pytest.raises(DataIOError):
            read_hbt(path)

    def test_magic_constant(self):
        assert HBT_MAGIC == b"HBT1"


class TestRawTensorFormat:
    def test_roundtrip_float32_exact(self, tmp_path):
        values = RngStream(53).normal(24).reshape(2, 3, 4)
        path = tmp_path / "t.rawtens"
        write_raw_tensor(path, values)
        back = read_raw_tensor(path)
        assert back.shape == (2, 3, 4)
        np.testing.assert_array_equal(back, values.astype(np.float32).astype(np.float64))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.rawtens"
        path.write_bytes(b"SOMEJUNK" + b"\x00" * 16)
        with pytest.raises(DataIOError, match="magic"):
            read_raw_tensor(path)

    def test_truncated_data(self, tmp_path):
        path = tmp_path / "t.rawtens"
        write_raw_tensor(path, np.ones((4, 4)))
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(DataIOError, match="truncated"):
            read_raw_tensor(path)
