"""On-disk formats: packed binary tensors ("HBT1") and raw float tensors ("RAWTENS1").

All integers are little-endian. HBT layout: 4-byte magic, u32 version,
u32 rank, u32 dims[rank], u8 max_bits, u64 element count, one mask byte per
element, then per plane: f32 scale, activity words, sign words (u64 each,
LSB-first bit layout from :mod:`hbt.packed`). Raw tensor layout: 8-byte magic,
u32 rank, u32 dims[rank], f32 data in row-major order.
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

from .binarize import HeterogeneousBinaryTensor, MAX_BITS
from .errors import DataIOError, ValidationError
from .packed import PackedPlane, PackedPlanes, pack, unpack, word_count

HBT_MAGIC = b"HBT1"
HBT_VERSION = 1
RAW_MAGIC = b"RAWTENS1"


def write_hbt(path, h: HeterogeneousBinaryTensor) -> None:
    """Serialize a plane decomposition to the HBT1 format."""
    packed = pack(h)
    dims = h.shape
    out = bytearray()
    out += HBT_MAGIC
    out += struct.pack("<II", HBT_VERSION, len(dims))
    out += struct.pack(f"<{len(dims)}I", *dims)
    out += struct.pack("<BQ", h.max_bits, packed.element_count)
    out += h.mask.ravel().astype(np.uint8).tobytes()
    for plane in packed.planes:
        out += struct.pack("<f", plane.scale)
        out += plane.activity_words.astype("<u8").tobytes()
        out += plane.sign_words.astype("<u8").tobytes()
    Path(path).write_bytes(bytes(out))


class _Cursor:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DataIOError(f"{self.path}: truncated file")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_hbt(path) -> HeterogeneousBinaryTensor:
    """Load an HBT1 file back into a plane decomposition.

    Scales come back as exact float32 values; the bit planes and mask are
    lossless.
    """
    cur = _Cursor(Path(path).read_bytes(), path)
    if cur.take(4) != HBT_MAGIC:
        raise DataIOError(f"{path}: bad magic, not an HBT1 file")
    version, rank = cur.unpack("<II")
    if version != HBT_VERSION:
        raise DataIOError(f"{path}: unsupported version {version}")
    if rank == 0:
        raise DataIOError(f"{path}: rank must be >= 1")
    dims = cur.unpack(f"<{rank}I")
    max_bits, count = cur.unpack("<BQ")
    if count != math.prod(dims):
        raise DataIOError(f"{path}: element count {count} does not match dims {dims}")
    if not 1 <= max_bits <= MAX_BITS:
        raise DataIOError(f"{path}: max_bits {max_bits} outside 1..{MAX_BITS}")
    mask = np.frombuffer(cur.take(count), dtype=np.uint8)
    if mask.min() < 1 or mask.max() > max_bits:
        raise DataIOError(f"{path}: mask bytes outside 1..{max_bits}")
    words = word_count(count)
    planes = []
    for _ in range(max_bits):
        (scale,) = cur.unpack("<f")
        activity = np.frombuffer(cur.take(words * 8), dtype="<u8").astype(np.uint64)
        signs = np.frombuffer(cur.take(words * 8), dtype="<u8").astype(np.uint64)
        planes.append(PackedPlane(float(scale), signs, activity))
    if cur.pos != len(cur.data):
        raise DataIOError(f"{path}: {len(cur.data) - cur.pos} trailing bytes")
    try:
        h = unpack(PackedPlanes(int(count), tuple(planes)), dims)
    except ValidationError as exc:
        raise DataIOError(f"{path}: {exc}") from exc
    if not np.array_equal(h.mask.ravel(), mask):
        raise DataIOError(f"{path}: mask bytes disagree with activity bitmaps")
    return h


def write_raw_tensor(path, values) -> None:
    """Serialize a tensor as RAWTENS1 (header + row-major float32 data)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0 or arr.size == 0:
        raise ValidationError("raw tensor must have rank >= 1 and at least one element")
    out = bytearray()
    out += RAW_MAGIC
    out += struct.pack("<I", arr.ndim)
    out += struct.pack(f"<{arr.ndim}I", *arr.shape)
    out += arr.astype("<f4").tobytes()
    Path(path).write_bytes(bytes(out))


def read_raw_tensor(path) -> np.ndarray:
    """Load a RAWTENS1 file as a float64 array (exact image of the f32 data)."""
    cur = _Cursor(Path(path).read_bytes(), path)
    if cur.take(8) != RAW_MAGIC:
        raise DataIOError(f"{path}: bad magic, not a RAWTENS1 file")
    (rank,) = cur.unpack("<I")
    if rank == 0:
        raise DataIOError(f"{path}: rank must be >= 1")
    dims = cur.unpack(f"<{rank}I")
    n = math.prod(dims)
    data = np.frombuffer(cur.take(n * 4), dtype="<f4")
    if cur.pos != len(cur.data):
        raise DataIOError(f"{path}: {len(cur.data) - cur.pos} trailing bytes")
    return data.astype(np.float64).reshape(dims)
