"""Word-packed bit planes and popcount-based dot products.

Sign and activity bits are packed 64 per word, LSB first: element ``j`` lands
in word ``j // 64`` at bit ``j % 64``. A set sign bit means +1; a set activity
bit means the element participates in that plane; sign bits are 0 wherever the
activity bit is 0, and padding bits past the element count stay 0. Dot
products then reduce to one xnor+popcount pass per plane pair, matching dense
reconstruction arithmetic exactly up to float associativity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .binarize import HeterogeneousBinaryTensor, Plane
from .bitalloc import BitDistribution
from .errors import ShapeError, ValidationError

WORD_BITS = 64


def word_count(n_elements: int) -> int:
    return (int(n_elements) + WORD_BITS - 1) // WORD_BITS


@dataclass(frozen=True)
class PackedPlane:
    scale: float
    sign_words: np.ndarray  # uint64, bit 1 = positive sign
    activity_words: np.ndarray  # uint64, bit 1 = element active at this plane


@dataclass(frozen=True)
class PackedPlanes:
    """Word-packed form of a plane-decomposed tensor (shape-agnostic)."""

    element_count: int
    planes: tuple[PackedPlane, ...]

    @property
    def max_bits(self) -> int:
        return len(self.planes)

    @property
    def words_per_plane(self) -> int:
        return word_count(self.element_count)


def pack_bits(bits) -> np.ndarray:
    """Pack a boolean vector into little-endian uint64 words, zero-padded."""
    flat = np.asarray(bits, dtype=bool).ravel()
    padded = np.zeros(word_count(flat.size) * WORD_BITS, dtype=np.uint8)
    padded[: flat.size] = flat
    return np.packbits(padded, bitorder="little").view("<u8").astype(np.uint64)


def unpack_bits(words, n_elements: int) -> np.ndarray:
    """Inverse of :func:`pack_bits`; returns a boolean vector of length ``n_elements``."""
    raw = np.asarray(words, dtype=np.uint64).astype("<u8").view(np.uint8)
    return np.unpackbits(raw, bitorder="little")[: int(n_elements)].astype(bool)


def _pack_bit_matrix(bits2d: np.ndarray) -> np.ndarray:
    """Row-wise pack_bits: (rows, n) boolean -> (rows, words) uint64."""
    rows, n = bits2d.shape
    padded = np.zeros((rows, word_count(n) * WORD_BITS), dtype=np.uint8)
    padded[:, :n] = bits2d
    return np.packbits(padded, axis=1, bitorder="little").view("<u8").astype(np.uint64)


def pack(h: HeterogeneousBinaryTensor) -> PackedPlanes:
    """Pack a plane decomposition; lossless (``unpack(pack(h))`` equals ``h``)."""
    widths = h.mask.ravel()
    planes = []
    for level, plane in enumerate(h.planes, start=1):
        signs = plane.signs.ravel()
        planes.append(PackedPlane(plane.scale, pack_bits(signs > 0), pack_bits(widths >= level)))
    return PackedPlanes(int(widths.size), tuple(planes))


def unpack(p: PackedPlanes, shape) -> HeterogeneousBinaryTensor:
    """Rebuild the plane decomposition (``PackedPlanes`` does not carry a shape)."""
    dims = tuple(int(d) for d in shape)
    if math.prod(dims) != p.element_count:
        raise ShapeError(f"shape {dims} has {math.prod(dims)} elements, packed value has {p.element_count}")
    n = p.element_count
    mask = np.zeros(n, dtype=np.uint8)
    planes = []
    prev_active = np.ones(n, dtype=bool)
    for packed_plane in p.planes:
        active = unpack_bits(packed_plane.activity_words, n)
        if np.any(active & ~prev_active):
            raise ValidationError("activity bitmaps are not downward-closed across planes")
        positive = unpack_bits(packed_plane.sign_words, n)
        if np.any(positive & ~active):
            raise ValidationError("sign bit set for an inactive element")
        signs = np.zeros(n, dtype=np.int8)
        signs[active] = np.where(positive[active], 1, -1)
        mask += active
        planes.append(Plane(packed_plane.scale, signs.reshape(dims)))
        prev_active = active
    if mask.min() < 1:
        raise ValidationError("every element must be active in at least one plane")
    return HeterogeneousBinaryTensor(dims, tuple(planes), mask.reshape(dims))


def pack_rows(h: HeterogeneousBinaryTensor) -> list[PackedPlanes]:
    """Pack each row of a 2-D decomposition separately (plane scales are shared)."""
    if len(h.shape) != 2:
        raise ShapeError(f"pack_rows expects a 2-D decomposition, got shape {h.shape}")
    return pack_sign_matrix(h.scales(), [p.signs for p in h.planes])


def pack_sign_matrix(scales, sign_matrices: Sequence[np.ndarray]) -> list[PackedPlanes]:
    """One PackedPlanes per row from per-plane int8 sign matrices (0 = inactive)."""
    scales = np.asarray(scales, dtype=np.float64)
    if len(scales) != len(sign_matrices):
        raise ShapeError("one scale per sign matrix required")
    first = np.asarray(sign_matrices[0])
    rows, n = first.shape
    packed = []
    for mat in sign_matrices:
        mat = np.asarray(mat)
        if mat.shape != (rows, n):
            raise ShapeError("sign matrices must share one shape")
        packed.append((_pack_bit_matrix(mat > 0), _pack_bit_matrix(mat != 0)))
    return [
        PackedPlanes(n, tuple(PackedPlane(float(scales[i]), sw[r], aw[r]) for i, (sw, aw) in enumerate(packed)))
        for r in range(rows)
    ]


def _popcount_total(words: np.ndarray) -> int:
    return int(np.bitwise_count(words).sum())


def xnor_dot(w: PackedPlanes, a: PackedPlanes) -> float:
    """Dot product of the two packed tensors' reconstructions.

    For each plane pair, signs agreeing on the commonly active elements count
    +1, disagreeing count -1, scaled by both plane scales. Accumulation runs
    in fixed (w-plane, a-plane, word) order, so results are bit-reproducible.
    """
    if w.element_count != a.element_count:
        raise ShapeError(f"element counts differ: {w.element_count} vs {a.element_count}")
    total = 0.0
    for wp in w.planes:
        for ap in a.planes:
            common = wp.activity_words & ap.activity_words
            pairs = _popcount_total(common)
            if pairs == 0:
                continue
            agree = _popcount_total(np.bitwise_not(wp.sign_words ^ ap.sign_words) & common)
            total += wp.scale * ap.scale * float(2 * agree - pairs)
    return total


def xnor_matvec(w_rows: Sequence[PackedPlanes], a: PackedPlanes) -> np.ndarray:
    """Row-wise xnor_dot against a shared right-hand side."""
    return np.array([xnor_dot(row, a) for row in w_rows], dtype=np.float64)


def xnor_matmul(w_rows: Sequence[PackedPlanes], a_cols: Sequence[PackedPlanes]) -> np.ndarray:
    """(len(w_rows), len(a_cols)) matrix of xnor_dot values, vectorized over words.

    Items may have different plane counts; missing planes act as zero-scale,
    zero-activity padding and contribute nothing.
    """
    w_scales, w_signs, w_act = _stack_packed(w_rows)
    a_scales, a_signs, a_act = _stack_packed(a_cols)
    if w_signs.shape[-1] != a_signs.shape[-1] or w_rows[0].element_count != a_cols[0].element_count:
        raise ShapeError("operands must share one element count")
    out = np.zeros((len(w_rows), len(a_cols)), dtype=np.float64)
    for i in range(w_scales.shape[1]):
        for k in range(a_scales.shape[1]):
            common = w_act[:, i, None, :] & a_act[None, :, k, :]
            pairs = np.bitwise_count(common).sum(axis=-1, dtype=np.int64)
            agree = np.bitwise_count(
                np.bitwise_not(w_signs[:, i, None, :] ^ a_signs[None, :, k, :]) & common
            ).sum(axis=-1, dtype=np.int64)
            out += np.outer(w_scales[:, i], a_scales[:, k]) * (2 * agree - pairs)
    return out


def _stack_packed(items: Sequence[PackedPlanes]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not items:
        raise ValidationError("need at least one packed operand")
    n = items[0].element_count
    words = items[0].words_per_plane
    max_planes = max(it.max_bits for it in items)
    scales = np.zeros((len(items), max_planes), dtype=np.float64)
    signs = np.zeros((len(items), max_planes, words), dtype=np.uint64)
    act = np.zeros((len(items), max_planes, words), dtype=np.uint64)
    for r, it in enumerate(items):
        if it.element_count != n:
            raise ShapeError("packed operands must share one element count")
        for i, plane in enumerate(it.planes):
            scales[r, i] = plane.scale
            signs[r, i] = plane.sign_words
            act[r, i] = plane.activity_words
    return scales, signs, act


def bit_product(m_dist: BitDistribution, n_dist: BitDistribution) -> float:
    """Average-bitwidth product: the plane-pair cost factor of a packed product."""
    return m_dist.average * n_dist.average


def op_reduction_factor(m_dist: BitDistribution, n_dist: BitDistribution) -> float:
    """Word-operation reduction vs 64 dense multiplies per word: 64 / (m * n)."""
    return WORD_BITS / bit_product(m_dist, n_dist)


def bitop_count(m_dist: BitDistribution, n_dist: BitDistribution, n_elements: int) -> int:
    """Expected packed word operations for an ``n_elements`` dot product.

    ``ceil(N / 64)`` words per plane pair times the expected plane-pair count
    (the product of the average bitwidths), rounded to the nearest integer.
    """
    if n_elements < 1:
        raise ValidationError("element count must be >= 1")
    return int(round(word_count(n_elements) * bit_product(m_dist, n_dist)))


def active_pair_count(w: PackedPlanes, a: PackedPlanes) -> int:
    """Exact count of (w-plane, a-plane, word) triples with common activity."""
    if w.element_count != a.element_count:
        raise ShapeError(f"element counts differ: {w.element_count} vs {a.element_count}")
    count = 0
    for wp in w.planes:
        for ap in a.planes:
            count += int(np.count_nonzero(wp.activity_words & ap.activity_words))
    return count
