"""Deterministic random streams and the tensor statistics everything else uses.

Plain C-order float64 ``numpy.ndarray`` is the universal value carrier; this
module owns seeded generation and the distance/mean primitives the
binarization code is built on.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtri

from .errors import ShapeError, ValidationError

# Fixed, versioned RNG pipeline: Philox 4x64 (10 rounds) keyed by the seed;
# uniforms from raw words via ((w >> 11) + 0.5) * 2**-53, which lands strictly
# inside (0, 1); normals via the inverse normal CDF of those uniforms.
RNG_ALGORITHM = "philox4x64-10/invcdf-v1"

_U64_MAX = 2**64 - 1


class RngStream:
    """Stateful deterministic random stream (``RNG_ALGORITHM``).

    Identical seeds yield identical sequences on every platform. The uniform
    and normal transforms are spelled out here instead of delegating to
    numpy's samplers so the mapping from raw generator words is pinned.
    """

    algorithm = RNG_ALGORITHM

    def __init__(self, seed: int):
        if not isinstance(seed, (int, np.integer)) or not 0 <= int(seed) <= _U64_MAX:
            raise ValidationError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def raw_words(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit words from the Philox stream."""
        return self._gen.integers(0, _U64_MAX, size=n, dtype=np.uint64, endpoint=True)

    def uniform(self, n: int) -> np.ndarray:
        """``n`` uniform doubles strictly inside (0, 1)."""
        words = self.raw_words(n) >> np.uint64(11)
        return (words.astype(np.float64) + 0.5) * 2.0**-53

    def normal(self, n: int) -> np.ndarray:
        """``n`` standard-normal draws (inverse CDF of :meth:`uniform`)."""
        return ndtri(self.uniform(n))

    def permutation(self, n: int) -> np.ndarray:
        """A permutation of ``range(n)`` driven by this stream."""
        return self._gen.permutation(n)

    def derive(self, salt: int) -> "RngStream":
        """Independent stream for a sub-purpose (salted key, same algorithm)."""
        return RngStream((self.seed * 0x9E3779B97F4A7C15 + salt) % (1 + _U64_MAX))


def validate_dims(shape) -> tuple[int, ...]:
    """Check a dimension list: nonempty, integral, every dim >= 1."""
    try:
        dims = tuple(int(d) for d in shape)
    except TypeError as exc:
        raise ShapeError(f"shape must be a sequence of integers, got {shape!r}") from exc
    if not dims:
        raise ShapeError("shape must be nonempty")
    if any(d < 1 for d in dims):
        raise ShapeError(f"all dimensions must be >= 1, got {dims}")
    return dims


def gaussian_tensor(shape, seed: int) -> np.ndarray:
    """Standard-normal tensor of the given shape, reproducible from ``seed``."""
    dims = validate_dims(shape)
    n = math.prod(dims)
    return RngStream(seed).normal(n).reshape(dims)


def mean_abs(t) -> float:
    """Arithmetic mean of absolute values (0.0 for an all-zero tensor)."""
    arr = np.asarray(t, dtype=np.float64)
    if arr.size == 0:
        raise ValidationError("mean_abs: empty input")
    return float(np.mean(np.abs(arr)))


def normalized_distance(a, b) -> float:
    """||a - b||_2 / ||a||_2 for same-shape tensors with ||a|| > 0."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {y.shape}")
    ref = float(np.linalg.norm(x.ravel()))
    if ref == 0.0:
        raise ValidationError("normalized_distance: reference tensor has zero norm")
    return float(np.linalg.norm((x - y).ravel())) / ref
