"""Sign binarization primitives and residual bit-plane decomposition.

A tensor is approximated by a stack of bit planes. Plane ``i`` holds one sign
per element still active at round ``i`` plus a single nonnegative scale, the
mean absolute residual over that active set; active residuals then shrink by
``scale * sign`` before the next round. A per-element bitwidth mask says how
many rounds each element takes part in, which is what makes fractional
*average* bitwidths possible. A uniform mask reduces the scheme to plain
homogeneous residual binarization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, ValidationError
from .tensor import RngStream, mean_abs

# Widths above 8 would not fit the packed format's one-byte mask entries.
MAX_BITS = 8


def _as_finite_array(t, op: str) -> np.ndarray:
    arr = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{op}: input must be finite (no NaN/inf)")
    return arr


def validate_mask(mask, shape=None) -> np.ndarray:
    """Check a per-element bitwidth mask (integers in 1..MAX_BITS) -> uint8 copy."""
    arr = np.asarray(mask)
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValidationError(f"bitwidth mask must be integer-valued, got dtype {arr.dtype}")
    if arr.size == 0:
        raise ValidationError("bitwidth mask must be nonempty")
    if shape is not None and tuple(arr.shape) != tuple(shape):
        raise ShapeError(f"mask shape {arr.shape} does not match tensor shape {tuple(shape)}")
    if int(arr.min()) < 1 or int(arr.max()) > MAX_BITS:
        raise ValidationError(f"bitwidths must lie in 1..{MAX_BITS}")
    return arr.astype(np.uint8)


@dataclass(frozen=True)
class Plane:
    """One bit plane: a shared scale and per-element signs (0 = inactive)."""

    scale: float
    signs: np.ndarray  # int8 in {-1, 0, +1}, same shape as the source tensor


@dataclass(frozen=True)
class HeterogeneousBinaryTensor:
    """Bit-plane approximation of a tensor with per-element bitwidths.

    Element ``j`` carries defined signs exactly in planes ``1..mask[j]``;
    its reconstruction is the sum of ``scale * sign`` over those planes.
    """

    shape: tuple[int, ...]
    planes: tuple[Plane, ...]
    mask: np.ndarray  # uint8 plane count per element

    @property
    def max_bits(self) -> int:
        return len(self.planes)

    @property
    def element_count(self) -> int:
        return int(self.mask.size)

    def scales(self) -> np.ndarray:
        return np.array([p.scale for p in self.planes], dtype=np.float64)

    def stored_bit_count(self) -> int:
        """Number of sign bits actually stored (= sum of mask entries)."""
        return int(self.mask.sum())


def hard_sigmoid(x):
    """max(0, min(1, (x + 1) / 2)), elementwise."""
    return np.clip((np.asarray(x, dtype=np.float64) + 1.0) / 2.0, 0.0, 1.0)


def stochastic_binarize(t, rng: RngStream) -> np.ndarray:
    """+-1 tensor; each element is +1 with probability hard_sigmoid(t)."""
    arr = _as_finite_array(t, "stochastic_binarize")
    u = rng.uniform(arr.size).reshape(arr.shape)
    return np.where(u < hard_sigmoid(arr), 1.0, -1.0)


def sign_binarize(t) -> np.ndarray:
    """Elementwise sign with sign(0) = +1."""
    arr = _as_finite_array(t, "sign_binarize")
    return np.where(arr >= 0.0, 1.0, -1.0)


def scaled_sign_binarize(t) -> tuple[float, np.ndarray]:
    """(alpha, signs) with alpha = mean(|t|); alpha * signs approximates t."""
    arr = _as_finite_array(t, "scaled_sign_binarize")
    if arr.size == 0:
        raise ValidationError("scaled_sign_binarize: empty input")
    return mean_abs(arr), sign_binarize(arr)


def hetero_binarize(t, mask) -> HeterogeneousBinaryTensor:
    """Residual bit-plane decomposition where element ``j`` takes ``mask[j]`` rounds.

    Round ``i`` runs over the active set ``{j : mask[j] >= i}`` only: the scale
    is the mean absolute residual there, signs are residual signs, and inactive
    elements neither influence the scale nor receive a term.
    """
    arr = _as_finite_array(t, "hetero_binarize")
    if arr.size == 0:
        raise ValidationError("hetero_binarize: empty input")
    widths = validate_mask(mask, arr.shape).ravel()

    residual = arr.ravel().copy()
    planes = []
    for level in range(1, int(widths.max()) + 1):
        active = widths >= level
        # Active sets are nested downward, and level <= max(widths).
        assert active.any(), "empty active set despite mask validation"
        signs = np.zeros(residual.size, dtype=np.int8)
        signs[active] = np.where(residual[active] >= 0.0, 1, -1)
        scale = float(np.mean(np.abs(residual[active])))
        residual[active] -= scale * signs[active].astype(np.float64)
        planes.append(Plane(scale, signs.reshape(arr.shape)))
    return HeterogeneousBinaryTensor(tuple(arr.shape), tuple(planes), widths.reshape(arr.shape))


def residual_binarize(t, n: int) -> HeterogeneousBinaryTensor:
    """Homogeneous decomposition: every element takes exactly ``n`` rounds."""
    if not isinstance(n, (int, np.integer)) or not 1 <= int(n) <= MAX_BITS:
        raise ValidationError(f"bit count must be an integer in 1..{MAX_BITS}, got {n!r}")
    arr = _as_finite_array(t, "residual_binarize")
    if arr.size == 0:
        raise ValidationError("residual_binarize: empty input")
    return hetero_binarize(arr, np.full(arr.shape, int(n), dtype=np.uint8))


def reconstruct(h: HeterogeneousBinaryTensor) -> np.ndarray:
    """Sum of scale * signs over planes (inactive entries contribute nothing)."""
    out = np.zeros(h.shape, dtype=np.float64)
    for plane in h.planes:
        out += plane.scale * plane.signs.astype(np.float64)
    return out


def ste_gradient(t, upstream) -> np.ndarray:
    """Clipped pass-through gradient: upstream where |t| <= 1 (inclusive), else 0."""
    arr = np.asarray(t, dtype=np.float64)
    up = np.asarray(upstream, dtype=np.float64)
    if arr.shape != up.shape:
        raise ShapeError(f"shape mismatch: {arr.shape} vs {up.shape}")
    return up * (np.abs(arr) <= 1.0)
