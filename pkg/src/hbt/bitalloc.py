"""Bitwidth distributions, ordering heuristics, and mask generation.

A distribution assigns a fraction of elements to each integer bitwidth so the
average hits a (possibly fractional) target. An ordering heuristic ranks
elements from "fine with few bits" to "needs many bits"; the mask generator
walks that ranking and hands out bitwidths in ascending order, so the earliest
elements receive the fewest bits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .binarize import MAX_BITS
from .errors import ValidationError
from .tensor import RngStream

HEURISTICS = ("top-down", "middle-out", "bottom-up", "random")
_HEURISTIC_ALIASES = {
    "td": "top-down",
    "mo": "middle-out",
    "bu": "bottom-up",
    "r": "random",
}

# Fraction tolerance for distribution validity checks.
_TOL = 1e-9


@dataclass(frozen=True)
class BitDistribution:
    """Fractions of elements per bitwidth, ascending, summing to 1."""

    entries: tuple[tuple[int, float], ...]

    @property
    def average(self) -> float:
        return float(sum(b * p for b, p in self.entries))

    @property
    def bitwidths(self) -> tuple[int, ...]:
        return tuple(b for b, _ in self.entries)

    def describe(self) -> str:
        # Semicolon-joined so the string stays a single CSV field.
        return ";".join(f"{b}={p:g}" for b, p in self.entries)


def make_distribution(fractions: Mapping[int, float], expected_average: float | None = None) -> BitDistribution:
    """Validate bitwidth -> fraction pairs into a :class:`BitDistribution`."""
    entries = []
    for b in sorted(fractions):
        p = float(fractions[b])
        if not isinstance(b, (int, np.integer)) or not 1 <= int(b) <= MAX_BITS:
            raise ValidationError(f"bitwidth {b!r} outside 1..{MAX_BITS}")
        if not 0.0 < p <= 1.0:
            raise ValidationError(f"fraction for bitwidth {b} must lie in (0, 1], got {p}")
        entries.append((int(b), p))
    if not entries:
        raise ValidationError("distribution must have at least one entry")
    if len({b for b, _ in entries}) != len(entries):
        raise ValidationError("bitwidths must be distinct")
    total = sum(p for _, p in entries)
    if abs(total - 1.0) > _TOL:
        raise ValidationError(f"fractions must sum to 1, got {total!r}")
    dist = BitDistribution(tuple(entries))
    if expected_average is not None and abs(dist.average - expected_average) > _TOL:
        raise ValidationError(
            f"distribution averages {dist.average!r}, expected {expected_average!r}"
        )
    return dist


def _parse_preset(text: str) -> dict[int, float]:
    # "preset:1=0.8,3=0.2" or bare "1=0.8,3=0.2"
    body = text.split(":", 1)[1] if text.startswith("preset:") else text
    fractions: dict[int, float] = {}
    for item in body.split(","):
        if "=" not in item:
            raise ValidationError(f"bad preset entry {item!r}, expected 'bits=fraction'")
        b, p = item.split("=", 1)
        try:
            fractions[int(b)] = float(p)
        except ValueError as exc:
            raise ValidationError(f"bad preset entry {item!r}") from exc
    return fractions


def dist_from_avg(avg_bits: float, policy="adjacent") -> BitDistribution:
    """Distribution of integer bitwidths averaging ``avg_bits``.

    Policies: ``"adjacent"`` mixes the two integers bracketing the average
    (a single width when it is integral); ``"70-20-10"`` is the fixed
    {1: 0.7, 2: 0.2, 3: 0.1} mix for an average of 1.4; explicit presets are
    given as a mapping or a ``"preset:1=0.8,3=0.2"`` string and must average
    to ``avg_bits``.
    """
    avg = float(avg_bits)
    if not 1.0 <= avg <= float(MAX_BITS):
        raise ValidationError(f"average bitwidth must lie in 1..{MAX_BITS}, got {avg}")

    if isinstance(policy, Mapping):
        return make_distribution(policy, expected_average=avg)
    if policy == "adjacent":
        lo = int(np.floor(avg))
        frac = avg - lo
        if frac <= _TOL:
            return make_distribution({lo: 1.0}, expected_average=avg)
        if 1.0 - frac <= _TOL:
            return make_distribution({lo + 1: 1.0}, expected_average=avg)
        return make_distribution({lo: 1.0 - frac, lo + 1: frac}, expected_average=avg)
    if policy == "70-20-10":
        return make_distribution({1: 0.7, 2: 0.2, 3: 0.1}, expected_average=avg)
    if isinstance(policy, str) and (policy.startswith("preset:") or "=" in policy):
        return make_distribution(_parse_preset(policy), expected_average=avg)
    raise ValidationError(f"unknown distribution policy {policy!r}")


def distribution_grid(avg_bits: float, step: float = 0.05, bitwidths=(1, 2, 3)) -> list[BitDistribution]:
    """All distributions on a fraction lattice that hit ``avg_bits``.

    Fractions are multiples of ``step`` over the given bitwidths; used for
    coarse hyperparameter sweeps over the distribution choice.
    """
    widths = tuple(int(b) for b in bitwidths)
    if len(widths) < 1 or sorted(set(widths)) != sorted(widths):
        raise ValidationError(f"bitwidths must be distinct, got {bitwidths!r}")
    m = round(1.0 / step)
    if abs(m * step - 1.0) > _TOL:
        raise ValidationError(f"step {step} must divide 1 evenly")
    out = []

    def assign(idx: int, remaining: int, ticks: list[int]):
        if idx == len(widths) - 1:
            candidate = ticks + [remaining]
            avg = sum(w * k for w, k in zip(widths, candidate)) * step
            if abs(avg - avg_bits) <= _TOL:
                fractions = {w: k * step for w, k in zip(widths, candidate) if k > 0}
                out.append(make_distribution(fractions))
            return
        for k in range(remaining + 1):
            assign(idx + 1, remaining - k, ticks + [k])

    assign(0, m, [])
    return out


def canonical_heuristic(name: str) -> str:
    key = str(name).strip().lower()
    key = _HEURISTIC_ALIASES.get(key, key)
    if key not in HEURISTICS:
        raise ValidationError(f"unknown heuristic {name!r}; expected one of {HEURISTICS}")
    return key


def sort_indices(t, heuristic: str, *, seed: int | None = None, signed_middle_out: bool = False) -> np.ndarray:
    """Permutation of flat indices, earliest = deserves the fewest bits.

    top-down ranks by descending magnitude, bottom-up by ascending magnitude,
    middle-out by ascending absolute deviation of the magnitude from the mean
    magnitude (``signed_middle_out`` switches to the raw signed deviation),
    and random applies the fixed seeded permutation. Ties keep ascending
    element order.
    """
    arr = np.asarray(t, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValidationError("sort_indices: empty input")
    name = canonical_heuristic(heuristic)
    if name == "random":
        if seed is None:
            raise ValidationError("random heuristic requires a seed")
        return RngStream(seed).permutation(arr.size)
    mag = np.abs(arr)
    if name == "top-down":
        keys = -mag
    elif name == "bottom-up":
        keys = mag
    else:  # middle-out
        dev = mag - mag.mean()
        keys = dev if signed_middle_out else np.abs(dev)
    return np.argsort(keys, kind="stable")


def entry_counts(dist: BitDistribution, n: int) -> list[int]:
    """Element counts per distribution entry for ``n`` elements.

    Cumulative-fraction boundaries round half to even (after snapping away
    float representation dirt at 9 decimals); the final entry absorbs the
    remainder. Keeps the total bit count within one bit of ``n * average``
    for distributions spanning at most two bitwidth steps, which covers every
    built-in policy.
    """
    if n < 1:
        raise ValidationError("element count must be >= 1")
    bounds = [0]
    cum = 0.0
    for _, p in dist.entries[:-1]:
        cum += p
        bounds.append(int(round(round(cum * n, 9))))
    bounds.append(n)
    for i in range(1, len(bounds)):  # monotone even under adversarial rounding
        bounds[i] = min(max(bounds[i], bounds[i - 1]), n)
    return [bounds[i + 1] - bounds[i] for i in range(len(dist.entries))]


def assign_mask(order: np.ndarray, dist: BitDistribution, n: int) -> np.ndarray:
    """Flat bitwidth mask from a precomputed ordering (fewest bits first)."""
    counts = entry_counts(dist, n)
    mask = np.empty(n, dtype=np.uint8)
    start = 0
    for (width, _), count in zip(dist.entries, counts):
        mask[order[start : start + count]] = width
        start += count
    return mask


def generate_mask(
    t,
    avg_bits: float,
    heuristic: str = "middle-out",
    policy="adjacent",
    *,
    seed: int | None = None,
    signed_middle_out: bool = False,
) -> np.ndarray:
    """Per-element bitwidth mask averaging ``avg_bits`` over ``t``'s elements."""
    arr = np.asarray(t, dtype=np.float64)
    if arr.size == 0:
        raise ValidationError("generate_mask: empty input")
    dist = dist_from_avg(avg_bits, policy)
    order = sort_indices(arr, heuristic, seed=seed, signed_middle_out=signed_middle_out)
    return assign_mask(order, dist, arr.size).reshape(arr.shape)


def average_bitwidth(mask) -> float:
    """Mean of the per-element bitwidths."""
    return float(np.mean(np.asarray(mask, dtype=np.float64)))
