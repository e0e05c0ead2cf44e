"""Datasets: a deterministic synthetic image task plus the on-disk format.

Directory layout for external data (e.g. a CIFAR-10 subset exported by any
tool): ``root/train/images.bin``, ``root/train/labels.bin``, ``root/test/...``.
images.bin: 8-byte magic "IMGSET1\\0", u32 count, u32 channels, u32 height,
u32 width (little-endian), then uint8 pixels in NCHW order. labels.bin:
8-byte magic "LBLSET1\\0", u32 count, then uint8 labels. Pixel bytes map to
floats via x / 127.5 - 1.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataIOError, ValidationError
from ..tensor import RngStream

IMAGES_MAGIC = b"IMGSET1\x00"
LABELS_MAGIC = b"LBLSET1\x00"


@dataclass
class Dataset:
    name: str
    train_images: np.ndarray  # (N, C, H, W) float64
    train_labels: np.ndarray  # (N,) int64
    test_images: np.ndarray
    test_labels: np.ndarray

    @property
    def n_classes(self) -> int:
        return int(max(self.train_labels.max(), self.test_labels.max())) + 1

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.train_images.shape[1:])


def _upsample(coarse: np.ndarray, factor: int) -> np.ndarray:
    """Blocky upsampling of (C, h, w) by ``factor`` along the spatial axes."""
    return np.kron(coarse, np.ones((1, factor, factor)))


def synthetic_dataset(
    n_train: int = 8000,
    n_test: int = 2000,
    seed: int = 0,
    image_size: int = 32,
    n_classes: int = 10,
    noise: float = 1.0,
    signal: float = 0.3,
    fine_amplitude: float = 0.15,
    n_basis: int = 5,
) -> Dataset:
    """Deterministic 10-class RGB image task.

    Every sample carries high-energy clutter shared by all classes (a random
    blocky pattern with per-sample amplitude jitter); class identity sits in a
    low-amplitude coarse template plus an even fainter pixel-level signature,
    with Gaussian noise and a random circular shift on top. Class separation
    is controlled by ``signal``/``fine_amplitude`` rather than pattern energy,
    so discriminating needs precise filters - which is what makes
    weight-bitwidth sweeps resolvable at desk scale.
    """
    rng = RngStream(seed)
    size = image_size
    coarse = size // 4

    def blocky(stream: RngStream) -> np.ndarray:
        pattern = _upsample(stream.normal(3 * coarse * coarse).reshape(3, coarse, coarse), size // coarse)
        return pattern / np.sqrt(np.mean(pattern**2))

    clutter = blocky(rng)
    basis = np.stack([blocky(rng) for _ in range(n_basis)])
    mix = rng.normal(n_classes * n_basis).reshape(n_classes, n_basis)
    mix /= np.linalg.norm(mix, axis=1, keepdims=True)
    templates = np.einsum("cb,bijk->cijk", mix, basis)

    fine = rng.normal(n_classes * 3 * size * size).reshape(n_classes, 3, size, size)
    fine /= np.sqrt(np.mean(fine**2, axis=(1, 2, 3), keepdims=True))

    rms = float(np.sqrt(1.0 + signal**2 + fine_amplitude**2 + noise**2))

    def make_split(count: int, split_rng: RngStream):
        labels = np.arange(count) % n_classes
        labels = labels[split_rng.permutation(count)]
        amplitude = 0.8 + 0.4 * split_rng.uniform(count)
        images = (
            amplitude[:, None, None, None] * clutter[None]
            + signal * templates[labels]
            + fine_amplitude * fine[labels]
            + noise * split_rng.normal(count * 3 * size * size).reshape(count, 3, size, size)
        )
        shifts = (split_rng.uniform(2 * count).reshape(count, 2) * 5).astype(int) - 2
        for i in range(count):
            images[i] = np.roll(images[i], tuple(shifts[i]), axis=(1, 2))
        images /= rms  # keep activations near unit scale
        return images.astype(np.float64), labels.astype(np.int64)

    train_images, train_labels = make_split(n_train, rng.derive(1))
    test_images, test_labels = make_split(n_test, rng.derive(2))
    return Dataset("synthetic", train_images, train_labels, test_images, test_labels)


def _write_images(path: Path, images_u8: np.ndarray) -> None:
    n, c, h, w = images_u8.shape
    with open(path, "wb") as fh:
        fh.write(IMAGES_MAGIC)
        fh.write(struct.pack("<IIII", n, c, h, w))
        fh.write(images_u8.astype(np.uint8).tobytes())


def _write_labels(path: Path, labels: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(LABELS_MAGIC)
        fh.write(struct.pack("<I", labels.shape[0]))
        fh.write(labels.astype(np.uint8).tobytes())


def save_binary_dataset(dataset: Dataset, root) -> None:
    """Write a dataset in the documented binary layout (pixels requantized to uint8)."""
    root = Path(root)
    for split, images, labels in (
        ("train", dataset.train_images, dataset.train_labels),
        ("test", dataset.test_images, dataset.test_labels),
    ):
        folder = root / split
        folder.mkdir(parents=True, exist_ok=True)
        u8 = np.clip((images + 1.0) * 127.5, 0, 255).round().astype(np.uint8)
        _write_images(folder / "images.bin", u8)
        _write_labels(folder / "labels.bin", labels)


def _read_images(path: Path) -> np.ndarray:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataIOError(_missing_message(path)) from exc
    if raw[:8] != IMAGES_MAGIC:
        raise DataIOError(f"{path}: bad magic, not an images.bin file")
    n, c, h, w = struct.unpack("<IIII", raw[8:24])
    data = np.frombuffer(raw[24:], dtype=np.uint8)
    if data.size != n * c * h * w:
        raise DataIOError(f"{path}: expected {n * c * h * w} pixel bytes, found {data.size}")
    return data.reshape(n, c, h, w).astype(np.float64) / 127.5 - 1.0


def _read_labels(path: Path, expected: int) -> np.ndarray:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataIOError(_missing_message(path)) from exc
    if raw[:8] != LABELS_MAGIC:
        raise DataIOError(f"{path}: bad magic, not a labels.bin file")
    (n,) = struct.unpack("<I", raw[8:12])
    labels = np.frombuffer(raw[12:], dtype=np.uint8)
    if labels.size != n or n != expected:
        raise DataIOError(f"{path}: label count {labels.size} does not match image count {expected}")
    return labels.astype(np.int64)


def _missing_message(path) -> str:
    return (
        f"dataset file {path} is missing. Expected layout: <root>/train/images.bin, "
        "<root>/train/labels.bin, <root>/test/images.bin, <root>/test/labels.bin "
        "(formats documented in hbt.nn.data). Export a CIFAR-10 subset with "
        "hbt.nn.data.save_binary_dataset, or use `dataset = synthetic` to run on "
        "the bundled generator."
    )


def load_binary_dataset(root) -> Dataset:
    """Load the documented binary layout from ``root``."""
    root = Path(root)
    splits = {}
    for split in ("train", "test"):
        images = _read_images(root / split / "images.bin")
        labels = _read_labels(root / split / "labels.bin", images.shape[0])
        splits[split] = (images, labels)
    return Dataset(root.name or "dataset", *splits["train"], *splits["test"])


def load_dataset(source: str, *, n_train: int = 8000, n_test: int = 2000,
                 seed: int = 0, noise: float = 1.0, signal: float = 0.3) -> Dataset:
    """``"synthetic"`` or a directory in the documented binary layout."""
    if source == "synthetic":
        if n_train < 1 or n_test < 1:
            raise ValidationError("n_train and n_test must be >= 1")
        return synthetic_dataset(n_train=n_train, n_test=n_test, seed=seed,
                                 noise=noise, signal=signal)
    return load_binary_dataset(source)
