"""SGD training loop, evaluation, and the bitwidth sweep driver."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import ValidationError
from ..tensor import RngStream
from .data import Dataset
from .layers import Param, QuantSpec, softmax_cross_entropy
from .network import Network

MASK_REFRESH_POLICIES = ("every-forward", "every-epoch")  # plus frozen-after-epoch:K


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    epochs: int = 4
    batch_size: int = 64
    seed: int = 0
    mask_refresh: str = "every-forward"
    augment_flip: bool = True


def sgd_step(params: Sequence[Param], cfg: TrainConfig) -> None:
    """v <- momentum*v + grad + weight_decay*w; w <- w - lr*v."""
    for p in params:
        p.velocity = cfg.momentum * p.velocity + p.grad + cfg.weight_decay * p.value
        p.value = p.value - cfg.learning_rate * p.velocity


@dataclass
class TrainResult:
    epoch_losses: list[float] = field(default_factory=list)
    wall_seconds: float = 0.0


def train_network(net: Network, data: Dataset, cfg: TrainConfig) -> TrainResult:
    """Deterministic SGD training of ``net`` on ``data``'s train split."""
    if cfg.epochs < 1 or cfg.batch_size < 1:
        raise ValidationError("epochs and batch_size must be >= 1")
    net.set_mask_refresh(cfg.mask_refresh)
    shuffle_rng = RngStream(cfg.seed).derive(1)
    flip_rng = RngStream(cfg.seed).derive(2)
    n = data.train_images.shape[0]
    result = TrainResult()
    start = time.perf_counter()
    for epoch in range(cfg.epochs):
        net.set_epoch(epoch)
        order = shuffle_rng.permutation(n)
        losses = []
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            x = data.train_images[idx]
            y = data.train_labels[idx]
            if cfg.augment_flip:
                flips = flip_rng.uniform(len(idx)) < 0.5
                if flips.any():
                    x = x.copy()
                    x[flips] = x[flips][:, :, :, ::-1]
            logits = net.forward(x, train=True)
            loss, dlogits = softmax_cross_entropy(logits, y)
            net.backward(dlogits)
            sgd_step(net.params(), cfg)
            losses.append(loss)
        result.epoch_losses.append(float(np.mean(losses)))
    result.wall_seconds = time.perf_counter() - start
    return result


def evaluate(net: Network, images: np.ndarray, labels: np.ndarray, batch_size: int = 256) -> float:
    """Top-1 accuracy in percent."""
    correct = 0
    for lo in range(0, images.shape[0], batch_size):
        logits = net.forward(images[lo : lo + batch_size], train=False)
        correct += int((logits.argmax(axis=1) == labels[lo : lo + batch_size]).sum())
    return 100.0 * correct / images.shape[0]


def packed_divergence(net: Network, images: np.ndarray, batch_size: int = 64) -> float:
    """Max |packed - dense| logit gap over the given images (inference mode)."""
    worst = 0.0
    for lo in range(0, images.shape[0], batch_size):
        batch = images[lo : lo + batch_size]
        dense = net.forward(batch, train=False)
        packed = net.forward_packed(batch)
        worst = max(worst, float(np.max(np.abs(dense - packed))))
    return worst


@dataclass(frozen=True)
class SweepPoint:
    """One sweep configuration; ``None`` bits mean full precision."""

    point_id: str
    weight_bits: float | None
    input_bits: float | None = None
    heuristic: str = "middle-out"
    policy: str = "adjacent"

    def weight_quant(self, seed: int = 0) -> QuantSpec | None:
        if self.weight_bits is None:
            return None
        return QuantSpec(self.weight_bits, self.heuristic, self.policy, seed=seed)

    def input_quant(self, seed: int = 0) -> QuantSpec | None:
        if self.input_bits is None:
            return None
        return QuantSpec(self.input_bits, self.heuristic, self.policy, seed=seed)

    def describe_bits(self, which: float | None) -> str:
        return "full" if which is None else f"{which:g}"


@dataclass(frozen=True)
class SweepRow:
    point_id: str
    m_bits: str
    n_bits: str
    heuristic: str
    distribution: str
    seed: int
    top1: float
    wall_seconds: float


NetworkBuilder = Callable[[SweepPoint, int], Network]


def run_sweep(
    data: Dataset,
    builder: NetworkBuilder,
    points: Sequence[SweepPoint],
    cfg: TrainConfig,
    seeds: Sequence[int],
    checkpoint_sink: Callable[[SweepPoint, int, Network], None] | None = None,
) -> list[SweepRow]:
    """Train one model per (point, seed) and report test accuracy rows."""
    if not points or not seeds:
        raise ValidationError("run_sweep needs at least one point and one seed")
    rows = []
    for point in points:
        for seed in seeds:
            run_cfg = TrainConfig(**{**cfg.__dict__, "seed": int(seed)})
            net = builder(point, int(seed))
            result = train_network(net, data, run_cfg)
            top1 = evaluate(net, data.test_images, data.test_labels)
            if checkpoint_sink is not None:
                checkpoint_sink(point, int(seed), net)
            rows.append(
                SweepRow(
                    point_id=point.point_id,
                    m_bits=point.describe_bits(point.input_bits),
                    n_bits=point.describe_bits(point.weight_bits),
                    heuristic=point.heuristic,
                    distribution=point.policy if isinstance(point.policy, str) else "preset",
                    seed=int(seed),
                    top1=top1,
                    wall_seconds=result.wall_seconds,
                )
            )
    return rows


def mean_accuracy(rows: Sequence[SweepRow], point_id: str) -> float:
    vals = [r.top1 for r in rows if r.point_id == point_id]
    if not vals:
        raise ValidationError(f"no rows for point {point_id!r}")
    return float(np.mean(vals))
