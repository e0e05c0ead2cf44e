"""Desk-scale training harness: quantized layers, SGD, and sweep drivers."""

from .data import Dataset, load_binary_dataset, load_dataset, save_binary_dataset, synthetic_dataset
from .layers import (
    BatchNorm2d,
    Conv2d,
    Dense,
    DepthwiseConv2d,
    Flatten,
    InputBinarize,
    Param,
    PointwiseConv2d,
    QuantSpec,
    ReLU,
    Scaling,
    WeightBinarizer,
    col2im,
    im2col,
    softmax_cross_entropy,
)
from .network import (
    KINDS,
    LayerSpec,
    Network,
    NetworkSpec,
    build_network,
    convnet4_spec,
    dsconv3_spec,
)
from .train import (
    SweepPoint,
    SweepRow,
    TrainConfig,
    TrainResult,
    evaluate,
    mean_accuracy,
    packed_divergence,
    run_sweep,
    sgd_step,
    train_network,
)

__all__ = [
    "BatchNorm2d",
    "Conv2d",
    "Dataset",
    "Dense",
    "DepthwiseConv2d",
    "Flatten",
    "InputBinarize",
    "KINDS",
    "LayerSpec",
    "Network",
    "NetworkSpec",
    "Param",
    "PointwiseConv2d",
    "QuantSpec",
    "ReLU",
    "Scaling",
    "SweepPoint",
    "SweepRow",
    "TrainConfig",
    "TrainResult",
    "WeightBinarizer",
    "build_network",
    "col2im",
    "convnet4_spec",
    "dsconv3_spec",
    "evaluate",
    "im2col",
    "load_binary_dataset",
    "load_dataset",
    "mean_accuracy",
    "packed_divergence",
    "run_sweep",
    "save_binary_dataset",
    "sgd_step",
    "softmax_cross_entropy",
    "synthetic_dataset",
    "train_network",
]
