"""Declarative network specs compiled into runnable layer stacks."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import NumericError, ShapeError, ValidationError
from ..tensor import RngStream
from .layers import (
    BatchNorm2d,
    Conv2d,
    Dense,
    DepthwiseConv2d,
    Flatten,
    InputBinarize,
    Layer,
    Param,
    PointwiseConv2d,
    QuantSpec,
    ReLU,
    Scaling,
    conv_output_size,
)

KINDS = (
    "conv2d",
    "depthwise-conv2d",
    "pointwise-conv2d",
    "dense",
    "batch-norm",
    "relu",
    "activation-binarize",
    "scaling",
    "flatten",
)
PARAMETERIZED_KINDS = ("conv2d", "depthwise-conv2d", "pointwise-conv2d", "dense")


@dataclass(frozen=True)
class LayerSpec:
    """One layer: kind, geometry where applicable, and optional quantization."""

    kind: str
    out_channels: int | None = None
    kernel: int | None = None
    stride: int = 1
    pad: int = 0
    features: int | None = None
    bias: bool = False
    init_value: float = 0.01
    weight_quant: QuantSpec | None = None
    input_quant: QuantSpec | None = None


@dataclass(frozen=True)
class NetworkSpec:
    """Input geometry plus the layer stack; exclude_io strips input
    quantization from the first and last parameterized layers."""

    input_shape: tuple[int, int, int]  # (C, H, W)
    layers: tuple[LayerSpec, ...]
    exclude_io: bool = True
    name: str = "net"


def _apply_exclude_io(layers: tuple[LayerSpec, ...]) -> tuple[LayerSpec, ...]:
    parameterized = [i for i, spec in enumerate(layers) if spec.kind in PARAMETERIZED_KINDS]
    if not parameterized:
        return layers
    out = list(layers)
    for idx in {parameterized[0], parameterized[-1]}:
        if out[idx].input_quant is not None:
            out[idx] = replace(out[idx], input_quant=None)
    return tuple(out)


class Network:
    """Sequential layer stack with shared forward/backward plumbing."""

    def __init__(self, layers: list[Layer], name: str = "net"):
        self.layers = layers
        self.name = name

    def params(self) -> list[Param]:
        return [p for layer in self.layers for p in layer.params()]

    def binarizers(self):
        return [b for layer in self.layers for b in layer.binarizers]

    def set_epoch(self, epoch: int) -> None:
        for binarizer in self.binarizers():
            binarizer.epoch = epoch

    def set_mask_refresh(self, policy: str) -> None:
        for binarizer in self.binarizers():
            binarizer.set_refresh(policy)

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        out = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            out = layer.forward(out, train=train)
            if not np.all(np.isfinite(out)):
                raise NumericError(f"non-finite activations after layer {layer.name!r}")
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        grad = dout
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def forward_packed(self, x: np.ndarray) -> np.ndarray:
        """Inference forward where binarized-input x binarized-weight layers run
        on the packed xnor-popcount kernel; everything else uses the dense path."""
        out = np.asarray(x, dtype=np.float64)
        pending = None  # (decomposition, shape) from the preceding InputBinarize
        for layer in self.layers:
            if (
                pending is not None
                and isinstance(layer, (Conv2d, PointwiseConv2d, Dense))
                and layer.binarizer is not None
            ):
                out = layer.forward_packed(pending[0], pending[1])
            else:
                out = layer.forward(out, train=False)
            if isinstance(layer, InputBinarize):
                pending = (layer.last_h, out.shape)
            else:
                pending = None
            if not np.all(np.isfinite(out)):
                raise NumericError(f"non-finite activations after layer {layer.name!r}")
        return out

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Shadow weights keyed by parameter name (checkpoint payload)."""
        return {p.name: p.value.copy() for p in self.params()}


def build_network(spec: NetworkSpec, seed: int) -> Network:
    """Compile a spec; weight init is fan-in-scaled uniform from the seed."""
    rng = RngStream(seed)
    layer_specs = _apply_exclude_io(spec.layers) if spec.exclude_io else spec.layers
    layers: list[Layer] = []
    shape: tuple = tuple(spec.input_shape)  # (C, H, W) or (features,)
    counts: dict[str, int] = {}

    def fresh(kind: str) -> str:
        counts[kind] = counts.get(kind, 0) + 1
        return f"{kind}{counts[kind]}"

    for ls in layer_specs:
        if ls.kind not in KINDS:
            raise ValidationError(f"unknown layer kind {ls.kind!r}; expected one of {KINDS}")
        if ls.input_quant is not None and ls.kind in PARAMETERIZED_KINDS:
            layers.append(InputBinarize(fresh("binarize"), ls.input_quant))
        if ls.kind == "conv2d":
            c, h, w = _need_spatial(shape, ls)
            layer = Conv2d(fresh("conv"), c, ls.out_channels, ls.kernel, ls.stride, ls.pad,
                           bias=ls.bias, weight_quant=ls.weight_quant, rng=rng)
            shape = (
                ls.out_channels,
                conv_output_size(h, ls.kernel, ls.stride, ls.pad),
                conv_output_size(w, ls.kernel, ls.stride, ls.pad),
            )
        elif ls.kind == "depthwise-conv2d":
            c, h, w = _need_spatial(shape, ls)
            layer = DepthwiseConv2d(fresh("dwconv"), c, ls.kernel, ls.stride, ls.pad,
                                    weight_quant=ls.weight_quant, rng=rng)
            shape = (
                c,
                conv_output_size(h, ls.kernel, ls.stride, ls.pad),
                conv_output_size(w, ls.kernel, ls.stride, ls.pad),
            )
        elif ls.kind == "pointwise-conv2d":
            c, h, w = _need_spatial(shape, ls)
            layer = PointwiseConv2d(fresh("pwconv"), c, ls.out_channels, bias=ls.bias,
                                    weight_quant=ls.weight_quant, rng=rng)
            shape = (ls.out_channels, h, w)
        elif ls.kind == "dense":
            if len(shape) != 1:
                raise ShapeError(f"dense layer needs flat input, have shape {shape}")
            layer = Dense(fresh("dense"), shape[0], ls.features, bias=ls.bias,
                          weight_quant=ls.weight_quant, rng=rng)
            shape = (ls.features,)
        elif ls.kind == "batch-norm":
            if len(shape) != 3:
                raise ShapeError("batch-norm needs NCHW input")
            layer = BatchNorm2d(fresh("bn"), shape[0])
        elif ls.kind == "relu":
            layer = ReLU(fresh("relu"))
        elif ls.kind == "activation-binarize":
            if ls.input_quant is None:
                raise ValidationError("activation-binarize layer needs input_quant")
            layer = InputBinarize(fresh("binarize"), ls.input_quant)
        elif ls.kind == "scaling":
            layer = Scaling(fresh("scale"), ls.init_value)
        else:  # flatten
            layer = Flatten(fresh("flatten"))
            shape = (int(np.prod(shape)),)
        layers.append(layer)
    return Network(layers, name=spec.name)


def _need_spatial(shape, ls: LayerSpec):
    if len(shape) != 3:
        raise ShapeError(f"{ls.kind} needs NCHW input, have shape {shape}")
    return shape


def convnet4_spec(
    weight_quant: QuantSpec | None = None,
    input_quant: QuantSpec | None = None,
    channels: tuple[int, int, int] = (16, 32, 32),
    n_classes: int = 10,
    image_size: int = 32,
    exclude_io: bool = True,
    layer_weight_quants: tuple[QuantSpec | None, ...] | None = None,
) -> NetworkSpec:
    """Deliberately small 4-layer fully convolutional classifier.

    ``layer_weight_quants`` overrides the shared weight quantization with one
    spec per conv layer (layer-level heterogeneous sweeps).
    """
    c1, c2, c3 = channels
    wq = list(layer_weight_quants) if layer_weight_quants else [weight_quant] * 4
    if len(wq) != 4:
        raise ValidationError("layer_weight_quants must name all 4 conv layers")
    final_kernel = image_size // 4
    layers = (
        LayerSpec("conv2d", out_channels=c1, kernel=3, stride=1, pad=1,
                  weight_quant=wq[0], input_quant=input_quant),
        LayerSpec("batch-norm"),
        LayerSpec("relu"),
        LayerSpec("conv2d", out_channels=c2, kernel=3, stride=2, pad=1,
                  weight_quant=wq[1], input_quant=input_quant),
        LayerSpec("batch-norm"),
        LayerSpec("relu"),
        LayerSpec("conv2d", out_channels=c3, kernel=3, stride=2, pad=1,
                  weight_quant=wq[2], input_quant=input_quant),
        LayerSpec("batch-norm"),
        LayerSpec("relu"),
        LayerSpec("conv2d", out_channels=n_classes, kernel=final_kernel, stride=1, pad=0,
                  bias=True, weight_quant=wq[3], input_quant=input_quant),
        LayerSpec("scaling"),
        LayerSpec("flatten"),
    )
    return NetworkSpec((3, image_size, image_size), layers, exclude_io=exclude_io, name="convnet4")


def dsconv3_spec(
    pointwise_quant: QuantSpec | None = None,
    input_quant: QuantSpec | None = None,
    channels: tuple[int, int, int] = (16, 32, 64),
    n_classes: int = 10,
    image_size: int = 32,
    exclude_io: bool = True,
) -> NetworkSpec:
    """3-block depthwise-separable classifier.

    Only the channel-mixing pointwise weights carry quantization; the spatial
    depthwise weights stay full precision.
    """
    c1, c2, c3 = channels
    layers: list[LayerSpec] = [
        LayerSpec("conv2d", out_channels=c1, kernel=3, stride=2, pad=1),
        LayerSpec("batch-norm"),
        LayerSpec("relu"),
    ]
    for c_out, stride in ((c2, 2), (c3, 2), (c3, 1)):
        layers += [
            LayerSpec("depthwise-conv2d", kernel=3, stride=stride, pad=1),
            LayerSpec("batch-norm"),
            LayerSpec("relu"),
            LayerSpec("pointwise-conv2d", out_channels=c_out,
                      weight_quant=pointwise_quant, input_quant=input_quant),
            LayerSpec("batch-norm"),
            LayerSpec("relu"),
        ]
    layers += [
        LayerSpec("flatten"),
        LayerSpec("dense", features=n_classes, bias=True),
        LayerSpec("scaling"),
    ]
    return NetworkSpec((3, image_size, image_size), tuple(layers), exclude_io=exclude_io, name="dsconv3")
