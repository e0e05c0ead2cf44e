"""Network layers with explicit forward/backward passes (NCHW, float64).

Training keeps full-precision shadow weights. Quantized layers binarize the
shadow values on each forward pass; gradients return to the shadow weights
through the clipped pass-through rule evaluated at the stored
pre-binarization values, so binarization never overwrites what SGD updates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..binarize import HeterogeneousBinaryTensor, hetero_binarize, reconstruct, ste_gradient
from ..bitalloc import generate_mask
from ..errors import ShapeError, ValidationError
from ..packed import pack_sign_matrix, xnor_matmul
from ..tensor import RngStream


class Param:
    """Trainable tensor plus its gradient and SGD momentum buffer."""

    __slots__ = ("name", "value", "grad", "velocity")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.velocity = np.zeros_like(self.value)


@dataclass(frozen=True)
class QuantSpec:
    """How to binarize one tensor: target average bitwidth plus mask policy."""

    avg_bits: float
    heuristic: str = "middle-out"
    policy: str | Mapping[int, float] = "adjacent"
    seed: int = 0

    def describe(self) -> str:
        policy = self.policy if isinstance(self.policy, str) else ",".join(
            f"{b}={p:g}" for b, p in sorted(self.policy.items())
        )
        return f"{self.avg_bits:g}:{self.heuristic}:{policy}"


REFRESH_POLICIES = ("every-forward", "every-epoch")  # plus "frozen-after-epoch:K"


class WeightBinarizer:
    """Mask-refresh state machine for one quantized weight tensor."""

    def __init__(self, spec: QuantSpec):
        self.spec = spec
        self.refresh = "every-forward"
        self.epoch = 0
        self._frozen_after: int | None = None
        self._mask: np.ndarray | None = None
        self._mask_epoch: int | None = None

    def set_refresh(self, policy: str) -> None:
        if policy.startswith("frozen-after-epoch:"):
            self._frozen_after = int(policy.split(":", 1)[1])
        elif policy in REFRESH_POLICIES:
            self._frozen_after = None
        else:
            raise ValidationError(f"unknown mask refresh policy {policy!r}")
        self.refresh = policy

    def _should_recompute(self, train: bool) -> bool:
        if self._mask is None:
            return True
        if not train:
            return self.refresh == "every-forward" and self._frozen_after is None
        if self._frozen_after is not None:
            return self.epoch < self._frozen_after
        if self.refresh == "every-epoch":
            return self._mask_epoch != self.epoch
        return True

    def binarize(self, w: np.ndarray, train: bool) -> HeterogeneousBinaryTensor:
        if self._should_recompute(train):
            self._mask = generate_mask(
                w, self.spec.avg_bits, self.spec.heuristic, self.spec.policy, seed=self.spec.seed
            )
            self._mask_epoch = self.epoch
        return hetero_binarize(w, self._mask)

    @property
    def mask(self) -> np.ndarray | None:
        return self._mask


class Layer:
    """Base layer: forward caches whatever backward needs."""

    def __init__(self, name: str):
        self.name = name

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> list[Param]:
        return []

    @property
    def binarizers(self) -> list[WeightBinarizer]:
        return []


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    span = size + 2 * pad - kernel
    if span < 0:
        raise ShapeError(f"kernel {kernel} with pad {pad} exceeds input size {size}")
    return span // stride + 1


def im2col(x: np.ndarray, kernel: int, stride: int, pad: int) -> np.ndarray:
    """(N, C, H, W) -> (C*k*k, N*Ho*Wo) patch matrix (zero padding)."""
    n, c, h, w = x.shape
    ho = conv_output_size(h, kernel, stride, pad)
    wo = conv_output_size(w, kernel, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    windows = sliding_window_view(xp, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
    return np.ascontiguousarray(windows.transpose(1, 4, 5, 0, 2, 3)).reshape(
        c * kernel * kernel, n * ho * wo
    )


def col2im(cols: np.ndarray, x_shape, kernel: int, stride: int, pad: int) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add patch gradients back to the input."""
    n, c, h, w = x_shape
    ho = conv_output_size(h, kernel, stride, pad)
    wo = conv_output_size(w, kernel, stride, pad)
    patches = cols.reshape(c, kernel, kernel, n, ho, wo)
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    for i in range(kernel):
        for j in range(kernel):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += (
                patches[:, i, j].transpose(1, 0, 2, 3)
            )
    return out[:, :, pad : pad + h, pad : pad + w] if pad else out


def _fan_in_uniform(rng: RngStream, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return (2.0 * rng.uniform(int(np.prod(shape))) - 1.0).reshape(shape) * bound


class Conv2d(Layer):
    def __init__(self, name, in_channels, out_channels, kernel, stride=1, pad=0,
                 bias=False, weight_quant: QuantSpec | None = None, rng: RngStream | None = None):
        super().__init__(name)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.pad = pad
        rng = rng or RngStream(0)
        shape = (out_channels, in_channels, kernel, kernel)
        self.w = Param(f"{name}.w", _fan_in_uniform(rng, shape, in_channels * kernel * kernel))
        self.b = Param(f"{name}.b", np.zeros(out_channels)) if bias else None
        self.binarizer = WeightBinarizer(weight_quant) if weight_quant else None

    def params(self):
        return [self.w] + ([self.b] if self.b is not None else [])

    @property
    def binarizers(self):
        return [self.binarizer] if self.binarizer else []

    def _weight_matrix(self, train: bool) -> np.ndarray:
        wm = self.w.value.reshape(self.out_channels, -1)
        if self.binarizer is None:
            return wm
        self._wh = self.binarizer.binarize(wm, train)
        return reconstruct(self._wh)

    def forward(self, x, train=True):
        cols = im2col(x, self.kernel, self.stride, self.pad)
        wq = self._weight_matrix(train)
        out = wq @ cols
        if self.b is not None:
            out += self.b.value[:, None]
        self._cache = (x.shape, cols, wq)
        n = x.shape[0]
        ho = conv_output_size(x.shape[2], self.kernel, self.stride, self.pad)
        wo = conv_output_size(x.shape[3], self.kernel, self.stride, self.pad)
        return out.reshape(self.out_channels, n, ho, wo).transpose(1, 0, 2, 3)

    def backward(self, grad):
        x_shape, cols, wq = self._cache
        gmat = grad.transpose(1, 0, 2, 3).reshape(self.out_channels, -1)
        dwq = gmat @ cols.T
        wm = self.w.value.reshape(self.out_channels, -1)
        dw = ste_gradient(wm, dwq) if self.binarizer else dwq
        self.w.grad = dw.reshape(self.w.value.shape)
        if self.b is not None:
            self.b.grad = gmat.sum(axis=1)
        return col2im(wq.T @ gmat, x_shape, self.kernel, self.stride, self.pad)

    def forward_packed(self, h_in: HeterogeneousBinaryTensor, x_shape) -> np.ndarray:
        """Inference via xnor-popcount on a plane-decomposed input tensor.

        Zero-padded positions show up as inactive bits, which drop out of the
        packed product exactly like multiplying by literal zeros.
        """
        if self.binarizer is None:
            raise ValidationError(f"{self.name}: packed path requires quantized weights")
        n, _, h, w = x_shape
        ho = conv_output_size(h, self.kernel, self.stride, self.pad)
        wo = conv_output_size(w, self.kernel, self.stride, self.pad)
        sign_cols = [
            im2col(p.signs.reshape(x_shape).astype(np.float64), self.kernel, self.stride, self.pad)
            .T.astype(np.int8)
            for p in h_in.planes
        ]
        cols_packed = pack_sign_matrix([p.scale for p in h_in.planes], sign_cols)
        wq = self._weight_matrix(train=False)  # refreshes self._wh
        rows_packed = pack_sign_matrix(
            self._wh.scales(), [p.signs for p in self._wh.planes]
        )
        out = xnor_matmul(rows_packed, cols_packed)
        if self.b is not None:
            out += self.b.value[:, None]
        return out.reshape(self.out_channels, n, ho, wo).transpose(1, 0, 2, 3)


class PointwiseConv2d(Layer):
    """1x1 convolution mixing channels per pixel."""

    def __init__(self, name, in_channels, out_channels, bias=False,
                 weight_quant: QuantSpec | None = None, rng: RngStream | None = None):
        super().__init__(name)
        self.in_channels = in_channels
        self.out_channels = out_channels
        rng = rng or RngStream(0)
        self.w = Param(f"{name}.w", _fan_in_uniform(rng, (out_channels, in_channels), in_channels))
        self.b = Param(f"{name}.b", np.zeros(out_channels)) if bias else None
        self.binarizer = WeightBinarizer(weight_quant) if weight_quant else None

    def params(self):
        return [self.w] + ([self.b] if self.b is not None else [])

    @property
    def binarizers(self):
        return [self.binarizer] if self.binarizer else []

    def _weights(self, train):
        if self.binarizer is None:
            return self.w.value
        self._wh = self.binarizer.binarize(self.w.value, train)
        return reconstruct(self._wh)

    def forward(self, x, train=True):
        wq = self._weights(train)
        out = np.tensordot(wq, x, axes=(1, 1)).transpose(1, 0, 2, 3)
        if self.b is not None:
            out += self.b.value[None, :, None, None]
        self._cache = (x, wq)
        return out

    def backward(self, grad):
        x, wq = self._cache
        dwq = np.einsum("nohw,nchw->oc", grad, x)
        self.w.grad = ste_gradient(self.w.value, dwq) if self.binarizer else dwq
        if self.b is not None:
            self.b.grad = grad.sum(axis=(0, 2, 3))
        return np.einsum("oc,nohw->nchw", wq, grad)

    def forward_packed(self, h_in: HeterogeneousBinaryTensor, x_shape) -> np.ndarray:
        if self.binarizer is None:
            raise ValidationError(f"{self.name}: packed path requires quantized weights")
        n, c, h, w = x_shape
        # Each pixel's channel vector is one packed operand: (N*H*W, C).
        sign_cols = [
            p.signs.reshape(x_shape).transpose(0, 2, 3, 1).reshape(-1, c) for p in h_in.planes
        ]
        cols_packed = pack_sign_matrix([p.scale for p in h_in.planes], sign_cols)
        self._weights(train=False)
        rows_packed = pack_sign_matrix(self._wh.scales(), [p.signs for p in self._wh.planes])
        out = xnor_matmul(rows_packed, cols_packed)  # (O, N*H*W)
        if self.b is not None:
            out += self.b.value[:, None]
        return out.reshape(self.out_channels, n, h, w).transpose(1, 0, 2, 3)


class DepthwiseConv2d(Layer):
    """Per-channel spatial convolution (no channel mixing)."""

    def __init__(self, name, channels, kernel, stride=1, pad=0,
                 weight_quant: QuantSpec | None = None, rng: RngStream | None = None):
        super().__init__(name)
        self.channels = channels
        self.kernel = kernel
        self.stride = stride
        self.pad = pad
        rng = rng or RngStream(0)
        self.w = Param(f"{name}.w", _fan_in_uniform(rng, (channels, kernel, kernel), kernel * kernel))
        self.binarizer = WeightBinarizer(weight_quant) if weight_quant else None

    def params(self):
        return [self.w]

    @property
    def binarizers(self):
        return [self.binarizer] if self.binarizer else []

    def forward(self, x, train=True):
        if self.binarizer is not None:
            self._wh = self.binarizer.binarize(self.w.value, train)
            wq = reconstruct(self._wh)
        else:
            wq = self.w.value
        xp = np.pad(x, ((0, 0), (0, 0), (self.pad, self.pad), (self.pad, self.pad))) if self.pad else x
        windows = sliding_window_view(xp, (self.kernel, self.kernel), axis=(2, 3))[
            :, :, :: self.stride, :: self.stride
        ]
        self._cache = (x.shape, windows, wq)
        return np.einsum("nchwij,cij->nchw", windows, wq)

    def backward(self, grad):
        x_shape, windows, wq = self._cache
        dwq = np.einsum("nchwij,nchw->cij", windows, grad)
        self.w.grad = ste_gradient(self.w.value, dwq) if self.binarizer else dwq
        n, c, h, w = x_shape
        out = np.zeros((n, c, h + 2 * self.pad, w + 2 * self.pad), dtype=np.float64)
        ho, wo = grad.shape[2], grad.shape[3]
        for i in range(self.kernel):
            for j in range(self.kernel):
                out[:, :, i : i + self.stride * ho : self.stride, j : j + self.stride * wo : self.stride] += (
                    grad * wq[None, :, i, j, None, None]
                )
        return out[:, :, self.pad : self.pad + h, self.pad : self.pad + w] if self.pad else out


class Dense(Layer):
    def __init__(self, name, in_features, out_features, bias=True,
                 weight_quant: QuantSpec | None = None, rng: RngStream | None = None):
        super().__init__(name)
        self.in_features = in_features
        self.out_features = out_features
        rng = rng or RngStream(0)
        self.w = Param(f"{name}.w", _fan_in_uniform(rng, (out_features, in_features), in_features))
        self.b = Param(f"{name}.b", np.zeros(out_features)) if bias else None
        self.binarizer = WeightBinarizer(weight_quant) if weight_quant else None

    def params(self):
        return [self.w] + ([self.b] if self.b is not None else [])

    @property
    def binarizers(self):
        return [self.binarizer] if self.binarizer else []

    def forward(self, x, train=True):
        if self.binarizer is not None:
            self._wh = self.binarizer.binarize(self.w.value, train)
            wq = reconstruct(self._wh)
        else:
            wq = self.w.value
        self._cache = (x, wq)
        out = x @ wq.T
        if self.b is not None:
            out += self.b.value
        return out

    def backward(self, grad):
        x, wq = self._cache
        dwq = grad.T @ x
        self.w.grad = ste_gradient(self.w.value, dwq) if self.binarizer else dwq
        if self.b is not None:
            self.b.grad = grad.sum(axis=0)
        return grad @ wq

    def forward_packed(self, h_in: HeterogeneousBinaryTensor, x_shape) -> np.ndarray:
        if self.binarizer is None:
            raise ValidationError(f"{self.name}: packed path requires quantized weights")
        rows_in = [p.signs.reshape(x_shape) for p in h_in.planes]
        cols_packed = pack_sign_matrix([p.scale for p in h_in.planes], rows_in)
        if self.binarizer is not None:
            self._wh = self.binarizer.binarize(self.w.value, train=False)
        rows_packed = pack_sign_matrix(self._wh.scales(), [p.signs for p in self._wh.planes])
        out = xnor_matmul(rows_packed, cols_packed).T  # (N, O)
        if self.b is not None:
            out += self.b.value
        return out


class BatchNorm2d(Layer):
    def __init__(self, name, channels, momentum=0.9, eps=1e-5):
        super().__init__(name)
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = Param(f"{name}.gamma", np.ones(channels))
        self.beta = Param(f"{name}.beta", np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def params(self):
        return [self.gamma, self.beta]

    def forward(self, x, train=True):
        if train:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
        else:
            mean, var = self.running_mean, self.running_var
        istd = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None, None]) * istd[None, :, None, None]
        self._cache = (xhat, istd, x.shape)
        return self.gamma.value[None, :, None, None] * xhat + self.beta.value[None, :, None, None]

    def backward(self, grad):
        xhat, istd, x_shape = self._cache
        m = x_shape[0] * x_shape[2] * x_shape[3]
        self.gamma.grad = (grad * xhat).sum(axis=(0, 2, 3))
        self.beta.grad = grad.sum(axis=(0, 2, 3))
        dxhat = grad * self.gamma.value[None, :, None, None]
        sum_dxhat = dxhat.sum(axis=(0, 2, 3))
        sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3))
        return (istd[None, :, None, None] / m) * (
            m * dxhat - sum_dxhat[None, :, None, None] - xhat * sum_dxhat_xhat[None, :, None, None]
        )


class ReLU(Layer):
    def forward(self, x, train=True):
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad):
        return grad * self._mask


class InputBinarize(Layer):
    """Binarizes the incoming activation tensor with a fresh mask each call."""

    def __init__(self, name, spec: QuantSpec):
        super().__init__(name)
        self.spec = spec
        self.last_h: HeterogeneousBinaryTensor | None = None

    def forward(self, x, train=True):
        mask = generate_mask(x, self.spec.avg_bits, self.spec.heuristic, self.spec.policy,
                             seed=self.spec.seed)
        h = hetero_binarize(x, mask)
        self.last_h = h
        self._cache = x
        return reconstruct(h)

    def backward(self, grad):
        return ste_gradient(self._cache, grad)


class Scaling(Layer):
    """Single learnable scalar multiplier (tames binary-layer output magnitude)."""

    def __init__(self, name, init_value=0.01):
        super().__init__(name)
        self.s = Param(f"{name}.s", np.array(float(init_value)))

    def params(self):
        return [self.s]

    def forward(self, x, train=True):
        self._cache = x
        return float(self.s.value) * x

    def backward(self, grad):
        self.s.grad = np.array(float((grad * self._cache).sum()))
        return float(self.s.value) * grad


class Flatten(Layer):
    def forward(self, x, train=True):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise ShapeError(f"logits {logits.shape} do not match labels {labels.shape}")
    z = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(z)
    probs = expz / expz.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    loss = float(-np.mean(np.log(probs[np.arange(n), labels] + 1e-300)))
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n
