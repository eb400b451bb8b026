#!/usr/bin/env python3
"""
Neural Network Kernels - Dense NHWC tensor ops with reverse-mode gradients

Functional kernels (convolution, depthwise-separable convolution, ReLU,
max-pool, global average pool, dense, residual add, sigmoid/softmax
cross-entropy) plus Layer objects that cache their inputs on forward and
accumulate parameter gradients on backward, and the Adam optimizer.

Tensors are numpy arrays: NHWC activations, KhKwCinCout conv kernels.
float32 is the production dtype; build layers with dtype=np.float64 for
gradient verification.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, log_softmax, softmax

from core.errors import ShapeMismatchError

# When enabled, every layer output is checked for NaN/Inf
DEBUG_CHECKS = False


def set_debug_checks(enabled: bool) -> None:
    """Toggle NaN/Inf rejection at layer boundaries"""
    global DEBUG_CHECKS
    DEBUG_CHECKS = bool(enabled)


def check_finite(tensor: np.ndarray, where: str) -> np.ndarray:
    """Raise FloatingPointError if the tensor holds NaN or Inf"""
    if not np.isfinite(tensor).all():
        raise FloatingPointError(f"Non-finite values produced by {where}")
    return tensor


# ============================================================================
# PARAMETERS AND OPTIMIZER
# ============================================================================

class LayerParam:
    """Weights with their gradient and Adam moment buffers (all one shape)"""

    def __init__(self, name: str, weights: np.ndarray):
        self.name = name
        self.weights = weights
        self.gradient = np.zeros_like(weights)
        self.adam_m = np.zeros_like(weights)
        self.adam_v = np.zeros_like(weights)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.weights.shape

    def zero_grad(self) -> None:
        self.gradient.fill(0)

    def __repr__(self) -> str:
        return f"LayerParam({self.name!r}, shape={self.weights.shape})"


@dataclass
class AdamConfig:
    """Adam hyperparameters and step counter"""
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"Learning rate must be positive, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")

    def to_dict(self) -> Dict[str, float]:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
                "epsilon": self.epsilon, "step": self.step}


def adam_step(params: Iterable[LayerParam], cfg: AdamConfig) -> None:
    """
    One bias-corrected Adam update of every parameter, in place

    m <- b1 m + (1 - b1) g;  v <- b2 v + (1 - b2) g^2
    w <- w - lr * m_hat / (sqrt(v_hat) + eps)
    """
    cfg.step += 1
    t = cfg.step
    correction1 = 1.0 - cfg.beta1 ** t
    correction2 = 1.0 - cfg.beta2 ** t
    for p in params:
        g = p.gradient
        p.adam_m *= cfg.beta1
        p.adam_m += (1.0 - cfg.beta1) * g
        p.adam_v *= cfg.beta2
        p.adam_v += (1.0 - cfg.beta2) * g * g
        m_hat = p.adam_m / correction1
        v_hat = p.adam_v / correction2
        p.weights -= (cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.epsilon)).astype(p.weights.dtype)


def fan_in_uniform(rng: np.random.Generator, shape: Sequence[int], fan_in: int,
                   dtype=np.float32) -> np.ndarray:
    """He-uniform initialization: U(-sqrt(6 / fan_in), sqrt(6 / fan_in))"""
    limit = np.sqrt(6.0 / max(fan_in, 1))
    return rng.uniform(-limit, limit, size=tuple(shape)).astype(dtype)


# ============================================================================
# FUNCTIONAL KERNELS
# ============================================================================

def output_extent(extent: int, kernel: int, stride: int, padding: str) -> Tuple[int, int, int]:
    """
    Output size and (before, after) padding along one axis

    'same' follows the ceil(extent / stride) convention with the extra pad
    after; 'valid' uses no padding.
    """
    if padding == "same":
        out = -(-extent // stride)
        total = max((out - 1) * stride + kernel - extent, 0)
        return out, total // 2, total - total // 2
    if padding == "valid":
        if extent < kernel:
            raise ShapeMismatchError(f"Input extent {extent} smaller than kernel {kernel}")
        return (extent - kernel) // stride + 1, 0, 0
    raise ValueError(f"Unknown padding mode: {padding}")


def _pad_input(x: np.ndarray, kh: int, kw: int, stride: int, padding: str,
               fill: float = 0.0) -> Tuple[np.ndarray, int, int, Tuple[int, int, int, int]]:
    if x.ndim != 4:
        raise ShapeMismatchError(f"Expected an NHWC tensor, got shape {x.shape}")
    _, height, width, _ = x.shape
    out_h, top, bottom = output_extent(height, kh, stride, padding)
    out_w, left, right = output_extent(width, kw, stride, padding)
    if top or bottom or left or right:
        x = np.pad(x, ((0, 0), (top, bottom), (left, right), (0, 0)), constant_values=fill)
    return x, out_h, out_w, (top, bottom, left, right)


def _window(xp: np.ndarray, i: int, j: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    """Strided view of the input samples under kernel tap (i, j)"""
    return xp[:, i:i + stride * (out_h - 1) + 1:stride, j:j + stride * (out_w - 1) + 1:stride, :]


def _unpad(dxp: np.ndarray, pads: Tuple[int, int, int, int]) -> np.ndarray:
    top, bottom, left, right = pads
    return dxp[:, top:dxp.shape[1] - bottom, left:dxp.shape[2] - right, :]


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1,
                   padding: str = "same") -> np.ndarray:
    """
    2-D cross-correlation

    Args:
        x: (N, H, W, Cin) input
        w: (Kh, Kw, Cin, Cout) kernel
        b: (Cout,) bias
        stride: Spatial stride
        padding: 'same' or 'valid'

    Returns:
        (N, Ho, Wo, Cout) output
    """
    kh, kw, cin, cout = w.shape
    if x.ndim != 4 or x.shape[3] != cin:
        raise ShapeMismatchError(f"conv2d: input {x.shape} does not match kernel {w.shape}")
    if b.shape != (cout,):
        raise ShapeMismatchError(f"conv2d: bias {b.shape} does not match Cout={cout}")
    xp, out_h, out_w, _ = _pad_input(x, kh, kw, stride, padding)
    out = np.zeros((x.shape[0], out_h, out_w, cout), dtype=np.result_type(x, w))
    for i in range(kh):
        for j in range(kw):
            out += _window(xp, i, j, stride, out_h, out_w) @ w[i, j]
    out += b
    return out


def conv2d_backward(x: np.ndarray, w: np.ndarray, dout: np.ndarray, stride: int = 1,
                    padding: str = "same") -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dx, dw, db) of conv2d_forward"""
    kh, kw, cin, cout = w.shape
    xp, out_h, out_w, pads = _pad_input(x, kh, kw, stride, padding)
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    dout_flat = dout.reshape(-1, cout)
    for i in range(kh):
        for j in range(kw):
            window = _window(xp, i, j, stride, out_h, out_w)
            dw[i, j] = window.reshape(-1, cin).T @ dout_flat
            _window(dxp, i, j, stride, out_h, out_w)[...] += dout @ w[i, j].T
    db = dout_flat.sum(axis=0)
    return _unpad(dxp, pads), dw, db


def depthwise_conv2d_forward(x: np.ndarray, w: np.ndarray, stride: int = 1,
                             padding: str = "same") -> np.ndarray:
    """Per-channel spatial cross-correlation; w is (Kh, Kw, C)"""
    kh, kw, channels = w.shape
    if x.ndim != 4 or x.shape[3] != channels:
        raise ShapeMismatchError(f"depthwise: input {x.shape} does not match kernel {w.shape}")
    xp, out_h, out_w, _ = _pad_input(x, kh, kw, stride, padding)
    out = np.zeros((x.shape[0], out_h, out_w, channels), dtype=np.result_type(x, w))
    for i in range(kh):
        for j in range(kw):
            out += _window(xp, i, j, stride, out_h, out_w) * w[i, j]
    return out


def depthwise_conv2d_backward(x: np.ndarray, w: np.ndarray, dout: np.ndarray, stride: int = 1,
                              padding: str = "same") -> Tuple[np.ndarray, np.ndarray]:
    """Gradients (dx, dw) of depthwise_conv2d_forward"""
    kh, kw, _ = w.shape
    xp, out_h, out_w, pads = _pad_input(x, kh, kw, stride, padding)
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    for i in range(kh):
        for j in range(kw):
            window = _window(xp, i, j, stride, out_h, out_w)
            dw[i, j] = (window * dout).sum(axis=(0, 1, 2))
            _window(dxp, i, j, stride, out_h, out_w)[...] += dout * w[i, j]
    return _unpad(dxp, pads), dw


def separable_conv2d(x: np.ndarray, depthwise_w: np.ndarray, pointwise_w: np.ndarray,
                     b: np.ndarray) -> np.ndarray:
    """
    Depthwise-separable convolution (stride 1, same padding)

    Args:
        x: (N, H, W, Cin) input
        depthwise_w: (Kh, Kw, Cin) per-channel spatial kernels
        pointwise_w: (1, 1, Cin, Cout) cross-channel mixing
        b: (Cout,) bias
    """
    if pointwise_w.ndim != 4 or pointwise_w.shape[:2] != (1, 1):
        raise ShapeMismatchError(f"pointwise kernel must be 1x1xCinxCout, got {pointwise_w.shape}")
    if pointwise_w.shape[2] != depthwise_w.shape[2]:
        raise ShapeMismatchError(
            f"depthwise {depthwise_w.shape} and pointwise {pointwise_w.shape} disagree on Cin"
        )
    spatial = depthwise_conv2d_forward(x, depthwise_w)
    return conv2d_forward(spatial, pointwise_w, b)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def maxpool2d_forward(x: np.ndarray, size: int = 3, stride: int = 2,
                      padding: str = "same") -> Tuple[np.ndarray, np.ndarray]:
    """
    Max pooling

    Returns:
        (output, argmax) where argmax holds the winning tap index i*size + j;
        the first tap wins ties
    """
    xp, out_h, out_w, _ = _pad_input(x, size, size, stride, padding, fill=-np.inf)
    out = np.full((x.shape[0], out_h, out_w, x.shape[3]), -np.inf, dtype=x.dtype)
    argmax = np.zeros(out.shape, dtype=np.int16)
    for i in range(size):
        for j in range(size):
            window = _window(xp, i, j, stride, out_h, out_w)
            better = window > out
            out = np.where(better, window, out)
            argmax[better] = i * size + j
    return out, argmax


def maxpool2d_backward(x: np.ndarray, argmax: np.ndarray, dout: np.ndarray, size: int = 3,
                       stride: int = 2, padding: str = "same") -> np.ndarray:
    """Route each output gradient to the input sample that won the max"""
    xp, out_h, out_w, pads = _pad_input(x, size, size, stride, padding)
    dxp = np.zeros_like(xp)
    for i in range(size):
        for j in range(size):
            mask = argmax == (i * size + j)
            _window(dxp, i, j, stride, out_h, out_w)[...] += np.where(mask, dout, 0)
    return _unpad(dxp, pads)


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """(N, H, W, C) -> (N, C)"""
    if x.ndim != 4:
        raise ShapeMismatchError(f"global_avg_pool expects NHWC, got {x.shape}")
    return x.mean(axis=(1, 2))


def dense(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(N, In) @ (In, Out) + (Out,)"""
    if x.ndim != 2 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeMismatchError(f"dense: input {x.shape}, weights {w.shape}, bias {b.shape}")
    return x @ w + b


def residual_add(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if x.shape != y.shape:
        raise ShapeMismatchError(f"residual junction joins {x.shape} and {y.shape}")
    return x + y


# ============================================================================
# LOSSES
# ============================================================================

def sigmoid(logits: np.ndarray) -> np.ndarray:
    return expit(logits)


def sigmoid_xent(logits: np.ndarray, labels) -> Tuple[float, np.ndarray]:
    """
    Binary cross-entropy on logits, averaged over the batch

    loss = softplus(z) - y z;  dz = (sigmoid(z) - y) / N
    """
    z = np.asarray(logits)
    flat = z.reshape(-1).astype(np.float64)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if y.shape != flat.shape:
        raise ShapeMismatchError(f"sigmoid_xent: {flat.size} logits for {y.size} labels")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("sigmoid_xent labels must be 0 or 1")
    n = flat.size
    loss = float(np.mean(np.logaddexp(0.0, flat) - y * flat))
    grad = ((expit(flat) - y) / n).reshape(z.shape).astype(z.dtype)
    return loss, grad


def softmax_xent(logits: np.ndarray, labels) -> Tuple[float, np.ndarray]:
    """
    Categorical cross-entropy on logits, averaged over the batch

    loss = logsumexp(z) - z[label];  dz = (softmax(z) - onehot) / N
    """
    z = np.asarray(logits)
    if z.ndim == 1:
        z = z[None, :]
    n, classes = z.shape
    if classes < 2:
        raise ValueError("softmax_xent needs at least two classes")
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.size != n:
        raise ShapeMismatchError(f"softmax_xent: {n} rows for {y.size} labels")
    if (y < 0).any() or (y >= classes).any():
        raise ValueError(f"softmax_xent label out of range [0, {classes})")
    z64 = z.astype(np.float64)
    log_p = log_softmax(z64, axis=1)
    loss = float(-log_p[np.arange(n), y].mean())
    grad = softmax(z64, axis=1)
    grad[np.arange(n), y] -= 1.0
    grad /= n
    return loss, grad.astype(z.dtype).reshape(np.asarray(logits).shape)


# ============================================================================
# LAYERS
# ============================================================================

class Layer:
    """Base class: forward caches what backward needs"""
    name = "layer"

    def params(self) -> List[LayerParam]:
        return []

    def forward(self, x: np.ndarray, record: bool = True) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, input_shape: Tuple[int, ...]) -> Tuple[int, ...]:
        raise NotImplementedError

    def _require(self, cache):
        if cache is None:
            raise RuntimeError(f"{self.name}: backward called before forward")
        return cache

    def _emit(self, out: np.ndarray) -> np.ndarray:
        if DEBUG_CHECKS:
            check_finite(out, self.name)
        return out


class Conv2D(Layer):
    """Full convolution with bias"""

    def __init__(self, name: str, in_channels: int, out_channels: int, kernel: int = 3,
                 stride: int = 1, padding: str = "same",
                 rng: Optional[np.random.Generator] = None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.name = name
        self.stride = stride
        self.padding = padding
        self.dtype = dtype
        fan_in = kernel * kernel * in_channels
        self.w = LayerParam(f"{name}/kernel", fan_in_uniform(
            rng, (kernel, kernel, in_channels, out_channels), fan_in, dtype))
        self.b = LayerParam(f"{name}/bias", np.zeros(out_channels, dtype=dtype))
        self._x = None

    def params(self) -> List[LayerParam]:
        return [self.w, self.b]

    def forward(self, x: np.ndarray, record: bool = True) -> np.ndarray:
        x = x.astype(self.dtype, copy=False)
        if record:
            self._x = x
        return self._emit(conv2d_forward(x, self.w.weights, self.b.weights,
                                         self.stride, self.padding))

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x = self._require(self._x)
        dx, dw, db = conv2d_backward(x, self.w.weights, dout, self.stride, self.padding)
        self.w.gradient += dw
        self.b.gradient += db
        return dx

    def output_shape(self, input_shape):
        n, h, w, _ = input_shape
        k = self.w.shape[0]
        out_h = output_extent(h, k, self.stride, self.padding)[0]
        out_w = output_extent(w, k, self.stride, self.padding)[0]
        return (n, out_h, out_w, self.w.shape[3])


class SeparableConv2D(Layer):
    """Depthwise 3x3 followed by pointwise 1x1 with bias"""

    def __init__(self, name: str, in_channels: int, out_channels: int, kernel: int = 3,
                 rng: Optional[np.random.Generator] = None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.name = name
        self.dtype = dtype
        self.depthwise = LayerParam(f"{name}/depthwise", fan_in_uniform(
            rng, (kernel, kernel, in_channels), kernel * kernel, dtype))
        self.pointwise = LayerParam(f"{name}/pointwise", fan_in_uniform(
            rng, (1, 1, in_channels, out_channels), in_channels, dtype))
        self.b = LayerParam(f"{name}/bias", np.zeros(out_channels, dtype=dtype))
        self._x = None
        self._spatial = None

    def params(self) -> List[LayerParam]:
        return [self.depthwise, self.pointwise, self.b]

    def forward(self, x: np.ndarray, record: bool = True) -> np.ndarray:
        x = x.astype(self.dtype, copy=False)
        if record:
            self._x = x
        spatial = depthwise_conv2d_forward(x, self.depthwise.weights)
        if record:
            self._spatial = spatial
        return self._emit(conv2d_forward(spatial, self.pointwise.weights, self.b.weights))

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x = self._require(self._x)
        d_spatial, d_pw, db = conv2d_backward(self._spatial, self.pointwise.weights, dout)
        dx, d_dw = depthwise_conv2d_backward(x, self.depthwise.weights, d_spatial)
        self.pointwise.gradient += d_pw
        self.depthwise.gradient += d_dw
        self.b.gradient += db
        return dx

    def output_shape(self, input_shape):
        return tuple(input_shape[:3]) + (self.pointwise.shape[3],)


class ReLU(Layer):

    def __init__(self, name: str = "relu"):
        self.name = name
        self._mask = None

    def forward(self, x: np.ndarray, record: bool = True) -> np.ndarray:
        mask = x > 0
        if record:
            self._mask = mask
        return np.where(mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return np.where(self._require(self._mask), dout, 0).astype(dout.dtype, copy=False)

    def output_shape(self, input_shape):
        return tuple(input_shape)


class MaxPool2D(Layer):
    """3x3 / stride-2 / same max pooling, recording argmax taps for backward"""

    def __init__(self, name: str = "pool", size: int = 3, stride: int = 2, padding: str = "same"):
        self.name = name
        self.size = size
        self.stride = stride
        self.padding = padding
        self._x = None
        self._argmax = None

    def forward(self, x: np.ndarray, record: bool = True) -> np.ndarray:
        out, argmax = maxpool2d_forward(x, self.size, self.stride, self.padding)
        if record:
            self._x, self._argmax = x, argmax
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x = self._require(self._x)
        return maxpool2d_backward(x, self._argmax, dout, self.size, self.stride, self.padding)

    def output_shape(self, input_shape):
        n, h, w, c = input_shape
        return (n, output_extent(h, self.size, self.stride, self.padding)[0],
                output_extent(w, self.size, self.stride, self.padding)[0], c)


class GlobalAvgPool(Layer):

    def __init__(self, name: str = "gap"):
        self.name = name
        self._shape = None

    def forward(self, x: np.ndarray, record: bool = True) -> np.ndarray:
        if record:
            self._shape = x.shape
        return global_avg_pool(x)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        n, h, w, c = self._require(self._shape)
        grad = (dout / (h * w)).astype(dout.dtype)
        return np.broadcast_to(grad[:, None, None, :], (n, h, w, c)).copy()

    def output_shape(self, input_shape):
        return (input_shape[0], input_shape[3])


class Dense(Layer):
    """Fully connected layer over (N, In) inputs"""

    def __init__(self, name: str, in_features: int, out_features: int,
                 rng: Optional[np.random.Generator] = None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.name = name
        self.dtype = dtype
        self.w = LayerParam(f"{name}/kernel", fan_in_uniform(
            rng, (in_features, out_features), in_features, dtype))
        self.b = LayerParam(f"{name}/bias", np.zeros(out_features, dtype=dtype))
        self._x = None

    def params(self) -> List[LayerParam]:
        return [self.w, self.b]

    def forward(self, x: np.ndarray, record: bool = True) -> np.ndarray:
        x = x.astype(self.dtype, copy=False)
        if record:
            self._x = x
        return self._emit(dense(x, self.w.weights, self.b.weights))

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x = self._require(self._x)
        self.w.gradient += x.T @ dout
        self.b.gradient += dout.sum(axis=0)
        return dout @ self.w.weights.T

    def output_shape(self, input_shape):
        return (input_shape[0], self.w.shape[1])


class Sequential(Layer):
    """Layers applied in order; backward runs them in reverse"""

    def __init__(self, name: str, layers: Sequence[Layer]):
        self.name = name
        self.layers = list(layers)

    def params(self) -> List[LayerParam]:
        return [p for layer in self.layers for p in layer.params()]

    def forward(self, x: np.ndarray, record: bool = True) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, record)
        return x

    def backward(self, dout: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def output_shape(self, input_shape):
        for layer in self.layers:
            input_shape = layer.output_shape(input_shape)
        return input_shape


class ResidualBlock(Layer):
    """body(x) + shortcut(x); the shortcut is the identity when None"""

    def __init__(self, name: str, body: Layer, shortcut: Optional[Layer] = None):
        self.name = name
        self.body = body
        self.shortcut = shortcut
        self._ran = False

    def params(self) -> List[LayerParam]:
        return self.body.params() + (self.shortcut.params() if self.shortcut else [])

    def forward(self, x: np.ndarray, record: bool = True) -> np.ndarray:
        main = self.body.forward(x, record)
        skip = self.shortcut.forward(x, record) if self.shortcut else x
        if record:
            self._ran = True
        return residual_add(skip, main)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if not self._ran:
            raise RuntimeError(f"{self.name}: backward called before forward")
        dx = self.body.backward(dout)
        dx_skip = self.shortcut.backward(dout) if self.shortcut else dout
        return dx + dx_skip

    def output_shape(self, input_shape):
        body_shape = self.body.output_shape(input_shape)
        skip_shape = self.shortcut.output_shape(input_shape) if self.shortcut else tuple(input_shape)
        if tuple(body_shape) != tuple(skip_shape):
            raise ShapeMismatchError(
                f"{self.name}: residual junction joins {skip_shape} and {body_shape}"
            )
        return body_shape


def backward(graph: Layer, upstream: np.ndarray) -> np.ndarray:
    """
    Reverse-mode pass through a recorded forward graph

    Parameter gradients are accumulated into each LayerParam; the gradient
    with respect to the graph input is returned.
    """
    return graph.backward(upstream)


def zero_grads(params: Iterable[LayerParam]) -> None:
    for p in params:
        p.zero_grad()


# ============================================================================
# GRADIENT CHECKING
# ============================================================================

def numerical_gradient(f: Callable[[], float], x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """
    Central finite-difference gradient of a scalar function with respect to x

    x is perturbed in place and restored; f is re-evaluated for every entry.
    """
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for k in range(flat.size):
        original = flat[k]
        flat[k] = original + eps
        plus = f()
        flat[k] = original - eps
        minus = f()
        flat[k] = original
        out[k] = (plus - minus) / (2 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """max |a - n| / max(|a| + |n|, floor) over all entries"""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return float(np.max(np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), floor)))
