"""Neural-network kernels with exact gradients, in float64 numpy.

Everything the residual CNN needs and nothing more: 3x3 same-padding
convolution, ReLU, batch normalization, MSE loss, Adam, and the tiny-normal
initializer. Tensors are (batch, height, width, channels) float64 arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionError, ValidationError

BN_MOMENTUM = 0.99
BN_EPSILON = 1e-3
ADAM_EPSILON = 1e-8
INIT_STD = 1e-3


def check_tensor4(x, channels=None):
    x = np.asarray(x)
    if x.ndim != 4:
        raise DimensionError(f"expected a 4D (N,H,W,C) tensor, got shape {x.shape}")
    if channels is not None and x.shape[3] != channels:
        raise DimensionError(f"expected {channels} channels, got {x.shape[3]}")
    return x


def _pad_same(x):
    return np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))


def _conv_same(x, w):
    """Correlate (N,H,W,Cin) with (3,3,Cin,Cout), stride 1, zero padding 1."""
    windows = sliding_window_view(_pad_same(x), (3, 3), axis=(1, 2))
    # windows: (N,H,W,Cin,3,3); contract Cin,ky,kx against w's 2,0,1
    return np.tensordot(windows, w, axes=([3, 4, 5], [2, 0, 1]))


class ConvLayer:
    """3x3 convolution, stride 1, same padding. Caches its input for the
    backward pass."""

    def __init__(self, weights: np.ndarray, bias: np.ndarray):
        weights = np.asarray(weights, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if weights.ndim != 4 or weights.shape[:2] != (3, 3):
            raise DimensionError(
                f"conv kernels must be 3x3xCinxCout, got shape {weights.shape}"
            )
        if bias.shape != (weights.shape[3],):
            raise DimensionError("bias length must equal the output channel count")
        self.weights = weights
        self.bias = bias
        self._cache = None

    @property
    def in_channels(self):
        return self.weights.shape[2]

    @property
    def out_channels(self):
        return self.weights.shape[3]

    def forward(self, x, cache: bool = True):
        x = check_tensor4(x, self.in_channels)
        if cache:
            self._cache = x
        return _conv_same(x, self.weights) + self.bias

    def backward(self, grad_out):
        if self._cache is None:
            raise ValidationError("conv backward called before a cached forward")
        x = self._cache
        grad_out = check_tensor4(grad_out, self.out_channels)
        grad_b = grad_out.sum(axis=(0, 1, 2))
        windows = sliding_window_view(_pad_same(x), (3, 3), axis=(1, 2))
        # grad_w[ky,kx,ci,co] = sum_nij x_pad[n,i+ky,j+kx,ci] g[n,i,j,co]
        grad_w = np.tensordot(windows, grad_out, axes=([0, 1, 2], [0, 1, 2]))
        grad_w = grad_w.transpose(1, 2, 0, 3)
        # grad_x: full correlation of grad_out with the flipped kernels
        flipped = self.weights[::-1, ::-1]
        gwin = sliding_window_view(_pad_same(grad_out), (3, 3), axis=(1, 2))
        grad_x = np.tensordot(gwin, flipped, axes=([3, 4, 5], [3, 0, 1]))
        return grad_x, grad_w, grad_b


def conv2d_forward(x, layer: ConvLayer):
    return layer.forward(x)


def conv2d_backward(grad_out, layer: ConvLayer):
    return layer.backward(grad_out)


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(grad_out, x):
    """Subgradient 0 at exactly 0."""
    return np.where(x > 0.0, grad_out, 0.0)


class BatchNormLayer:
    """Per-channel batch normalization over (batch, height, width)."""

    def __init__(self, channels: int, momentum: float = BN_MOMENTUM,
                 epsilon: float = BN_EPSILON):
        self.gamma = np.ones(channels)
        self.beta = np.zeros(channels)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.epsilon = epsilon
        self._cache = None

    @property
    def channels(self):
        return self.gamma.shape[0]

    def forward(self, x, mode: str):
        x = check_tensor4(x, self.channels)
        if mode == "train":
            m = x.shape[0] * x.shape[1] * x.shape[2]
            if m <= 1:
                raise ValidationError(
                    "batch statistics are degenerate: need more than one "
                    "element per channel in train mode"
                )
            mean = x.mean(axis=(0, 1, 2))
            var = x.var(axis=(0, 1, 2))
            inv_std = 1.0 / np.sqrt(var + self.epsilon)
            xhat = (x - mean) * inv_std
            self.running_mean = (self.momentum * self.running_mean
                                 + (1.0 - self.momentum) * mean)
            self.running_var = (self.momentum * self.running_var
                                + (1.0 - self.momentum) * var)
            self._cache = (xhat, inv_std, m)
            return self.gamma * xhat + self.beta
        if mode == "infer":
            xhat = (x - self.running_mean) / np.sqrt(self.running_var + self.epsilon)
            return self.gamma * xhat + self.beta
        raise ValidationError(f"mode must be 'train' or 'infer', got {mode!r}")

    def backward(self, grad_out):
        if self._cache is None:
            raise ValidationError("batchnorm backward called before a train forward")
        xhat, inv_std, m = self._cache
        grad_out = check_tensor4(grad_out, self.channels)
        grad_gamma = (grad_out * xhat).sum(axis=(0, 1, 2))
        grad_beta = grad_out.sum(axis=(0, 1, 2))
        gx = grad_out * self.gamma
        grad_x = (inv_std / m) * (
            m * gx
            - gx.sum(axis=(0, 1, 2))
            - xhat * (gx * xhat).sum(axis=(0, 1, 2))
        )
        return grad_x, grad_gamma, grad_beta


def batchnorm_forward(x, layer: BatchNormLayer, mode: str):
    return layer.forward(x, mode)


def mse_loss(pred, target):
    """Mean over the batch of per-sample squared-error sums.

    The normalizer is the batch size N, not the element count, so the
    returned gradient is 2 (pred - target) / N.
    """
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise DimensionError(f"shape mismatch: {pred.shape} vs {target.shape}")
    n = pred.shape[0]
    diff = pred - target
    loss = float(np.sum(diff**2) / n)
    return loss, 2.0 * diff / n


@dataclass
class AdamState:
    """First/second moment slots for an ordered parameter list."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = ADAM_EPSILON
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr, beta1=0.9, beta2=0.999):
        return cls(lr=lr, beta1=beta1, beta2=beta2,
                   m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState):
    """Bias-corrected Adam update, in place on ``params`` and ``state``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionError("params, grads, and optimizer slots differ in length")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise DimensionError("parameter/gradient shape mismatch")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g**2
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)


def init_weights(shape, seed: int) -> np.ndarray:
    """Kernel initializer: i.i.d. Normal(0, 0.001^2)."""
    return np.random.default_rng(seed).normal(0.0, INIT_STD, size=shape)
