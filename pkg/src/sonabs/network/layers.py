"""Neural-network layers with explicit forward/backward passes.

Shapes follow the (batch, channels, length) convention for the
convolutional encoder and (batch, features) for the dense decoder.
Parameters and gradients are float64 throughout.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Conv1D:
    """Stride-1, zero-padded (length-preserving) 1D convolution."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 rng: np.random.Generator):
        if kernel % 2 != 1:
            raise ValueError("kernel size must be odd for same-length padding")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.pad = (kernel - 1) // 2
        fan_in = in_channels * kernel
        fan_out = out_channels * kernel
        self.w = glorot_uniform(rng, (out_channels, in_channels, kernel), fan_in, fan_out)
        self.b = np.zeros(out_channels)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._windows = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        xp = np.pad(x, ((0, 0), (0, 0), (self.pad, self.pad)))
        self._windows = sliding_window_view(xp, self.kernel, axis=2)  # (B,C,L,K)
        return (
            np.einsum("bclk,fck->bfl", self._windows, self.w, optimize=True)
            + self.b[None, :, None]
        )

    def backward(self, dy: np.ndarray) -> np.ndarray:
        self.dw += np.einsum("bclk,bfl->fck", self._windows, dy, optimize=True)
        self.db += dy.sum(axis=(0, 2))
        # Full correlation of dy with the flipped kernel, cropped by the pad.
        k = self.kernel
        dyp = np.pad(dy, ((0, 0), (0, 0), (k - 1, k - 1)))
        dwin = sliding_window_view(dyp, k, axis=2)  # (B,F,L+K-1,K)
        dxp = np.einsum("bfmk,fck->bcm", dwin, self.w[:, :, ::-1], optimize=True)
        length = self._windows.shape[2]
        return dxp[:, :, self.pad : self.pad + length]

    def params(self):
        yield "w", self.w, self.dw, True
        yield "b", self.b, self.db, False


class Dense:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.w = glorot_uniform(rng, (n_in, n_out), n_in, n_out)
        self.b = np.zeros(n_out)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.w + self.b

    def backward(self, dy: np.ndarray) -> np.ndarray:
        self.dw += self._x.T @ dy
        self.db += dy.sum(axis=0)
        return dy @ self.w.T

    def params(self):
        yield "w", self.w, self.dw, True
        yield "b", self.b, self.db, False


class Tanh:
    def __init__(self):
        self._y = None

    def forward(self, x):
        self._y = np.tanh(x)
        return self._y

    def backward(self, dy):
        return dy * (1.0 - self._y * self._y)


class Sigmoid:
    def __init__(self):
        self._y = None

    def forward(self, x):
        with np.errstate(over="ignore"):  # saturated inputs map cleanly to 0/1
            self._y = 1.0 / (1.0 + np.exp(-x))
        return self._y

    def backward(self, dy):
        return dy * self._y * (1.0 - self._y)


class MaxPool1D:
    """Size-2, stride-2 pooling with floor length division.

    An odd trailing sample is dropped and receives zero gradient; ties route
    the gradient to the first element of the pair.
    """

    def __init__(self):
        self._first = None
        self._in_length = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        b, c, length = x.shape
        self._in_length = length
        half = length // 2
        pairs = x[:, :, : 2 * half].reshape(b, c, half, 2)
        self._first = pairs[..., 0] >= pairs[..., 1]
        return np.where(self._first, pairs[..., 0], pairs[..., 1])

    def backward(self, dy: np.ndarray) -> np.ndarray:
        b, c, half = dy.shape
        dx = np.zeros((b, c, self._in_length))
        dx[:, :, 0 : 2 * half : 2] = dy * self._first
        dx[:, :, 1 : 2 * half : 2] = dy * ~self._first
        return dx


class ResidualBlock:
    """Three same-length convolutions with tanh, an identity skip from the
    first convolution's output to the third's output, then optional pooling.

    Only the first convolution changes the channel count, so the skip needs
    no projection.
    """

    def __init__(self, in_channels: int, channels: int, kernel: int,
                 pooled: bool, rng: np.random.Generator):
        self.conv1 = Conv1D(in_channels, channels, kernel, rng)
        self.conv2 = Conv1D(channels, channels, kernel, rng)
        self.conv3 = Conv1D(channels, channels, kernel, rng)
        self.act1 = Tanh()
        self.act2 = Tanh()
        self.act3 = Tanh()
        self.pool = MaxPool1D() if pooled else None

    def forward(self, x: np.ndarray) -> np.ndarray:
        a1 = self.act1.forward(self.conv1.forward(x))
        a2 = self.act2.forward(self.conv2.forward(a1))
        a3 = self.act3.forward(self.conv3.forward(a2))
        out = a3 + a1
        if self.pool is not None:
            out = self.pool.forward(out)
        return out

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self.pool is not None:
            dy = self.pool.backward(dy)
        da2 = self.conv3.backward(self.act3.backward(dy))
        da1 = self.conv2.backward(self.act2.backward(da2)) + dy  # skip path
        return self.conv1.backward(self.act1.backward(da1))

    def params(self):
        for i, conv in enumerate((self.conv1, self.conv2, self.conv3), start=1):
            for name, value, grad, is_weight in conv.params():
                yield f"conv{i}.{name}", value, grad, is_weight
