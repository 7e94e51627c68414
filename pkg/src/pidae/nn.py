"""Small numpy convolutional autoencoder with explicit reverse-mode gradients.

Arrays are ``(batch, channels, length)`` in float64. Only the pieces the
imputation models need are here: strided "same" convolution, nearest
neighbour up-sampling, ReLU and an Adam optimiser.
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    pass


class StateError(RuntimeError):
    pass


class NonFiniteGradient(FloatingPointError):
    pass


def same_padding(length: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """``(pad_left, pad_right, out_length)`` for ceil(length / stride) outputs."""
    out = -(-length // stride)
    total = max((out - 1) * stride + kernel - length, 0)
    return total // 2, total - total // 2, out


class Layer:
    name = "layer"

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(np.asarray(x, dtype=float))


class Conv1d(Layer):
    def __init__(self, in_channels: int, out_channels: int, kernel: int, stride: int = 1,
                 name: str = "conv", rng: np.random.Generator | None = None):
        if kernel < 1 or stride < 1:
            raise ValueError("kernel and stride must be positive")
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride, self.name = kernel, stride, name
        rng = np.random.default_rng() if rng is None else rng
        bound = math.sqrt(6.0 / (in_channels * kernel))
        self.W = rng.uniform(-bound, bound, size=(out_channels, in_channels, kernel))
        self.b = np.zeros(out_channels)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._cache = None

    def params(self):
        return {f"{self.name}.W": self.W, f"{self.name}.b": self.b}

    def grads(self):
        return {f"{self.name}.W": self.dW, f"{self.name}.b": self.db}

    def forward(self, x):
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise ShapeError(f"{self.name}: expected (batch, {self.in_channels}, length), got {x.shape}")
        B, C, L = x.shape
        pl, pr, lo = same_padding(L, self.kernel, self.stride)
        xp = np.pad(x, ((0, 0), (0, 0), (pl, pr)))
        win = sliding_window_view(xp, self.kernel, axis=2)[:, :, :: self.stride][:, :, :lo]
        cols = win.transpose(0, 2, 1, 3).reshape(B * lo, C * self.kernel)
        out = cols @ self.W.reshape(self.out_channels, -1).T + self.b
        self._cache = (cols, x.shape, pl, lo)
        return out.reshape(B, lo, self.out_channels).transpose(0, 2, 1)

    def backward(self, g):
        if self._cache is None:
            raise StateError(f"{self.name}: backward called before forward")
        cols, (B, C, L), pl, lo = self._cache
        gm = g.transpose(0, 2, 1).reshape(B * lo, self.out_channels)
        self.dW[...] = (gm.T @ cols).reshape(self.W.shape)
        self.db[...] = gm.sum(axis=0)
        dcols = (gm @ self.W.reshape(self.out_channels, -1)).reshape(B, lo, C, self.kernel)
        dcols = dcols.transpose(0, 2, 1, 3)
        dxp = np.zeros((B, C, L + self.kernel + self.stride * lo))
        span = self.stride * (lo - 1) + 1
        for j in range(self.kernel):
            dxp[:, :, j : j + span : self.stride] += dcols[..., j]
        return dxp[:, :, pl : pl + L]


class Upsample(Layer):
    """Nearest-neighbour repetition along the time axis."""

    def __init__(self, factor: int = 2, name: str = "up"):
        self.factor, self.name = factor, name
        self._seen = False

    def forward(self, x):
        self._seen = True
        return np.repeat(x, self.factor, axis=-1)

    def backward(self, g):
        if not self._seen:
            raise StateError(f"{self.name}: backward called before forward")
        B, C, L = g.shape
        return g.reshape(B, C, L // self.factor, self.factor).sum(axis=-1)


class ReLU(Layer):
    def __init__(self, name: str = "relu"):
        self.name = name
        self._active = None

    def forward(self, x):
        self._active = x > 0
        return np.where(self._active, x, 0.0)

    def backward(self, g):
        if self._active is None:
            raise StateError(f"{self.name}: backward called before forward")
        return np.where(self._active, g, 0.0)


class Network:
    """A sequence of layers with a flat, named parameter view."""

    def __init__(self, layers: Iterable[Layer]):
        self.layers = list(layers)
        self._forwarded = False

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        for layer in self.layers:
            x = layer.forward(x)
        self._forwarded = True
        return x

    __call__ = forward

    def backward(self, g: np.ndarray) -> np.ndarray:
        """Propagate ``dLoss/dOutput`` back; parameter gradients land in :meth:`grads`."""
        if not self._forwarded:
            raise StateError("backward called before forward")
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for layer in self.layers:
            out.update(layer.params())
        return out

    def grads(self) -> dict[str, np.ndarray]:
        out = {}
        for layer in self.layers:
            out.update(layer.grads())
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params().values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.params()
        if set(state) != set(params):
            raise KeyError(f"parameter names differ: {sorted(set(state) ^ set(params))}")
        for k, v in state.items():
            if params[k].shape != np.shape(v):
                raise ShapeError(f"{k}: shape {np.shape(v)} != {params[k].shape}")
            params[k][...] = v


def conv_autoencoder(in_channels: int, out_channels: int, filters_external: int,
                     filters_internal: int, kernel: int, rng: np.random.Generator) -> Network:
    """Two stride-2 encoder convolutions, two up-sample + convolution decoder stages.

    ReLU follows every convolution except the last, which is linear. For an
    input of length ``L`` divisible by four the output has length ``L``.
    """
    return Network(
        [
            Conv1d(in_channels, filters_external, kernel, 2, "enc1", rng),
            ReLU("enc1.act"),
            Conv1d(filters_external, filters_internal, kernel, 2, "enc2", rng),
            ReLU("enc2.act"),
            Upsample(2, "dec1.up"),
            Conv1d(filters_internal, filters_external, kernel, 1, "dec1", rng),
            ReLU("dec1.act"),
            Upsample(2, "dec2.up"),
            Conv1d(filters_external, out_channels, kernel, 1, "dec2", rng),
        ]
    )


def conv_param_count(in_channels: int, out_channels: int, kernel: int) -> int:
    return in_channels * out_channels * kernel + out_channels


class Adam:
    """Adam with bias correction; state is keyed by parameter name."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(f"non-finite gradient for {name}")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in params.items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
