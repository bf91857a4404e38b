"""Layers with explicit forward/backward passes.

Spatial tensors are channel-last: ``(batch, height, width, channels)``.
Sequences are ``(batch, time, features)``. Every layer caches what its
backward pass needs during ``forward`` and writes parameter gradients to
``self.grads`` during ``backward``.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit


def _check_finite(arr: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in {where}")


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x, training: bool = False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def output_shape(self, input_shape: tuple) -> tuple:
        return input_shape

    def fans(self, name: str) -> tuple[int, int]:
        """(fan_in, fan_out) used by Xavier initialisation for parameter ``name``."""
        raise KeyError(name)

    def spec(self) -> dict:
        return {"kind": self.kind}


class Activation(Layer):
    kind = "activation"

    def __init__(self, fn: str = "sigmoid"):
        super().__init__()
        if fn not in ("sigmoid", "tanh", "identity"):
            raise ValueError(f"unknown activation {fn!r}")
        self.fn = fn

    def forward(self, x, training=False):
        if self.fn == "sigmoid":
            y = expit(x)
        elif self.fn == "tanh":
            y = np.tanh(x)
        else:
            y = x
        self._y = y
        return y

    def backward(self, dy):
        y = self._y
        if self.fn == "sigmoid":
            return dy * y * (1.0 - y)
        if self.fn == "tanh":
            return dy * (1.0 - y * y)
        return dy

    def spec(self):
        return {"kind": self.kind, "fn": self.fn}


class Conv2D(Layer):
    """Valid, stride-1 cross-correlation."""

    kind = "conv"

    def __init__(self, in_channels: int, filters: int, kernel: tuple[int, int]):
        super().__init__()
        self.in_channels = int(in_channels)
        self.filters = int(filters)
        self.kernel = (int(kernel[0]), int(kernel[1]))
        kh, kw = self.kernel
        self.params = {
            "W": np.zeros((kh, kw, self.in_channels, self.filters)),
            "b": np.zeros(self.filters),
        }

    def output_shape(self, input_shape):
        h, w, c = input_shape
        if c != self.in_channels:
            raise ValueError(f"conv expects {self.in_channels} channels, got {c}")
        ho, wo = h - self.kernel[0] + 1, w - self.kernel[1] + 1
        if ho < 1 or wo < 1:
            raise ValueError(f"kernel {self.kernel} larger than input {(h, w)}")
        return (ho, wo, self.filters)

    def fans(self, name):
        kh, kw = self.kernel
        return kh * kw * self.in_channels, kh * kw * self.filters

    def _wmat(self):
        kh, kw = self.kernel
        # im2col columns are ordered (channel, row, col)
        return self.params["W"].transpose(2, 0, 1, 3).reshape(self.in_channels * kh * kw, self.filters)

    def forward(self, x, training=False):
        b, h, w, c = x.shape
        ho, wo, f = self.output_shape((h, w, c))
        cols = sliding_window_view(x, self.kernel, axis=(1, 2)).reshape(b * ho * wo, -1)
        self._x_shape = x.shape
        self._cols = cols
        y = cols @ self._wmat() + self.params["b"]
        return y.reshape(b, ho, wo, f)

    def backward(self, dy):
        b, h, w, c = self._x_shape
        kh, kw = self.kernel
        _, ho, wo, f = dy.shape
        dy2 = dy.reshape(-1, f)
        dwmat = self._cols.T @ dy2
        self.grads = {
            "W": dwmat.reshape(c, kh, kw, f).transpose(1, 2, 0, 3),
            "b": dy2.sum(axis=0),
        }
        dcols = (dy2 @ self._wmat().T).reshape(b, ho, wo, c, kh, kw)
        dx = np.zeros(self._x_shape)
        for i in range(kh):
            for j in range(kw):
                dx[:, i:i + ho, j:j + wo, :] += dcols[..., i, j]
        return dx

    def spec(self):
        return {"kind": self.kind, "in_channels": self.in_channels, "filters": self.filters,
                "kernel": list(self.kernel)}


class MaxPool2D(Layer):
    """Non-overlapping max pooling; trailing rows/cols that do not fill a window are dropped."""

    kind = "maxpool"

    def __init__(self, window: tuple[int, int]):
        super().__init__()
        self.window = (int(window[0]), int(window[1]))

    def output_shape(self, input_shape):
        h, w, c = input_shape
        ho, wo = h // self.window[0], w // self.window[1]
        if ho < 1 or wo < 1:
            raise ValueError(f"pool window {self.window} larger than input {(h, w)}")
        return (ho, wo, c)

    def forward(self, x, training=False):
        b, h, w, c = x.shape
        ph, pw = self.window
        ho, wo, _ = self.output_shape((h, w, c))
        xt = x[:, :ho * ph, :wo * pw, :].reshape(b, ho, ph, wo, pw, c)
        xt = xt.transpose(0, 1, 3, 5, 2, 4).reshape(b, ho, wo, c, ph * pw)
        idx = np.argmax(xt, axis=-1)  # first maximum on ties
        self._x_shape = x.shape
        self._idx = idx
        return np.take_along_axis(xt, idx[..., None], axis=-1)[..., 0]

    def backward(self, dy):
        b, h, w, c = self._x_shape
        ph, pw = self.window
        _, ho, wo, _ = dy.shape
        grid = np.zeros((b, ho, wo, c, ph * pw))
        np.put_along_axis(grid, self._idx[..., None], dy[..., None], axis=-1)
        grid = grid.reshape(b, ho, wo, c, ph, pw).transpose(0, 1, 4, 2, 5, 3).reshape(b, ho * ph, wo * pw, c)
        dx = np.zeros(self._x_shape)
        dx[:, :ho * ph, :wo * pw, :] = grid
        return dx

    def spec(self):
        return {"kind": self.kind, "window": list(self.window)}


class Dense(Layer):
    """Affine map ``x @ W + b`` (``W`` is ``(in, out)``)."""

    kind = "dense"

    def __init__(self, in_features: int, out_features: int):
        super().__init__()
        self.in_features = int(in_features)
        self.out_features = int(out_features)
        self.params = {"W": np.zeros((self.in_features, self.out_features)), "b": np.zeros(self.out_features)}

    def output_shape(self, input_shape):
        if tuple(input_shape) != (self.in_features,):
            raise ValueError(f"dense expects ({self.in_features},), got {input_shape}")
        return (self.out_features,)

    def fans(self, name):
        return self.in_features, self.out_features

    def forward(self, x, training=False):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy):
        self.grads = {"W": self._x.T @ dy, "b": dy.sum(axis=0)}
        return dy @ self.params["W"].T

    def spec(self):
        return {"kind": self.kind, "in_features": self.in_features, "out_features": self.out_features}


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class Concat(Layer):
    """Concatenate a list of inputs along ``axis`` (batch axis excluded)."""

    kind = "concat"

    def __init__(self, axis: int = -1):
        super().__init__()
        self.axis = axis

    def forward(self, xs, training=False):
        self._sizes = [x.shape[self.axis] for x in xs]
        return np.concatenate(xs, axis=self.axis)

    def backward(self, dy):
        cuts = np.cumsum(self._sizes)[:-1]
        return np.split(dy, cuts, axis=self.axis)

    def spec(self):
        return {"kind": self.kind, "axis": self.axis}


class LstmState(NamedTuple):
    h: np.ndarray
    c: np.ndarray


GATES = ("i", "f", "o", "c")


def _cell(z, wcat, bcat, c_prev, units):
    a = z @ wcat + bcat
    i = expit(a[:, :units])
    f = expit(a[:, units:2 * units])
    o = expit(a[:, 2 * units:3 * units])
    g = np.tanh(a[:, 3 * units:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    return i, f, o, g, c, tc, o * tc


def lstm_cell(x_t: np.ndarray, prev: LstmState, params: dict[str, np.ndarray]) -> LstmState:
    """One LSTM step on ``[h_{t-1}, x_t]`` with weights ``W_i, W_f, W_o, W_c`` of shape ``(H + D, H)``."""
    x_t = np.atleast_2d(x_t)
    h_prev = np.atleast_2d(prev.h)
    units = h_prev.shape[1]
    wcat = np.concatenate([params[f"W_{g}"] for g in GATES], axis=1)
    bcat = np.concatenate([params[f"b_{g}"] for g in GATES])
    z = np.concatenate([h_prev, x_t], axis=1)
    *_, c, _, h = _cell(z, wcat, bcat, np.atleast_2d(prev.c), units)
    return LstmState(h, c)


class LSTM(Layer):
    """Single LSTM layer unrolled over the sequence, zero initial state.

    Returns the full hidden sequence ``(B, T, H)`` or, with
    ``return_sequences=False``, the last hidden state ``(B, H)``.
    """

    kind = "lstm"

    def __init__(self, in_features: int, units: int, return_sequences: bool = True):
        super().__init__()
        self.in_features = int(in_features)
        self.units = int(units)
        self.return_sequences = bool(return_sequences)
        n = self.units + self.in_features
        for g in GATES:
            self.params[f"W_{g}"] = np.zeros((n, self.units))
            self.params[f"b_{g}"] = np.zeros(self.units)

    def output_shape(self, input_shape):
        t, d = input_shape
        if d != self.in_features:
            raise ValueError(f"lstm expects {self.in_features} features, got {d}")
        return (t, self.units) if self.return_sequences else (self.units,)

    def fans(self, name):
        return self.units + self.in_features, self.units

    def forward(self, x, training=False):
        b, t, _ = x.shape
        u = self.units
        wcat = np.concatenate([self.params[f"W_{g}"] for g in GATES], axis=1)
        bcat = np.concatenate([self.params[f"b_{g}"] for g in GATES])
        h = np.zeros((b, u))
        c = np.zeros((b, u))
        hs = np.empty((b, t, u))
        cache = []
        for k in range(t):
            z = np.concatenate([h, x[:, k, :]], axis=1)
            c_prev = c
            i, f, o, g, c, tc, h = _cell(z, wcat, bcat, c_prev, u)
            cache.append((z, c_prev, i, f, o, g, tc))
            hs[:, k] = h
        self._cache = cache
        self._wcat = wcat
        self._x_shape = x.shape
        return hs if self.return_sequences else h

    def backward(self, dy):
        b, t, d = self._x_shape
        u = self.units
        wcat = self._wcat
        dwcat = np.zeros_like(wcat)
        dbcat = np.zeros(4 * u)
        dx = np.empty(self._x_shape)
        dh_next = np.zeros((b, u))
        dc_next = np.zeros((b, u))
        for k in reversed(range(t)):
            z, c_prev, i, f, o, g, tc = self._cache[k]
            dh = dh_next + (dy[:, k] if self.return_sequences else (dy if k == t - 1 else 0.0))
            dc = dh * o * (1.0 - tc * tc) + dc_next
            da = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                dh * tc * o * (1.0 - o),
                dc * i * (1.0 - g * g),
            ], axis=1)
            dwcat += z.T @ da
            dbcat += da.sum(axis=0)
            dz = da @ wcat.T
            dh_next = dz[:, :u]
            dx[:, k] = dz[:, u:]
            dc_next = dc * f
        self.grads = {}
        for n, g in enumerate(GATES):
            self.grads[f"W_{g}"] = dwcat[:, n * u:(n + 1) * u]
            self.grads[f"b_{g}"] = dbcat[n * u:(n + 1) * u]
        return dx

    def spec(self):
        return {"kind": self.kind, "in_features": self.in_features, "units": self.units,
                "return_sequences": self.return_sequences}


def layer_from_spec(spec: dict) -> Layer:
    kind = spec["kind"]
    if kind == "conv":
        return Conv2D(spec["in_channels"], spec["filters"], tuple(spec["kernel"]))
    if kind == "maxpool":
        return MaxPool2D(tuple(spec["window"]))
    if kind == "dense":
        return Dense(spec["in_features"], spec["out_features"])
    if kind == "lstm":
        return LSTM(spec["in_features"], spec["units"], spec["return_sequences"])
    if kind == "activation":
        return Activation(spec["fn"])
    if kind == "flatten":
        return Flatten()
    if kind == "concat":
        return Concat(spec["axis"])
    raise ValueError(f"unknown layer kind {kind!r}")
