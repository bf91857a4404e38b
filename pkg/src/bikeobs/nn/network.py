"""Sequential network container, Xavier initialisation, MSE loss and parameter files."""
from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

from .layers import Layer, _check_finite, layer_from_spec


class Network:
    """A chain of layers with a recorded forward pass for reverse-mode gradients."""

    def __init__(self, layers: list[Layer], input_shape: tuple[int, ...]):
        self.layers = list(layers)
        self.input_shape = tuple(int(s) for s in input_shape)
        shape = self.input_shape
        self.shapes = [shape]
        for layer in self.layers:
            shape = layer.output_shape(shape)
            self.shapes.append(shape)

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.shapes[-1]

    @property
    def params(self) -> dict[str, np.ndarray]:
        """Live parameter arrays keyed ``"<layer index>.<name>"``."""
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.params.items()}

    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"expected input shape (B, {self.input_shape}), got {x.shape}")
        for layer in self.layers:
            x = layer.forward(x, training)
        if training:
            _check_finite(x, "network output")
        return x

    def backward(self, dy: np.ndarray) -> dict[str, np.ndarray]:
        """Propagate ``d loss / d output`` through the recorded pass; returns parameter gradients."""
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        grads = {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.grads.items()}
        for k, g in grads.items():
            _check_finite(g, f"gradient {k}")
        return grads

    def predict(self, x: np.ndarray, batch_size: int = 4096) -> np.ndarray:
        out = [self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.empty((0, *self.output_shape))

    def get_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def set_params(self, values: dict[str, np.ndarray]) -> None:
        live = self.params
        if set(values) != set(live):
            raise KeyError("parameter names do not match the network")
        for k, v in values.items():
            if v.shape != live[k].shape:
                raise ValueError(f"{k}: shape {v.shape} != {live[k].shape}")
            live[k][...] = v

    def spec(self) -> dict:
        return {"input_shape": list(self.input_shape), "layers": [layer.spec() for layer in self.layers]}

    @classmethod
    def from_spec(cls, spec: dict) -> "Network":
        return cls([layer_from_spec(s) for s in spec["layers"]], tuple(spec["input_shape"]))

    def save(self, path, meta: dict | None = None) -> None:
        """Write specs, metadata and raw float64 parameters to one ``.npz`` file."""
        header = json.dumps({"network": self.spec(), "meta": meta or {}}, sort_keys=True)
        arrays = {"__header__": np.array(header), **self.params}
        # fixed entry timestamps keep the archive byte-identical across reruns
        with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
            for name, arr in arrays.items():
                buf = io.BytesIO()
                np.lib.format.write_array(buf, np.asarray(arr), allow_pickle=False)
                zf.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())

    @classmethod
    def load(cls, path) -> tuple["Network", dict]:
        with np.load(Path(path), allow_pickle=False) as data:
            header = json.loads(str(data["__header__"]))
            net = cls.from_spec(header["network"])
            net.set_params({k: data[k] for k in net.params})
        return net, header["meta"]


def xavier_init(net: Network, rng: np.random.Generator) -> None:
    """Uniform Glorot weights in ``+-sqrt(6 / (fan_in + fan_out))``; zero biases."""
    for layer in net.layers:
        for name in sorted(layer.params):
            p = layer.params[name]
            if name.startswith("b"):
                p[...] = 0.0
            else:
                fan_in, fan_out = layer.fans(name)
                bound = np.sqrt(6.0 / (fan_in + fan_out))
                p[...] = rng.uniform(-bound, bound, size=p.shape)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size
