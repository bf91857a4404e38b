"""Central finite-difference checks for layer gradients."""
from __future__ import annotations

import numpy as np

from .layers import Concat, Layer


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    num = np.linalg.norm(np.ravel(a - b))
    den = max(np.linalg.norm(np.ravel(a)) + np.linalg.norm(np.ravel(b)), 1e-12)
    return float(num / den)


def numerical_gradient(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central differences of the scalar function ``f`` w.r.t. ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        fp = f()
        x[i] = old - eps
        fm = f()
        x[i] = old
        grad[i] = (fp - fm) / (2.0 * eps)
    return grad


def check_layer(layer: Layer, x, rng: np.random.Generator, eps: float = 1e-5) -> dict[str, float]:
    """Relative errors of analytic vs numerical gradients for inputs and every parameter.

    The scalar probed is ``sum(forward(x) * r)`` for a fixed random ``r``.
    """
    multi = isinstance(layer, Concat)
    y = layer.forward(x, training=True)
    r = rng.standard_normal(y.shape)
    dx = layer.backward(r)
    grads = {k: g.copy() for k, g in layer.grads.items()}

    def loss():
        return float(np.sum(layer.forward(x, training=True) * r))

    errors = {}
    inputs = x if multi else [x]
    dxs = dx if multi else [dx]
    for n, (xi, dxi) in enumerate(zip(inputs, dxs)):
        errors[f"input{n}"] = relative_error(dxi, numerical_gradient(loss, xi, eps))
    for k, p in layer.params.items():
        errors[k] = relative_error(grads[k], numerical_gradient(loss, p, eps))
    return errors
