"""Independent reference implementations used as test oracles."""
import math

import numpy as np

from bikeobs.sim import NoiseSpec, Trajectory, VehicleParams, VehicleState


def plain_kf(z0, P0, F, B_u, Q, R, measurements):
    """Textbook linear Kalman filter with identity measurement and standard covariance update."""
    x = np.array(z0, dtype=float)
    P = np.array(P0, dtype=float)
    out = [x.copy()]
    I = np.eye(len(x))
    for k in range(1, len(measurements)):
        x = F @ x + B_u[k]
        P = F @ P @ F.T + Q
        K = P @ np.linalg.inv(P + R)
        x = x + K @ (measurements[k] - x)
        P = (I - K) @ P
        out.append(x.copy())
    return np.array(out)


def straight_line_system(n=10_000, v=8.0, seed=0, params=VehicleParams()):
    """psi = 0, delta = 0 data with process noise on x, y only and psi measured as exactly 0.

    Returns ``(trajectory, Q, R)`` where the heading channel is effectively
    known (zero process noise, negligible measurement variance).
    """
    rng = np.random.default_rng(seed)
    sp, sm = np.asarray(NoiseSpec().sigma_proc), np.asarray(NoiseSpec().sigma_meas_base)
    w = rng.standard_normal((n, 2)) * sp[:2]
    states = np.zeros((n, 3))
    x = y = 0.0
    for k in range(n):
        x += v * params.dt + w[k, 0]
        y += w[k, 1]
        states[k, :2] = x, y
    meas = states.copy()
    meas[:, :2] += rng.standard_normal((n, 2)) * sm[:2]
    inputs = np.tile([v, 0.0], (n, 1))
    Q = np.diag([sp[0] ** 2, sp[1] ** 2, 0.0])
    R = np.diag([sm[0] ** 2, sm[1] ** 2, 1e-30])
    traj = Trajectory(params, NoiseSpec(), seed, VehicleState(0, 0, 0), states, inputs, meas)
    return traj, Q, R


def conv2d_loops(x, W, b):
    """Valid cross-correlation by nested loops; x (H, W, C), W (kh, kw, C, F)."""
    h, w, c = x.shape
    kh, kw, _, f = W.shape
    out = np.zeros((h - kh + 1, w - kw + 1, f))
    for i in range(h - kh + 1):
        for j in range(w - kw + 1):
            for o in range(f):
                acc = b[o]
                for di in range(kh):
                    for dj in range(kw):
                        for ch in range(c):
                            acc += x[i + di, j + dj, ch] * W[di, dj, ch, o]
                out[i, j, o] = acc
    return out


def maxpool_loops(x, ph, pw):
    h, w, c = x.shape
    out = np.zeros((h // ph, w // pw, c))
    for i in range(h // ph):
        for j in range(w // pw):
            for ch in range(c):
                out[i, j, ch] = max(x[i * ph + a, j * pw + bb, ch] for a in range(ph) for bb in range(pw))
    return out


def lstm_step_scalar(x, h, c, params):
    """Element-by-element LSTM step on the concatenation [h, x]."""
    z = list(h) + list(x)
    units = len(h)

    def sig(a):
        return 1.0 / (1.0 + math.exp(-a))

    def gate(name, fn):
        W, bias = params[f"W_{name}"], params[f"b_{name}"]
        return [fn(sum(z[r] * W[r, u] for r in range(len(z))) + bias[u]) for u in range(units)]

    i, f, o = gate("i", sig), gate("f", sig), gate("o", sig)
    g = gate("c", math.tanh)
    c_new = [f[u] * c[u] + i[u] * g[u] for u in range(units)]
    h_new = [o[u] * math.tanh(c_new[u]) for u in range(units)]
    return np.array(h_new), np.array(c_new)


LAYER_KINDS = ("conv", "maxpool", "dense", "lstm_seq", "lstm_last", "sigmoid", "tanh", "identity", "flatten", "concat")


def random_layer_case(kind, rng):
    """A small randomly parameterised layer of ``kind`` and a matching input batch."""
    from bikeobs.nn import LSTM, Activation, Concat, Conv2D, Dense, Flatten, MaxPool2D

    b = int(rng.integers(1, 4))
    if kind == "conv":
        kh, kw = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        cin, f = int(rng.integers(1, 3)), int(rng.integers(1, 4))
        layer = Conv2D(cin, f, (kh, kw))
        x = rng.standard_normal((b, kh + int(rng.integers(0, 4)), kw + int(rng.integers(0, 3)), cin))
    elif kind == "maxpool":
        ph, pw = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        layer = MaxPool2D((ph, pw))
        # distinct values keep the argmax away from ties under perturbation
        x = rng.permutation(np.arange(b * ph * 3 * pw * 2 * 2, dtype=float)).reshape(b, ph * 3, pw * 2, 2) * 0.1
    elif kind == "dense":
        i, o = int(rng.integers(1, 6)), int(rng.integers(1, 5))
        layer = Dense(i, o)
        x = rng.standard_normal((b, i))
    elif kind in ("lstm_seq", "lstm_last"):
        d, u, t = int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(1, 5))
        layer = LSTM(d, u, return_sequences=kind == "lstm_seq")
        x = rng.standard_normal((b, t, d))
    elif kind in ("sigmoid", "tanh", "identity"):
        layer = Activation(kind)
        x = rng.standard_normal((b, 3, 2)) * 2
    elif kind == "flatten":
        layer = Flatten()
        x = rng.standard_normal((b, 2, 3, 2))
    elif kind == "concat":
        layer = Concat(axis=-1)
        x = [rng.standard_normal((b, 3, int(rng.integers(1, 4)))) for _ in range(2)]
    else:
        raise KeyError(kind)
    for p in layer.params.values():
        p[...] = rng.standard_normal(p.shape) * 0.7
    return layer, x
