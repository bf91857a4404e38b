"""Windowed learned observers (CNN and LSTM) built on :mod:`bikeobs.nn`.

A window holds the ``N`` most recent rows of ``(x_m, y_m, psi_m, V, delta)``
ending at the current step; the target is the true state at that step.
Features and targets are expressed relative to the newest measurement
(the anchor): positions are shifted to the anchor and rotated into its
heading frame, headings become wrapped differences. This makes every
estimate exactly translation- and rotation-equivariant whatever the
network weights are.
"""
from __future__ import annotations

import dataclasses
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .nn import (
    LSTM,
    Activation,
    Conv2D,
    Dense,
    Flatten,
    MaxPool2D,
    Network,
    make_optimizer,
    mse_loss,
    xavier_init,
)
from .sim import Trajectory, VehicleState, wrap_angle

log = logging.getLogger(__name__)

N_FEATURES = 5
REFERENCE_WINDOWS = (20, 40, 60, 80)
CNN_MIN_WINDOW = 12


class WindowSample(NamedTuple):
    features: np.ndarray  # (N, 5), oldest row first
    target: np.ndarray  # (3,)


@dataclass(frozen=True)
class Scales:
    """Per-channel divisors applied after anchoring."""

    pos: float = 10.0
    psi: float = 0.2
    v: float = 30.0
    delta: float = 0.5
    target_pos: float = 1.0 / 3.0
    target_psi: float = 5.8e-3


@dataclass
class NormalizationContext:
    anchor_xy: np.ndarray  # (B, 2)
    anchor_psi: np.ndarray  # (B,)
    scales: Scales = field(default_factory=Scales)


def trajectory_features(traj: Trajectory) -> np.ndarray:
    """``(n, 5)`` rows of measurement and input; never touches true states."""
    return np.column_stack([traj.measurements, traj.inputs])


def build_windows(traj: Trajectory, n_window: int) -> list[WindowSample]:
    """All ``len(traj) - N + 1`` windows of one trajectory, in time order."""
    if len(traj) < n_window:
        log.warning("trajectory of %d steps is shorter than the window N=%d", len(traj), n_window)
        return []
    feats = sliding_window_view(trajectory_features(traj), n_window, axis=0).transpose(0, 2, 1)
    targets = traj.states[n_window - 1:]
    return [WindowSample(f, t) for f, t in zip(feats, targets)]


def normalize(features: np.ndarray, targets: np.ndarray | None = None, scales: Scales = Scales()):
    """Anchor-relative features ``(B, N, 5)`` (and targets ``(B, 3)``).

    Returns ``(features, targets_or_None, context)``.
    """
    features = np.asarray(features, dtype=float)
    single = features.ndim == 2
    if single:
        features = features[None]
        targets = None if targets is None else np.asarray(targets, dtype=float)[None]
    anchor = features[:, -1, :3]
    c = np.cos(anchor[:, 2])[:, None]
    s = np.sin(anchor[:, 2])[:, None]
    dx = features[:, :, 0] - anchor[:, 0:1]
    dy = features[:, :, 1] - anchor[:, 1:2]
    out = np.empty_like(features)
    out[:, :, 0] = (c * dx + s * dy) / scales.pos
    out[:, :, 1] = (-s * dx + c * dy) / scales.pos
    out[:, :, 2] = wrap_angle(features[:, :, 2] - anchor[:, 2:3]) / scales.psi
    out[:, :, 3] = features[:, :, 3] / scales.v
    out[:, :, 4] = features[:, :, 4] / scales.delta
    ctx = NormalizationContext(anchor[:, :2].copy(), anchor[:, 2].copy(), scales)
    tn = None
    if targets is not None:
        tn = _to_anchor_frame(np.asarray(targets, dtype=float), ctx)
    if single:
        out = out[0]
        tn = None if tn is None else tn[0]
    return out, tn, ctx


def _to_anchor_frame(states: np.ndarray, ctx: NormalizationContext) -> np.ndarray:
    sc = ctx.scales
    c, s = np.cos(ctx.anchor_psi), np.sin(ctx.anchor_psi)
    dx = states[:, 0] - ctx.anchor_xy[:, 0]
    dy = states[:, 1] - ctx.anchor_xy[:, 1]
    return np.column_stack([
        (c * dx + s * dy) / sc.target_pos,
        (-s * dx + c * dy) / sc.target_pos,
        wrap_angle(states[:, 2] - ctx.anchor_psi) / sc.target_psi,
    ])


def denormalize(pred: np.ndarray, ctx: NormalizationContext) -> np.ndarray:
    """Map network outputs ``(B, 3)`` back to world-frame states."""
    pred = np.asarray(pred, dtype=float)
    single = pred.ndim == 1
    pred = np.atleast_2d(pred)
    sc = ctx.scales
    c, s = np.cos(ctx.anchor_psi), np.sin(ctx.anchor_psi)
    rx, ry = pred[:, 0] * sc.target_pos, pred[:, 1] * sc.target_pos
    out = np.column_stack([
        ctx.anchor_xy[:, 0] + c * rx - s * ry,
        ctx.anchor_xy[:, 1] + s * rx + c * ry,
        wrap_angle(ctx.anchor_psi + pred[:, 2] * sc.target_psi),
    ])
    return out[0] if single else out


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------


@dataclass
class ObserverModel:
    kind: str  # "cnn" | "lstm"
    n_window: int
    network: Network
    scales: Scales = field(default_factory=Scales)
    fingerprint: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return f"{self.kind}_n{self.n_window}"

    def _net_input(self, feats: np.ndarray) -> np.ndarray:
        return feats[..., None] if self.kind == "cnn" else feats

    def forward_normalized(self, feats: np.ndarray, training: bool = False) -> np.ndarray:
        return self.network.forward(self._net_input(feats), training)

    def save(self, path) -> None:
        meta = {"kind": self.kind, "n_window": self.n_window, "scales": dataclasses.asdict(self.scales),
                "fingerprint": self.fingerprint}
        self.network.save(path, meta)

    @classmethod
    def load(cls, path) -> "ObserverModel":
        net, meta = Network.load(path)
        return cls(meta["kind"], meta["n_window"], net, Scales(**meta["scales"]), meta.get("fingerprint", {}))


def cnn_shapes(n_window: int) -> list[tuple[int, int]]:
    """(time, signal) extents after each stage: two 5x1 convs, 4x1 pool, two 1x3 convs."""
    t1 = n_window - 4
    t2 = t1 - 4
    t3 = t2 // 4
    return [(n_window, 5), (t1, 5), (t2, 5), (t3, 5), (t3, 3), (t3, 1)]


def build_cnn(n_window: int, channels: tuple[int, int] = (8, 16), hidden: int = 64, seed: int = 0) -> ObserverModel:
    """Temporal 5x1 conv stack shared across signals, 4x1 pool, 1x3 cross-signal convs, two dense layers."""
    if n_window < CNN_MIN_WINDOW:
        raise ValueError(f"CNN needs N >= {CNN_MIN_WINDOW} (two 5x1 convs then a 4x1 pool), got {n_window}")
    if n_window not in REFERENCE_WINDOWS:
        log.info("CNN window N=%d is outside the reference set %s", n_window, REFERENCE_WINDOWS)
    c1, c2 = channels
    t3 = cnn_shapes(n_window)[3][0]
    layers = [
        Conv2D(1, c1, (5, 1)), Activation("sigmoid"),
        Conv2D(c1, c1, (5, 1)), MaxPool2D((4, 1)), Activation("sigmoid"),
        Conv2D(c1, c2, (1, 3)), Activation("sigmoid"),
        Conv2D(c2, c2, (1, 3)), Activation("sigmoid"),
        Flatten(),
        Dense(c2 * t3, hidden), Activation("sigmoid"),
        Dense(hidden, 3),
    ]
    net = Network(layers, (n_window, N_FEATURES, 1))
    xavier_init(net, np.random.default_rng([seed, n_window, 1]))
    return ObserverModel("cnn", n_window, net, fingerprint={"seed": seed, "channels": list(channels), "hidden": hidden})


def build_lstm(n_window: int, widths: Sequence[int] = (8, 16, 32, 32), hidden: int = 64, seed: int = 0) -> ObserverModel:
    """Stacked LSTMs over the window; the last hidden state feeds two dense layers."""
    if n_window < 1:
        raise ValueError("window must be at least one step")
    layers = []
    d = N_FEATURES
    for k, w in enumerate(widths):
        layers.append(LSTM(d, w, return_sequences=k < len(widths) - 1))
        d = w
    layers += [Dense(d, hidden), Activation("sigmoid"), Dense(hidden, 3)]
    net = Network(layers, (n_window, N_FEATURES))
    xavier_init(net, np.random.default_rng([seed, n_window, 2]))
    return ObserverModel("lstm", n_window, net, fingerprint={"seed": seed, "widths": list(widths), "hidden": hidden})


def build_model(kind: str, n_window: int, seed: int = 0, **kw) -> ObserverModel:
    if kind == "cnn":
        return build_cnn(n_window, seed=seed, **kw)
    if kind == "lstm":
        return build_lstm(n_window, seed=seed, **kw)
    raise ValueError(f"unknown observer kind {kind!r}")


# ---------------------------------------------------------------------------
# window sets and training
# ---------------------------------------------------------------------------


class WindowSet:
    """Lazily assembled windows over a list of trajectories.

    Rows of all trajectories are concatenated once; a window is identified
    by the global index of its newest row, and only indices whose whole
    window lies inside one trajectory are kept.
    """

    def __init__(self, trajectories: Sequence[Trajectory], n_window: int):
        self.n_window = n_window
        feats, targets, ends = [], [], []
        offset = 0
        for traj in trajectories:
            n = len(traj)
            feats.append(trajectory_features(traj))
            targets.append(traj.states)
            if n >= n_window:
                ends.append(np.arange(offset + n_window - 1, offset + n))
            offset += n
        self.features = np.concatenate(feats) if feats else np.empty((0, N_FEATURES))
        self.targets = np.concatenate(targets) if targets else np.empty((0, 3))
        self.ends = np.concatenate(ends) if ends else np.empty(0, dtype=np.int64)
        self._offsets = np.arange(-n_window + 1, 1)

    def __len__(self) -> int:
        return len(self.ends)

    def raw(self, idx) -> tuple[np.ndarray, np.ndarray]:
        rows = self.ends[idx][:, None] + self._offsets
        return self.features[rows], self.targets[self.ends[idx]]

    def batch(self, idx, scales: Scales) -> tuple[np.ndarray, np.ndarray]:
        f, t = self.raw(idx)
        fn, tn, _ = normalize(f, t, scales)
        return fn, tn


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 200
    patience: int = 10
    optimizer: str = "adam"
    seed: int = 0
    max_train_windows: int | None = None
    time_budget: float | None = None  # seconds; stops after the epoch that crosses it


class TrainingDiverged(FloatingPointError):
    def __init__(self, msg, model):
        super().__init__(msg)
        self.model = model


def evaluate_mse(model: ObserverModel, windows: WindowSet, batch_size: int = 2048) -> float:
    total = 0.0
    count = 0
    for i in range(0, len(windows), batch_size):
        idx = np.arange(i, min(i + batch_size, len(windows)))
        f, t = windows.batch(idx, model.scales)
        pred = model.forward_normalized(f)
        total += float(np.sum((pred - t) ** 2))
        count += t.size
    return total / count


def train(model: ObserverModel, train_trajs, val_trajs, config: TrainConfig = TrainConfig()):
    """Mini-batch MSE training with validation early stopping.

    Returns ``(model, history)``; the model carries the parameters of the
    epoch with the lowest validation MSE.
    """
    train_trajs = getattr(train_trajs, "trajectories", train_trajs)
    val_trajs = getattr(val_trajs, "trajectories", val_trajs)
    tw = WindowSet(train_trajs, model.n_window)
    vw = WindowSet(val_trajs, model.n_window)
    if len(tw) == 0 or len(vw) == 0:
        raise ValueError("training and validation sets must each yield at least one window")
    rng = np.random.default_rng([config.seed, model.n_window, 7])
    pool = np.arange(len(tw))
    if config.max_train_windows is not None and config.max_train_windows < len(tw):
        pool = np.sort(rng.choice(len(tw), config.max_train_windows, replace=False))
    opt = make_optimizer(config.optimizer, config.lr)
    params = model.network.params

    best = (math.inf, model.network.get_params(), -1)
    history = []
    stale = 0
    t0 = time.perf_counter()
    for epoch in range(config.max_epochs):
        order = rng.permutation(pool)
        total, count = 0.0, 0
        for i in range(0, len(order), config.batch_size):
            f, t = tw.batch(order[i:i + config.batch_size], model.scales)
            try:
                pred = model.forward_normalized(f, training=True)
                loss, dy = mse_loss(pred, t)
                grads = model.network.backward(dy)
            except FloatingPointError as exc:
                model.network.set_params(best[1])
                raise TrainingDiverged(f"epoch {epoch}: {exc}", model) from exc
            opt.step(params, grads)
            total += loss * t.size
            count += t.size
        val = evaluate_mse(model, vw)
        history.append({"epoch": epoch, "train_mse": total / count, "val_mse": val})
        log.info("%s epoch %d train %.5f val %.5f", model.name, epoch, total / count, val)
        if not math.isfinite(val):
            model.network.set_params(best[1])
            raise TrainingDiverged(f"epoch {epoch}: validation loss is {val}", model)
        if val < best[0]:
            best = (val, model.network.get_params(), epoch)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
        if config.time_budget is not None and time.perf_counter() - t0 > config.time_budget:
            log.info("%s: time budget reached after epoch %d", model.name, epoch)
            break
    model.network.set_params(best[1])
    model.fingerprint = {**model.fingerprint, **dataclasses.asdict(config), "best_epoch": best[2],
                         "best_val_mse": best[0], "epochs_run": len(history)}
    return model, history


def grid_search(kind: str, train_trajs, val_trajs, grids: dict[str, Sequence], n_window: int = 20,
                base: TrainConfig = TrainConfig(max_epochs=5, patience=3), seed: int = 0):
    """Train one reduced-budget model per grid point; pick the lowest validation MSE.

    Returns ``(best_point, results)`` where ``results`` lists every point
    with its best validation MSE.
    """
    keys = sorted(grids)
    results = []
    for values in itertools.product(*(grids[k] for k in keys)):
        point = dict(zip(keys, values))
        cfg = dataclasses.replace(base, **point)
        model = build_model(kind, n_window, seed=seed)
        try:
            _, hist = train(model, train_trajs, val_trajs, cfg)
            score = min(h["val_mse"] for h in hist)
        except TrainingDiverged:
            score = math.inf
        results.append({**point, "val_mse": score})
        log.info("grid %s %s -> %.5f", kind, point, score)
    best = min(results, key=lambda r: r["val_mse"])
    return {k: best[k] for k in keys}, results


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------


def infer(model: ObserverModel, window: np.ndarray) -> VehicleState:
    """Estimate the current state from one ``(N, 5)`` window."""
    window = np.asarray(window, dtype=float)
    if window.shape != (model.n_window, N_FEATURES):
        raise ValueError(f"window must be ({model.n_window}, {N_FEATURES}), got {window.shape}")
    fn, _, ctx = normalize(window[None], None, model.scales)
    return VehicleState(*map(float, denormalize(model.forward_normalized(fn), ctx)[0]))


def estimate_windows(model: ObserverModel, features: np.ndarray, batch_size: int = 4096) -> np.ndarray:
    """Batched :func:`infer` over ``(B, N, 5)`` raw windows."""
    out = np.empty((len(features), 3))
    for i in range(0, len(features), batch_size):
        fn, _, ctx = normalize(features[i:i + batch_size], None, model.scales)
        out[i:i + batch_size] = denormalize(model.forward_normalized(fn), ctx)
    return out


def estimate_trajectory(model: ObserverModel, traj: Trajectory) -> np.ndarray:
    """Estimates for steps ``N-1 .. n-1`` of a trajectory."""
    if len(traj) < model.n_window:
        return np.empty((0, 3))
    feats = sliding_window_view(trajectory_features(traj), model.n_window, axis=0).transpose(0, 2, 1)
    return estimate_windows(model, feats)
