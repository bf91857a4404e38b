"""Training, validation and test data generation.

Training data drives the bicycle open loop with inputs chosen so that the
realised accelerations fill the least populated cells of a friction-circle
grid. Validation and test data follow clothoid paths with a pure-pursuit
controller and a randomly accelerating speed profile.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq

from .sim import (
    NoiseSpec,
    Trajectory,
    VehicleParams,
    VehicleState,
    _euler,
    measure_many,
    wrap_angle,
)

log = logging.getLogger(__name__)

G = 9.81
ALPHA_GRID = tuple(0.25 * i for i in range(25))


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``; used for one trajectory."""
    return np.random.default_rng([int(seed), *map(int, keys)])


# ---------------------------------------------------------------------------
# friction circle grid
# ---------------------------------------------------------------------------


class AccelerationTarget(NamedTuple):
    ax: float
    ay: float


class FrictionGrid:
    """2-D occupancy histogram over world-frame accelerations ``(a_x, a_y)``.

    Only cells whose centre lies inside the circle are eligible targets.
    The set of minimum-count eligible cells is cached and maintained
    incrementally by :meth:`add`.
    """

    def __init__(self, radius: float = 0.5 * G, cells_per_axis: int = 64):
        if radius <= 0 or cells_per_axis < 1:
            raise ValueError("radius and cells_per_axis must be positive")
        self.radius = float(radius)
        self.cells_per_axis = int(cells_per_axis)
        self.cell_size = 2.0 * self.radius / self.cells_per_axis
        self.centers = -self.radius + (np.arange(self.cells_per_axis) + 0.5) * self.cell_size
        cx, cy = np.meshgrid(self.centers, self.centers, indexing="ij")
        self.eligible = cx**2 + cy**2 <= self.radius**2
        self._eligible_flat = np.flatnonzero(self.eligible)
        self._counts = np.zeros((self.cells_per_axis, self.cells_per_axis), dtype=np.int64)
        self._pool: list[int] | None = None
        self._pool_pos: dict[int, int] = {}

    @property
    def counts(self) -> np.ndarray:
        view = self._counts.view()
        view.flags.writeable = False
        return view

    def set_counts(self, counts) -> None:
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != self._counts.shape or np.any(counts < 0):
            raise ValueError("counts must be a nonnegative array of the grid shape")
        self._counts[...] = counts
        self._pool = None

    def cell_of(self, ax: float, ay: float) -> tuple[int, int] | None:
        i = math.floor((ax + self.radius) / self.cell_size)
        j = math.floor((ay + self.radius) / self.cell_size)
        n = self.cells_per_axis
        if 0 <= i < n and 0 <= j < n:
            return i, j
        return None

    def add(self, ax: float, ay: float) -> None:
        cell = self.cell_of(ax, ay)
        if cell is None:
            return
        self._counts[cell] += 1
        if self._pool is not None:
            flat = cell[0] * self.cells_per_axis + cell[1]
            pos = self._pool_pos.pop(flat, None)
            if pos is not None:
                last = self._pool.pop()
                if last != flat:
                    self._pool[pos] = last
                    self._pool_pos[last] = pos

    def min_cells(self) -> list[int]:
        """Flat indices of eligible cells holding the minimum count."""
        if not self._pool:
            c = self._counts.ravel()[self._eligible_flat]
            pool = self._eligible_flat[c == c.min()].tolist()
            self._pool = pool
            self._pool_pos = {f: k for k, f in enumerate(pool)}
        return self._pool

    def coverage(self) -> float:
        """Fraction of eligible cells with at least one sample."""
        return float(np.mean(self._counts[self.eligible] > 0))


def pick_target(grid: FrictionGrid, rng: np.random.Generator) -> AccelerationTarget:
    """Jittered centre of a uniformly chosen minimum-count eligible cell."""
    pool = grid.min_cells()
    u = rng.random(3)
    flat = pool[min(int(u[0] * len(pool)), len(pool) - 1)]
    i, j = divmod(flat, grid.cells_per_axis)
    cx, cy = grid.centers[i], grid.centers[j]
    ax = cx + (u[1] - 0.5) * grid.cell_size
    ay = cy + (u[2] - 0.5) * grid.cell_size
    if ax * ax + ay * ay > grid.radius**2:
        return AccelerationTarget(float(cx), float(cy))
    return AccelerationTarget(float(ax), float(ay))


# ---------------------------------------------------------------------------
# acceleration <-> input relations
# ---------------------------------------------------------------------------


class UnreachableTarget(ValueError):
    def __init__(self, msg, v_next, delta_next):
        super().__init__(msg)
        self.v_next = v_next
        self.delta_next = delta_next


def accelerations_from_inputs(v_k, v_k1, delta_k1, psi_k, dt, wheelbase) -> AccelerationTarget:
    """World-frame accelerations produced by switching to inputs ``(v_k1, delta_k1)``."""
    lon = (v_k1 - v_k) / dt
    lat = v_k1 * math.tan(delta_k1) / wheelbase * v_k
    c, s = math.cos(psi_k), math.sin(psi_k)
    return AccelerationTarget(lon * c - lat * s, lon * s + lat * c)


def solve_inputs_for_target(
    target: AccelerationTarget,
    v_k: float,
    psi_k: float,
    dt: float,
    wheelbase: float,
    v_min: float = 0.5,
    v_max: float = 30.0,
    delta_max: float = 0.5,
) -> tuple[float, float]:
    """Invert :func:`accelerations_from_inputs` for the next ``(V, delta)``.

    Raises :class:`UnreachableTarget` when the solution leaves the speed band
    or exceeds the steering limit.
    """
    if v_k < v_min:
        raise ValueError(f"v_k={v_k} below the floor v_min={v_min}")
    c, s = math.cos(psi_k), math.sin(psi_k)
    lon = target[0] * c + target[1] * s
    lat = -target[0] * s + target[1] * c
    v1 = v_k + dt * lon
    if v1 < v_min or v1 > v_max:
        raise UnreachableTarget(f"V_next={v1:.4g} outside [{v_min}, {v_max}]", v1, None)
    delta = math.atan(wheelbase * lat / (v1 * v_k))
    if abs(delta) > delta_max:
        raise UnreachableTarget(f"|delta|={abs(delta):.4g} > {delta_max}", v1, delta)
    return v1, delta


def nearest_feasible_inputs(target, v_k, psi_k, dt, wheelbase, v_min=0.5, v_max=30.0, delta_max=0.5):
    """Clamp the exact inversion into the feasible input box.

    Each body-frame acceleration component shrinks toward zero, so the
    realised acceleration never leaves the circle the target came from.
    """
    c, s = math.cos(psi_k), math.sin(psi_k)
    lon = target[0] * c + target[1] * s
    lat = -target[0] * s + target[1] * c
    v1 = min(max(v_k + dt * lon, v_min), v_max)
    delta = math.atan(wheelbase * lat / (v1 * v_k))
    return v1, min(max(delta, -delta_max), delta_max)


# ---------------------------------------------------------------------------
# dataset containers
# ---------------------------------------------------------------------------


@dataclass
class DatasetSplit:
    kind: str  # "train" | "validation" | "test"
    trajectories: list[Trajectory]
    alpha_levels: list[float]
    grid: FrictionGrid | None = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("train", "validation", "test"):
            raise ValueError(f"unknown split kind {self.kind!r}")

    @property
    def n_samples(self) -> int:
        return sum(len(t) for t in self.trajectories)

    def at_alpha(self, alpha: float) -> list[Trajectory]:
        out = [t for t in self.trajectories if math.isclose(t.noise.alpha, alpha, abs_tol=1e-12)]
        if not out:
            raise KeyError(f"no trajectories at alpha={alpha}")
        return out


# ---------------------------------------------------------------------------
# training set
# ---------------------------------------------------------------------------


@dataclass
class TrainingSetConfig:
    n_trajectories: int = 1000
    duration: float = 40.0
    params: VehicleParams = field(default_factory=VehicleParams)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0
    grid_radius: float = 0.5 * G
    cells_per_axis: int = 64
    v_min: float = 0.5
    v_max: float = 30.0
    delta_max: float = 0.5
    v_init: tuple[float, float] = (2.0, 25.0)
    max_redraws: int = 16

    @property
    def steps_per_trajectory(self) -> int:
        return int(round(self.duration / self.params.dt))


def _training_trajectory(cfg: TrainingSetConfig, index: int, grid: FrictionGrid) -> Trajectory:
    p = cfg.params
    n = cfg.steps_per_trajectory
    rng = stream(cfg.seed, 0, index)
    psi = float(rng.uniform(-math.pi, math.pi))
    v = float(rng.uniform(*cfg.v_init))
    initial = VehicleState(0.0, 0.0, psi)
    w = rng.standard_normal((n, 3)) * np.asarray(cfg.noise.sigma_proc)

    states = np.empty((n, 3))
    inputs = np.empty((n, 2))
    accel = np.empty((n, 2))
    z = initial
    lim = dict(v_min=cfg.v_min, v_max=cfg.v_max, delta_max=cfg.delta_max)
    for k in range(n):
        for _ in range(cfg.max_redraws):
            target = pick_target(grid, rng)
            try:
                v1, d1 = solve_inputs_for_target(target, v, z[2], p.dt, p.wheelbase, **lim)
                break
            except UnreachableTarget:
                continue
        else:
            v1, d1 = nearest_feasible_inputs(target, v, z[2], p.dt, p.wheelbase, **lim)
        a = accelerations_from_inputs(v, v1, d1, z[2], p.dt, p.wheelbase)
        grid.add(*a)
        accel[k] = a
        z = _euler(z, v1, d1, p, w[k])
        states[k] = z
        inputs[k] = (v1, d1)
        v = v1

    noise = cfg.noise.with_alpha(1.0)
    meas = measure_many(states, noise, rng)
    return Trajectory(p, noise, [cfg.seed, 0, index], initial, states, inputs, meas,
                      meta={"index": index, "accelerations": accel})


def generate_training_set(cfg: TrainingSetConfig = TrainingSetConfig()) -> DatasetSplit:
    """Friction-circle-diverse open-loop training data at ``alpha = 1``.

    Trajectories are generated sequentially and share one grid, so
    trajectory ``i`` depends on all earlier ones.
    """
    grid = FrictionGrid(cfg.grid_radius, cfg.cells_per_axis)
    trajs = []
    for i in range(cfg.n_trajectories):
        trajs.append(_training_trajectory(cfg, i, grid))
        if (i + 1) % 100 == 0:
            log.info("training trajectories: %d/%d, coverage %.3f", i + 1, cfg.n_trajectories, grid.coverage())
    return DatasetSplit("train", trajs, [1.0], grid=grid)


# ---------------------------------------------------------------------------
# clothoid paths
# ---------------------------------------------------------------------------


class ClothoidSegment(NamedTuple):
    length: float
    kappa_start: float
    kappa_end: float


@dataclass
class ClothoidPath:
    s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    curvature: np.ndarray

    def __len__(self) -> int:
        return len(self.s)

    @property
    def length(self) -> float:
        return float(self.s[-1])

    @property
    def ds(self) -> float:
        return float(np.mean(np.diff(self.s)))


def build_clothoid_path(
    segments: Sequence[ClothoidSegment],
    start: VehicleState = VehicleState(0.0, 0.0, 0.0),
    ds: float = 0.1,
) -> ClothoidPath:
    """Sample a chain of clothoid segments every ``~ds`` metres.

    Heading is integrated in closed form (curvature is linear in arc
    length); position uses a fourth-order Runge-Kutta step, which for a
    right-hand side depending only on ``s`` is Simpson's rule.
    """
    if not segments:
        raise ValueError("at least one segment required")
    s_out, x_out, y_out, th_out, k_out = [0.0], [start[0]], [start[1]], [start[2]], [segments[0][1]]
    s0, x, y, th0 = 0.0, float(start[0]), float(start[1]), float(start[2])
    for seg in segments:
        ell, k0, k1 = map(float, seg)
        if not ell > 0:
            raise ValueError(f"segment length must be positive, got {ell}")
        m = max(1, math.ceil(ell / ds - 1e-9))
        h = ell / m
        dk = (k1 - k0) / ell

        def theta(u, th0=th0, k0=k0, dk=dk):
            return th0 + k0 * u + 0.5 * dk * u * u

        for i in range(m):
            u = i * h
            ta, tm, tb = theta(u), theta(u + 0.5 * h), theta(u + h)
            x += h / 6.0 * (math.cos(ta) + 4.0 * math.cos(tm) + math.cos(tb))
            y += h / 6.0 * (math.sin(ta) + 4.0 * math.sin(tm) + math.sin(tb))
            s_out.append(s0 + u + h)
            x_out.append(x)
            y_out.append(y)
            th_out.append(tb)
            k_out.append(k0 + dk * (u + h))
        s0 += ell
        th0 = theta(ell)
    return ClothoidPath(np.array(s_out), np.array(x_out), np.array(y_out), np.array(th_out), np.array(k_out))


def sinusoid_segments(amplitude: float = 5.0, x_span: float = 200.0, n_lobes: int = 4):
    """Clothoid lobes alternating between ``+amplitude`` and ``-amplitude``.

    Each lobe ramps curvature 0 -> k -> 0 over two equal segments, turning
    the heading from ``+theta0`` to ``-theta0`` (or back). The path starts
    at an inflection point on ``y = 0`` with heading ``theta0``.
    Returns ``(segments, theta0)``.
    """

    def lobe(theta0, ell):
        k = 2.0 * theta0 / ell
        return [ClothoidSegment(ell, 0.0, -k), ClothoidSegment(ell, -k, 0.0)]

    def shape(theta0):
        p = build_clothoid_path(lobe(theta0, 1.0), VehicleState(0.0, 0.0, theta0), ds=1e-3)
        return p.x[-1], p.y.max()

    half = x_span / n_lobes
    ratio = amplitude / half
    theta0 = brentq(lambda t: shape(t)[1] / shape(t)[0] - ratio, 1e-4, 1.5, xtol=1e-12)
    ell = half / shape(theta0)[0]
    segs = []
    for j in range(n_lobes):
        sign = 1.0 if j % 2 == 0 else -1.0
        segs += [ClothoidSegment(q.length, sign * q.kappa_start, sign * q.kappa_end) for q in lobe(theta0, ell)]
    return segs, theta0


# ---------------------------------------------------------------------------
# pure pursuit
# ---------------------------------------------------------------------------


class EndOfPath(Exception):
    """The lookahead point would lie beyond the end of the path."""


def lookahead_distance(v: float) -> float:
    return max(3.0, 0.5 * v)


def nearest_index(path: ClothoidPath, x: float, y: float, start: int = 0, window: int | None = None) -> int:
    """Index of the path point closest to ``(x, y)``, searching forward from ``start``."""
    lo = max(0, start - 20)
    hi = len(path) if window is None else min(len(path), start + window)
    d2 = (path.x[lo:hi] - x) ** 2 + (path.y[lo:hi] - y) ** 2
    return lo + int(np.argmin(d2))


def pure_pursuit_steer(
    path: ClothoidPath,
    state: VehicleState,
    lookahead: float,
    wheelbase: float = 2.7,
    delta_max: float = 0.5,
    start: int = 0,
    window: int | None = None,
) -> float:
    """Steering angle toward the point one lookahead (arc length) past the nearest path point."""
    if len(path) == 0:
        raise ValueError("empty path")
    if not lookahead > 0:
        raise ValueError("lookahead must be positive")
    i = nearest_index(path, state[0], state[1], start, window)
    s_goal = path.s[i] + lookahead
    if s_goal > path.s[-1]:
        raise EndOfPath(f"goal at s={s_goal:.2f} beyond path end {path.s[-1]:.2f}")
    g = int(np.searchsorted(path.s, s_goal))
    eta = math.atan2(path.y[g] - state[1], path.x[g] - state[0]) - state[2]
    delta = math.atan(2.0 * wheelbase * math.sin(eta) / lookahead)
    return min(max(delta, -delta_max), delta_max)


def cross_track_errors(path: ClothoidPath, states: np.ndarray) -> np.ndarray:
    """Signed-free distance from each state to its nearest path point (monotone search)."""
    out = np.empty(len(states))
    idx = 0
    for k, (x, y, _) in enumerate(states):
        idx = nearest_index(path, x, y, idx, window=400)
        # refine against the polyline segment neighbours
        best = math.hypot(path.x[idx] - x, path.y[idx] - y)
        for a, b in ((idx - 1, idx), (idx, idx + 1)):
            if a < 0 or b >= len(path):
                continue
            px, py = path.x[a], path.y[a]
            qx, qy = path.x[b] - px, path.y[b] - py
            t = min(max(((x - px) * qx + (y - py) * qy) / (qx * qx + qy * qy), 0.0), 1.0)
            best = min(best, math.hypot(px + t * qx - x, py + t * qy - y))
        out[k] = best
    return out


def random_speed_profile(
    n_steps: int,
    dt: float,
    rng: np.random.Generator,
    v0: float,
    accel_max: float = 2.0,
    hold: float = 1.0,
    v_lo: float = 2.0,
    v_hi: float = 20.0,
) -> np.ndarray:
    """Speed per step from piecewise-constant random accelerations."""
    per = max(1, int(round(hold / dt)))
    acc = rng.uniform(-accel_max, accel_max, size=n_steps // per + 1)
    v = np.empty(n_steps)
    cur = v0
    for k in range(n_steps):
        cur = min(max(cur + acc[k // per] * dt, v_lo), v_hi)
        v[k] = cur
    return v


def follow_path(
    path: ClothoidPath,
    speeds: np.ndarray,
    params: VehicleParams,
    noise: NoiseSpec,
    rng: np.random.Generator,
    delta_max: float = 0.5,
    stop_at_end: bool = True,
):
    """Closed-loop pure-pursuit run; returns ``(initial, states, inputs)``.

    Stops early at the end of the path when ``stop_at_end``; otherwise
    reaching the end raises :class:`EndOfPath`.
    """
    initial = VehicleState(float(path.x[0]), float(path.y[0]), wrap_angle(float(path.heading[0])))
    n = len(speeds)
    w = rng.standard_normal((n, 3)) * np.asarray(noise.sigma_proc)
    states = np.empty((n, 3))
    inputs = np.empty((n, 2))
    z = initial
    idx = 0
    k = 0
    for k in range(n):
        v = float(speeds[k])
        idx = nearest_index(path, z[0], z[1], idx, window=400)
        try:
            d = pure_pursuit_steer(path, z, lookahead_distance(v), params.wheelbase, delta_max, idx, window=400)
        except EndOfPath:
            if not stop_at_end:
                raise
            return initial, states[:k], inputs[:k]
        z = _euler(z, v, d, params, w[k])
        states[k] = z
        inputs[k] = (v, d)
    return initial, states, inputs


# ---------------------------------------------------------------------------
# validation / test sets
# ---------------------------------------------------------------------------


@dataclass
class ValidationSetConfig:
    params: VehicleParams = field(default_factory=VehicleParams)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0
    amplitude: float = 5.0
    x_span: float = 200.0
    n_lobes: int = 4
    target_points: int = 995
    tolerance: int = 10
    v0: float = 10.0
    max_attempts: int = 2000


def generate_validation_set(cfg: ValidationSetConfig = ValidationSetConfig()) -> DatasetSplit:
    """Pure pursuit along the +-5 m clothoid sinusoid at ``alpha = 1``.

    The speed profile is redrawn (deterministically, attempt by attempt)
    until the run finishes the path within ``tolerance`` of ``target_points``
    steps.
    """
    segs, theta0 = sinusoid_segments(cfg.amplitude, cfg.x_span, cfg.n_lobes)
    path = build_clothoid_path(segs, VehicleState(0.0, 0.0, theta0))
    dt = cfg.params.dt
    for attempt in range(cfg.max_attempts):
        rng = stream(cfg.seed, 1, attempt)
        speeds = random_speed_profile(3 * cfg.target_points, dt, rng, cfg.v0)
        # open-loop estimate of the finishing step; skips hopeless profiles cheaply
        reach = np.cumsum(speeds) * dt + np.maximum(3.0, 0.5 * speeds)
        n_est = int(np.searchsorted(reach, path.length))
        if abs(n_est - cfg.target_points) > cfg.tolerance + 20:
            continue
        initial, states, inputs = follow_path(path, speeds, cfg.params, cfg.noise, rng)
        if abs(len(states) - cfg.target_points) <= cfg.tolerance:
            break
    else:
        raise RuntimeError(f"no speed profile finished the validation path in "
                           f"{cfg.target_points}+-{cfg.tolerance} steps after {cfg.max_attempts} attempts")
    noise = cfg.noise.with_alpha(1.0)
    meas = measure_many(states, noise, rng)
    traj = Trajectory(cfg.params, noise, [cfg.seed, 1, attempt], initial, states, inputs, meas,
                      meta={"index": 0, "attempt": attempt})
    return DatasetSplit("validation", [traj], [1.0], config={"path": path})


@dataclass
class TestSetConfig:
    params: VehicleParams = field(default_factory=VehicleParams)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0
    n_trajectories: int = 15
    total_points: int = 9829
    alpha_levels: tuple[float, ...] = ALPHA_GRID
    v_range: tuple[float, float] = (2.0, 20.0)
    severity: tuple[float, float] = (0.4, 0.95)
    segment_length: tuple[float, float] = (10.0, 40.0)
    friction_limit: float = 0.5 * G
    delta_max: float = 0.5

    def points_per_trajectory(self) -> list[int]:
        base, extra = divmod(self.total_points, self.n_trajectories)
        return [base + (i < extra) for i in range(self.n_trajectories)]


def random_clothoid_segments(rng, total_length, kappa_limit, segment_length=(10.0, 40.0)):
    """Random curvature-continuous segment chain of at least ``total_length`` metres."""
    segs = []
    k_prev = 0.0
    acc = 0.0
    while acc < total_length:
        ell = float(rng.uniform(*segment_length))
        if rng.random() < 0.2:
            k_next = 0.0
        else:
            k_next = float(rng.uniform(-kappa_limit, kappa_limit))
        segs.append(ClothoidSegment(ell, k_prev, k_next))
        k_prev = k_next
        acc += ell
    return segs


def _test_ground_truth(cfg: TestSetConfig, index: int, n_points: int):
    p = cfg.params
    rng = stream(cfg.seed, 2, index)
    v0 = float(rng.uniform(5.0, 15.0))
    speeds = random_speed_profile(n_points, p.dt, rng, v0, v_lo=cfg.v_range[0], v_hi=cfg.v_range[1])
    distance = float(np.sum(speeds) * p.dt)
    v_peak = float(speeds.max())
    kappa_cap = min(cfg.friction_limit / v_peak**2, math.tan(cfg.delta_max) / p.wheelbase)
    kappa_limit = float(rng.uniform(*cfg.severity)) * kappa_cap
    segs = random_clothoid_segments(rng, distance + lookahead_distance(cfg.v_range[1]) + 30.0,
                                    kappa_limit, cfg.segment_length)
    heading0 = float(rng.uniform(-math.pi, math.pi))
    path = build_clothoid_path(segs, VehicleState(0.0, 0.0, heading0))
    initial, states, inputs = follow_path(path, speeds, p, cfg.noise, rng, cfg.delta_max, stop_at_end=False)
    return path, initial, states, inputs, kappa_limit


def generate_test_sets(cfg: TestSetConfig = TestSetConfig()) -> DatasetSplit:
    """Clothoid test trajectories, each measured at every alpha level.

    True states are shared across levels; the measurement noise stream for
    level ``j`` of trajectory ``i`` is keyed by ``(seed, 2, i, j + 1)``.
    """
    trajs = []
    paths = []
    for i, n in enumerate(cfg.points_per_trajectory()):
        try:
            path, initial, states, inputs, klim = _test_ground_truth(cfg, i, n)
        except EndOfPath as exc:
            raise RuntimeError(f"test trajectory {i}: controller left the path ({exc})") from exc
        paths.append(path)
        for j, alpha in enumerate(cfg.alpha_levels):
            noise = cfg.noise.with_alpha(alpha)
            meas = measure_many(states, noise, stream(cfg.seed, 2, i, j + 1))
            trajs.append(Trajectory(cfg.params, noise, [cfg.seed, 2, i, j + 1], initial, states, inputs, meas,
                                    meta={"index": i, "kappa_limit": klim}))
    return DatasetSplit("test", trajs, list(cfg.alpha_levels), config={"paths": paths})
