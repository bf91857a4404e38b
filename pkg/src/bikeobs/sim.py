"""Kinematic bicycle model, Euler discretisation and noisy measurement channel.

State is the rear-axle pose ``(x, y, psi)``, input is ``(v, delta)``.
All headings returned by this module are wrapped to ``[-pi, pi)``.

A :class:`Trajectory` stores one record per applied input: record ``k``
holds the state reached *after* applying input ``k`` together with the
measurement of that state. The starting pose is kept separately in
``Trajectory.initial``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

# Table values are 3-sigma bounds.
PROCESS_3SIGMA = (0.2, 0.2, 3.4e-3)
MEASUREMENT_3SIGMA = (1.0, 1.0, 17.4e-3)

RNG_ALGORITHM = "numpy.random.PCG64 via SeedSequence"


class VehicleState(NamedTuple):
    x: float
    y: float
    psi: float


class ControlInput(NamedTuple):
    v: float
    delta: float


def wrap_angle(angle):
    """Wrap a scalar or array of angles to ``[-pi, pi)``."""
    # values already in range are returned untouched so wrapping is idempotent
    if np.ndim(angle) == 0:
        a = float(angle)
        if -math.pi <= a < math.pi:
            return a
        a = (a + math.pi) % TWO_PI - math.pi
        # fmod rounding can land exactly on +pi for tiny negative inputs
        return a - TWO_PI if a >= math.pi else a
    src = np.asarray(angle, dtype=float)
    a = np.mod(src + math.pi, TWO_PI) - math.pi
    a[a >= math.pi] -= TWO_PI
    inside = (src >= -math.pi) & (src < math.pi)
    a[inside] = src[inside]
    return a


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 2.7
    dt: float = 0.02

    def __post_init__(self):
        if not self.wheelbase > 0:
            raise ValueError(f"wheelbase must be positive, got {self.wheelbase}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")


@dataclass(frozen=True)
class NoiseSpec:
    """Per-axis standard deviations of process and base measurement noise.

    The effective measurement std-dev is ``alpha * sigma_meas_base``.
    """

    sigma_proc: tuple[float, float, float] = tuple(s / 3.0 for s in PROCESS_3SIGMA)
    sigma_meas_base: tuple[float, float, float] = tuple(s / 3.0 for s in MEASUREMENT_3SIGMA)
    alpha: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "sigma_proc", tuple(float(s) for s in self.sigma_proc))
        object.__setattr__(self, "sigma_meas_base", tuple(float(s) for s in self.sigma_meas_base))
        object.__setattr__(self, "alpha", float(self.alpha))
        if len(self.sigma_proc) != 3 or len(self.sigma_meas_base) != 3:
            raise ValueError("noise std-devs must be (x, y, psi) triples")
        if min(self.sigma_proc) < 0 or min(self.sigma_meas_base) < 0:
            raise ValueError("noise std-devs must be nonnegative")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")

    @property
    def sigma_meas(self) -> np.ndarray:
        return self.alpha * np.asarray(self.sigma_meas_base)

    def with_alpha(self, alpha: float) -> "NoiseSpec":
        return replace(self, alpha=alpha)

    @classmethod
    def noiseless(cls) -> "NoiseSpec":
        return cls((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), 0.0)

    def to_dict(self) -> dict:
        return {
            "sigma_proc": list(self.sigma_proc),
            "sigma_meas_base": list(self.sigma_meas_base),
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        return cls(tuple(d["sigma_proc"]), tuple(d["sigma_meas_base"]), d["alpha"])


def _check_input(v: float, delta: float) -> None:
    if not (math.isfinite(v) and math.isfinite(delta)):
        raise ValueError(f"non-finite control input ({v}, {delta})")
    if abs(delta) >= math.pi / 2:
        raise ValueError(f"|delta| must be < pi/2, got {delta}")
    if v < 0:
        raise ValueError(f"velocity must be nonnegative, got {v}")


def derivative(state: VehicleState, u: ControlInput, params: VehicleParams) -> tuple[float, float, float]:
    """Continuous-time state rate ``(V cos psi, V sin psi, V tan(delta) / L)``."""
    v, delta = u
    _check_input(v, delta)
    psi = state[2]
    return (v * math.cos(psi), v * math.sin(psi), v * math.tan(delta) / params.wheelbase)


def _euler(state, v, delta, params, w=(0.0, 0.0, 0.0)) -> VehicleState:
    x, y, psi = state
    dt = params.dt
    return VehicleState(
        x + v * math.cos(psi) * dt + w[0],
        y + v * math.sin(psi) * dt + w[1],
        wrap_angle(psi + v * math.tan(delta) / params.wheelbase * dt + w[2]),
    )


def step(
    state: VehicleState,
    u: ControlInput,
    params: VehicleParams,
    noise: NoiseSpec,
    rng: np.random.Generator,
) -> VehicleState:
    """One Euler step plus additive Gaussian process noise."""
    _check_input(*u)
    w = np.asarray(noise.sigma_proc) * rng.standard_normal(3)
    return _euler(state, u[0], u[1], params, w)


def measure(state: VehicleState, noise: NoiseSpec, rng: np.random.Generator) -> VehicleState:
    """Full-state measurement corrupted by ``N(0, (alpha * sigma)^2)`` noise."""
    v = noise.sigma_meas * rng.standard_normal(3)
    return VehicleState(state[0] + v[0], state[1] + v[1], wrap_angle(state[2] + v[2]))


def measure_many(states: np.ndarray, noise: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """Vectorised :func:`measure` over an ``(n, 3)`` array of states."""
    states = np.asarray(states, dtype=float)
    m = states + noise.sigma_meas * rng.standard_normal(states.shape)
    m[:, 2] = wrap_angle(m[:, 2])
    return m


@dataclass
class Trajectory:
    params: VehicleParams
    noise: NoiseSpec
    seed: int | Sequence[int]
    initial: VehicleState
    states: np.ndarray  # (n, 3) true states after each input
    inputs: np.ndarray  # (n, 2) applied (v, delta)
    measurements: np.ndarray  # (n, 3)
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def times(self) -> np.ndarray:
        return (np.arange(len(self)) + 1) * self.params.dt

    def with_measurements(self, measurements: np.ndarray, noise: NoiseSpec) -> "Trajectory":
        return replace(self, measurements=np.asarray(measurements, dtype=float), noise=noise)


def simulate(
    initial: VehicleState,
    inputs,
    params: VehicleParams,
    noise: NoiseSpec,
    seed,
) -> Trajectory:
    """Roll the noisy discrete model forward over ``inputs``.

    Process noise for every step is drawn first as one ``(n, 3)`` block,
    then measurement noise as a second block, so a trajectory is a pure
    function of ``(initial, inputs, params, noise, seed)``.
    """
    inputs = np.asarray(inputs, dtype=float).reshape(-1, 2)
    n = len(inputs)
    if n == 0:
        raise ValueError("inputs must be nonempty")
    if not np.all(np.isfinite(inputs)):
        raise ValueError("inputs contain NaN or inf")
    if np.any(inputs[:, 0] < 0) or np.any(np.abs(inputs[:, 1]) >= math.pi / 2):
        raise ValueError("inputs violate v >= 0 or |delta| < pi/2")

    rng = np.random.default_rng(seed)
    w = rng.standard_normal((n, 3)) * np.asarray(noise.sigma_proc)
    states = np.empty((n, 3))
    z = VehicleState(float(initial[0]), float(initial[1]), wrap_angle(initial[2]))
    for k in range(n):
        z = _euler(z, inputs[k, 0], inputs[k, 1], params, w[k])
        states[k] = z
    meas = measure_many(states, noise, rng)
    return Trajectory(params, noise, seed, VehicleState(*map(float, initial)), states, inputs, meas)
