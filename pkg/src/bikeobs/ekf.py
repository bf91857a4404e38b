"""Extended Kalman filter on the discrete kinematic bicycle model.

Prediction uses the noise-free Euler step; the update consumes a direct
measurement of the full state (``H = I``) with the heading innovation
wrapped. Covariance updates use the Joseph form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .sim import NoiseSpec, Trajectory, VehicleParams, wrap_angle

_I3 = np.eye(3)


@dataclass
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).copy()
        self.mean[2] = wrap_angle(self.mean[2])
        self.cov = np.asarray(self.cov, dtype=float).copy()


@dataclass
class EkfConfig:
    Q: np.ndarray
    R: np.ndarray
    params: VehicleParams = field(default_factory=VehicleParams)

    @classmethod
    def from_noise(cls, noise: NoiseSpec = NoiseSpec(), params: VehicleParams = VehicleParams()) -> "EkfConfig":
        """Matched filter for the ``alpha = 1`` noise level."""
        q = np.diag(np.square(noise.sigma_proc))
        r = np.diag(np.square(noise.sigma_meas_base))
        return cls(q, r, params)


def jacobian_f(state, u, params: VehicleParams) -> np.ndarray:
    """Analytic ``d f / d z`` of the continuous model."""
    v = u[0]
    psi = state[2]
    J = np.zeros((3, 3))
    J[0, 2] = -v * math.sin(psi)
    J[1, 2] = v * math.cos(psi)
    return J


def predict(belief: GaussianBelief, u, config: EkfConfig) -> GaussianBelief:
    p = config.params
    x, y, psi = belief.mean
    v, delta = u
    mean = np.array([
        x + v * math.cos(psi) * p.dt,
        y + v * math.sin(psi) * p.dt,
        psi + v * math.tan(delta) / p.wheelbase * p.dt,
    ])
    F = _I3 + p.dt * jacobian_f(belief.mean, u, p)
    cov = F @ belief.cov @ F.T + config.Q
    return GaussianBelief(mean, 0.5 * (cov + cov.T))


def update(belief: GaussianBelief, measurement, config: EkfConfig) -> GaussianBelief:
    m = np.asarray(measurement, dtype=float)
    if not np.all(np.isfinite(m)):
        raise ValueError(f"non-finite measurement {m}")
    nu = m - belief.mean
    nu[2] = wrap_angle(nu[2])
    S = belief.cov + config.R
    try:
        K = np.linalg.solve(S.T, belief.cov.T).T
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"innovation covariance is singular:\n{S}") from exc
    A = _I3 - K
    cov = A @ belief.cov @ A.T + K @ config.R @ K.T
    return GaussianBelief(belief.mean + K @ nu, 0.5 * (cov + cov.T))


def run_ekf(traj: Trajectory, config: EkfConfig, return_cov: bool = False):
    """Filter a whole trajectory; one estimate per record.

    The belief starts at the first measurement with covariance ``R``. For
    every later record the filter predicts with that record's input (the
    input that produced the record's state) and updates with its
    measurement.
    """
    n = len(traj)
    if n == 0:
        raise ValueError("empty trajectory")
    est = np.empty((n, 3))
    pdiag = np.empty((n, 3))
    b = GaussianBelief(traj.measurements[0], config.R)
    est[0], pdiag[0] = b.mean, np.diag(b.cov)
    for k in range(1, n):
        b = update(predict(b, traj.inputs[k], config), traj.measurements[k], config)
        est[k], pdiag[k] = b.mean, np.diag(b.cov)
    if return_cov:
        return est, pdiag
    return est
