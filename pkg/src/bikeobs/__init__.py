"""Kinematic bicycle simulator, EKF and learned windowed observers with a noise-sweep benchmark."""
from .sim import NoiseSpec, Trajectory, VehicleParams, VehicleState, ControlInput, simulate, wrap_angle

__version__ = "0.1.0"

__all__ = ["ControlInput", "NoiseSpec", "Trajectory", "VehicleParams", "VehicleState", "simulate", "wrap_angle"]
