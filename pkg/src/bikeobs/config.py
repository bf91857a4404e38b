"""Run configuration: defaults, JSON round-trip, validation and path overrides."""
from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from .datagen import ALPHA_GRID, TestSetConfig, TrainingSetConfig, ValidationSetConfig
from .observer import CNN_MIN_WINDOW, TrainConfig
from .sim import NoiseSpec, VehicleParams

PATH_ENV = {"data_dir": "BIKEOBS_DATA_DIR", "model_dir": "BIKEOBS_MODEL_DIR", "report_dir": "BIKEOBS_REPORT_DIR"}


class ConfigError(ValueError):
    pass


@dataclass
class Paths:
    data_dir: str = "data"
    model_dir: str = "models"
    report_dir: str = "reports"


@dataclass
class Generation:
    train_trajectories: int = 1000
    train_duration: float = 40.0
    val_points: int = 995
    test_trajectories: int = 15
    test_points: int = 9829


@dataclass
class Training:
    lr: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 200
    patience: int = 10
    optimizer: str = "adam"
    max_train_windows: int | None = None
    time_budget: float | None = None
    grid_lr: list[float] = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    grid_batch_size: list[int] = field(default_factory=lambda: [128, 256, 512])
    grid_max_epochs: int = 5


@dataclass
class RunConfig:
    paths: Paths = field(default_factory=Paths)
    wheelbase: float = 2.7
    dt: float = 0.02
    sigma_proc: list[float] = field(default_factory=lambda: list(NoiseSpec().sigma_proc))
    sigma_meas: list[float] = field(default_factory=lambda: list(NoiseSpec().sigma_meas_base))
    generation: Generation = field(default_factory=Generation)
    training: Training = field(default_factory=Training)
    alpha_grid: list[float] = field(default_factory=lambda: list(ALPHA_GRID))
    weights_mode: str = "frozen"
    seed: int = 0

    # -- derived objects ---------------------------------------------------
    @property
    def params(self) -> VehicleParams:
        return VehicleParams(self.wheelbase, self.dt)

    @property
    def noise(self) -> NoiseSpec:
        return NoiseSpec(tuple(self.sigma_proc), tuple(self.sigma_meas), 1.0)

    def training_set(self, scale: float = 1.0) -> TrainingSetConfig:
        n = max(1, int(round(self.generation.train_trajectories * scale)))
        return TrainingSetConfig(n_trajectories=n, duration=self.generation.train_duration, params=self.params,
                                 noise=self.noise, seed=self.seed)

    def validation_set(self) -> ValidationSetConfig:
        return ValidationSetConfig(params=self.params, noise=self.noise, seed=self.seed,
                                   target_points=self.generation.val_points)

    def test_set(self) -> TestSetConfig:
        return TestSetConfig(params=self.params, noise=self.noise, seed=self.seed,
                             n_trajectories=self.generation.test_trajectories,
                             total_points=self.generation.test_points, alpha_levels=tuple(self.alpha_grid))

    def train_config(self, **overrides) -> TrainConfig:
        t = self.training
        base = TrainConfig(lr=t.lr, batch_size=t.batch_size, max_epochs=t.max_epochs, patience=t.patience,
                           optimizer=t.optimizer, seed=self.seed, max_train_windows=t.max_train_windows,
                           time_budget=t.time_budget)
        return dataclasses.replace(base, **{k: v for k, v in overrides.items() if v is not None})

    # -- validation ----------------------------------------------------------
    def validate(self) -> "RunConfig":
        errs = []
        if not (self.dt > 0 and math.isfinite(self.dt)):
            errs.append(f"dt must be positive, got {self.dt}")
        if not (self.wheelbase > 0 and math.isfinite(self.wheelbase)):
            errs.append(f"wheelbase must be positive, got {self.wheelbase}")
        for name in ("sigma_proc", "sigma_meas"):
            v = getattr(self, name)
            if len(v) != 3 or any(not (s >= 0 and math.isfinite(s)) for s in v):
                errs.append(f"{name} must be three nonnegative numbers, got {v}")
        if any(not (a >= 0) for a in self.alpha_grid) or not self.alpha_grid:
            errs.append("alpha grid must be a nonempty list of nonnegative levels")
        g = self.generation
        for name in ("train_trajectories", "val_points", "test_trajectories", "test_points"):
            if getattr(g, name) < 1:
                errs.append(f"generation.{name} must be positive")
        if g.train_duration <= 0:
            errs.append("generation.train_duration must be positive")
        if g.test_points < g.test_trajectories:
            errs.append("generation.test_points must be at least one point per trajectory")
        t = self.training
        if not t.lr > 0:
            errs.append("training.lr must be positive")
        if t.batch_size < 1 or t.max_epochs < 1 or t.patience < 1:
            errs.append("training.batch_size, max_epochs and patience must be positive")
        if t.optimizer not in ("adam", "sgd"):
            errs.append(f"unknown optimizer {t.optimizer!r}")
        if self.weights_mode not in ("frozen", "measured"):
            errs.append(f"weights_mode must be 'frozen' or 'measured', got {self.weights_mode!r}")
        if errs:
            raise ConfigError("; ".join(errs))
        return self

    # -- files ---------------------------------------------------------------
    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        sections = {"paths": Paths, "generation": Generation, "training": Training}
        for key, typ in sections.items():
            if key in d:
                sub = dict(d[key])
                bad = set(sub) - {f.name for f in dataclasses.fields(typ)}
                if bad:
                    raise ConfigError(f"unknown keys in {key}: {sorted(bad)}")
                d[key] = typ(**sub)
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    def with_env_paths(self, environ=os.environ) -> "RunConfig":
        """Copy with path fields overridden by ``BIKEOBS_*_DIR`` variables."""
        over = {k: environ[v] for k, v in PATH_ENV.items() if environ.get(v)}
        return dataclasses.replace(self, paths=dataclasses.replace(self.paths, **over))


def check_window(kind: str, n_window: int) -> None:
    if kind == "cnn" and n_window < CNN_MIN_WINDOW:
        raise ConfigError(f"CNN window must be at least {CNN_MIN_WINDOW}, got {n_window}")
    if n_window < 1:
        raise ConfigError(f"window must be positive, got {n_window}")
