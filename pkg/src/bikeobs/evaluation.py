"""Error metrics, the noise-level sweep, variant selection and report files."""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np

from .datagen import DatasetSplit, FrictionGrid
from .ekf import EkfConfig, run_ekf
from .observer import ObserverModel, estimate_trajectory
from .sim import Trajectory, wrap_angle

log = logging.getLogger(__name__)

# Reference RMSEs of the EKF at alpha = 1 used for the frozen weighting.
FROZEN_REFERENCE = (0.24, 0.23, 4.1e-3)
CROSSOVER_TARGETS = {"cnn": 2.0, "lstm": 3.0}


@dataclass(frozen=True)
class ErrorReport:
    observer: str
    alpha: float
    e_x: float
    e_y: float
    e_psi: float
    n: int

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError("error report needs at least one sample")
        if min(self.e_x, self.e_y, self.e_psi) < 0:
            raise ValueError("RMSE values must be nonnegative")

    @property
    def triple(self) -> np.ndarray:
        return np.array([self.e_x, self.e_y, self.e_psi])


def _errors(estimates, truths) -> np.ndarray:
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    tru = np.atleast_2d(np.asarray(truths, dtype=float))
    if est.shape != tru.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {tru.shape}")
    if len(est) == 0:
        raise ValueError("no samples")
    err = est - tru
    err[:, 2] = wrap_angle(err[:, 2])
    return err


def rmse(estimates, truths) -> np.ndarray:
    """Per-variable RMSE ``(E_x, E_y, E_psi)``; heading errors are wrapped."""
    return np.sqrt(np.mean(_errors(estimates, truths) ** 2, axis=0))


@dataclass(frozen=True)
class NrmseWeights:
    w_x: float
    w_y: float
    w_psi: float
    e_ref: tuple[float, float, float]

    @classmethod
    def from_reference(cls, e_ref) -> "NrmseWeights":
        e = tuple(float(v) for v in e_ref)
        if min(e) <= 0 or not all(map(math.isfinite, e)):
            raise ValueError(f"reference RMSEs must be positive and finite, got {e}")
        return cls(*(1.0 / (3.0 * v * v) for v in e), e_ref=e)

    @classmethod
    def frozen(cls) -> "NrmseWeights":
        return cls.from_reference(FROZEN_REFERENCE)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.w_x, self.w_y, self.w_psi])


def nrmse(report, weights: NrmseWeights) -> float:
    e = report.triple if isinstance(report, ErrorReport) else np.asarray(report, dtype=float)
    return float(np.sqrt(np.dot(weights.vector, e * e)))


def calibrate_reference(report: ErrorReport, mode: str = "measured") -> NrmseWeights:
    """Weights normalising ``report`` to 1 (``measured``) or the fixed constants (``frozen``)."""
    if mode == "frozen":
        return NrmseWeights.frozen()
    if mode != "measured":
        raise ValueError(f"unknown calibration mode {mode!r}")
    if not math.isclose(report.alpha, 1.0):
        log.warning("calibrating on a report at alpha=%g instead of 1", report.alpha)
    if min(report.triple) <= 0:
        raise ValueError("cannot calibrate on a zero RMSE")
    return NrmseWeights.from_reference(report.triple)


# ---------------------------------------------------------------------------
# observers under evaluation
# ---------------------------------------------------------------------------


class Observer(Protocol):
    name: str
    warmup: int  # leading steps per trajectory without an estimate

    def estimate(self, traj: Trajectory) -> np.ndarray:
        """``(n - warmup, 3)`` estimates for steps ``warmup .. n-1``."""


class EkfObserver:
    warmup = 0

    def __init__(self, config: EkfConfig, name: str = "ekf"):
        self.config = config
        self.name = name

    def estimate(self, traj: Trajectory) -> np.ndarray:
        return run_ekf(traj, self.config)


class LearnedObserver:
    def __init__(self, model: ObserverModel, name: str | None = None):
        self.model = model
        self.name = name or model.name
        self.warmup = model.n_window - 1

    def estimate(self, traj: Trajectory) -> np.ndarray:
        return estimate_trajectory(self.model, traj)


class MeasurementObserver:
    """Returns the raw measurement: the do-nothing baseline."""

    warmup = 0
    name = "identity"

    def estimate(self, traj: Trajectory) -> np.ndarray:
        return traj.measurements.copy()


@dataclass(frozen=True)
class SweepRow:
    report: ErrorReport
    nrmse: float


def evaluate_observer(observer: Observer, trajectories: Sequence[Trajectory], skip: int, alpha: float) -> ErrorReport:
    """Pooled RMSE over all trajectories, dropping the first ``skip`` steps of each."""
    if skip < observer.warmup:
        raise ValueError(f"{observer.name} needs skip >= {observer.warmup}")
    sq = np.zeros(3)
    n = 0
    for traj in trajectories:
        if len(traj) <= skip:
            continue
        est = observer.estimate(traj)[skip - observer.warmup:]
        err = _errors(est, traj.states[skip:])
        sq += np.sum(err * err, axis=0)
        n += len(err)
    if n == 0:
        raise ValueError("no retained samples: every trajectory is shorter than the warm-up")
    e = np.sqrt(sq / n)
    return ErrorReport(observer.name, float(alpha), float(e[0]), float(e[1]), float(e[2]), n)


def sweep(observers: Sequence[Observer], test_split: DatasetSplit, weights: NrmseWeights,
          alphas: Sequence[float] | None = None, skip: int | None = None, jobs: int = 1) -> list[SweepRow]:
    """One NRMSE per (observer, alpha), all scored on one shared index set.

    ``skip`` defaults to the longest warm-up among the observers, so the
    EKF is scored on exactly the steps the learned observers can estimate.
    Rows are ordered by observer, then alpha.
    """
    if not observers:
        raise ValueError("no observers to evaluate")
    alphas = list(test_split.alpha_levels if alphas is None else alphas)
    present = {round(a, 9) for a in test_split.alpha_levels}
    missing = [a for a in alphas if round(a, 9) not in present]
    if missing:
        raise KeyError(f"test split lacks alpha levels {missing}")
    skip = max(o.warmup for o in observers) if skip is None else skip
    cells = [(o, a) for o in observers for a in alphas]

    def run(cell):
        o, a = cell
        rep = evaluate_observer(o, test_split.at_alpha(a), skip, a)
        return SweepRow(rep, nrmse(rep, weights))

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            return list(pool.map(run, cells))
    return [run(c) for c in cells]


def curves(rows: Sequence[SweepRow]) -> dict[str, tuple[list[float], list[float]]]:
    """``observer -> (alphas, nrmse values)`` in sweep order."""
    out: dict[str, tuple[list[float], list[float]]] = {}
    for r in rows:
        a, v = out.setdefault(r.report.observer, ([], []))
        a.append(r.report.alpha)
        v.append(r.nrmse)
    return out


def select_best(variants: Mapping[str, tuple[int, Sequence[float]]]) -> str:
    """Name of the variant with the lowest mean NRMSE; ties go to the smaller window."""
    if not variants:
        raise ValueError("no variants")
    return min(variants, key=lambda k: (float(np.mean(variants[k][1])), variants[k][0]))


def crossover_alpha(alphas: Sequence[float], learned: Sequence[float], reference: Sequence[float]) -> float | None:
    """Smallest grid alpha from which ``learned`` stays strictly below ``reference``."""
    below = np.asarray(learned) < np.asarray(reference)
    if len(below) == 0 or not below[-1]:
        return None
    k = len(below) - 1
    while k > 0 and below[k - 1]:
        k -= 1
    return float(alphas[k])


def count_inversions(values: Sequence[float]) -> int:
    """Number of consecutive decreases."""
    v = np.asarray(values, dtype=float)
    return int(np.sum(np.diff(v) < 0))


def is_monotone(values: Sequence[float], max_inversions: int = 1) -> bool:
    return count_inversions(values) <= max_inversions


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------

RMSE_HEADER = ["observer", "alpha", "E_x", "E_y", "E_psi", "n", "nrmse"]


def _fmt(v) -> str:
    return v if isinstance(v, str) else (str(v) if isinstance(v, int) else f"{v:.17g}")


def _row(r: SweepRow) -> list[str]:
    rep = r.report
    return [_fmt(x) for x in (rep.observer, rep.alpha, rep.e_x, rep.e_y, rep.e_psi, rep.n, r.nrmse)]


def _write_rows(path: Path, rows: Sequence[SweepRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RMSE_HEADER)
        w.writerows(_row(r) for r in rows)


def read_sweep_csv(path) -> list[SweepRow]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [SweepRow(ErrorReport(r["observer"], float(r["alpha"]), float(r["E_x"]), float(r["E_y"]),
                                 float(r["E_psi"]), int(r["n"])), float(r["nrmse"])) for r in rows]


def summary_text(rows: Sequence[SweepRow], weights: NrmseWeights, reference: str = "ekf") -> str:
    cv = curves(rows)
    lines = [
        "observer noise sweep",
        f"weights from reference RMSE (x, y, psi) = {weights.e_ref[0]:.4g} m, {weights.e_ref[1]:.4g} m, "
        f"{weights.e_ref[2] * 1e3:.4g} mrad",
        "",
        "mean NRMSE over the alpha grid:",
    ]
    for name, (a, v) in cv.items():
        lines.append(f"  {name:<12s} {np.mean(v):.4f}")
    for alpha in (1.0, 6.0):
        lines.append("")
        lines.append(f"RMSE at alpha = {alpha:g}:")
        for r in rows:
            if math.isclose(r.report.alpha, alpha):
                e = r.report
                lines.append(f"  {e.observer:<12s} x {e.e_x:.4f} m  y {e.e_y:.4f} m  psi {e.e_psi * 1e3:.3f} mrad"
                             f"  NRMSE {r.nrmse:.4f}")
    if reference in cv:
        lines.append("")
        lines.append(f"crossover against {reference} (learned stays below from this alpha on):")
        ra, rv = cv[reference]
        for name, (a, v) in cv.items():
            if name == reference or a != ra:
                continue
            x = crossover_alpha(a, v, rv)
            kind = name.split("_")[0]
            target = CROSSOVER_TARGETS.get(kind)
            found = "none on the grid" if x is None else f"alpha = {x:g}"
            expect = f" (expected near α ≈ {target:g})" if target is not None else ""
            lines.append(f"  {name:<12s} {found}{expect}")
        lines.append(f"  {reference} inversions over alpha: {count_inversions(rv)}")
    return "\n".join(lines) + "\n"


def emit_report(out_dir, rows: Sequence[SweepRow], weights: NrmseWeights, grid: FrictionGrid | None = None,
                reference: str = "ekf") -> dict[str, Path]:
    """Write the CSV tables and ``summary.txt``; returns the written paths by role."""
    from .io import write_grid_csv

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for alpha, fname in ((1.0, "rmse_alpha1.csv"), (6.0, "rmse_alpha6.csv")):
        sel = [r for r in rows if math.isclose(r.report.alpha, alpha)]
        if sel:
            paths[fname] = out / fname
            _write_rows(paths[fname], sel)
    paths["nrmse_sweep.csv"] = out / "nrmse_sweep.csv"
    _write_rows(paths["nrmse_sweep.csv"], rows)
    if grid is not None:
        paths["grid_coverage.csv"] = out / "grid_coverage.csv"
        write_grid_csv(paths["grid_coverage.csv"], grid)
    paths["summary.txt"] = out / "summary.txt"
    paths["summary.txt"].write_text(summary_text(rows, weights, reference))
    return paths
