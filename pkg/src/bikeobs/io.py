"""CSV and JSON manifest formats for trajectories, datasets and estimates."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .datagen import DatasetSplit, FrictionGrid
from .sim import RNG_ALGORITHM, NoiseSpec, Trajectory, VehicleParams, VehicleState

TRAJECTORY_HEADER = "k,t,x,y,psi,v,delta,xm,ym,psim"
ESTIMATE_HEADER = "k,x_hat,y_hat,psi_hat,P00,P11,P22"
GRID_HEADER = "i,j,ax,ay,eligible,count"
_FLOAT = "%.17g"

SPLIT_DIRS = {"train": "train", "validation": "val", "test": "test"}


class ChecksumError(RuntimeError):
    pass


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def fingerprint(obj) -> str:
    """Short stable hash of a JSON-serialisable object (or dataclass)."""
    if dataclasses.is_dataclass(obj):
        obj = dataclasses.asdict(obj)
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def alpha_dirname(alpha: float) -> str:
    return f"alpha_{alpha:g}"


def write_trajectory_csv(path, traj: Trajectory) -> None:
    n = len(traj)
    table = np.column_stack([np.arange(n), traj.times, traj.states, traj.inputs, traj.measurements])
    np.savetxt(path, table, delimiter=",", header=TRAJECTORY_HEADER, comments="",
               fmt=["%d"] + [_FLOAT] * 9)


def read_trajectory_csv(path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip()
    if header != TRAJECTORY_HEADER:
        raise ValueError(f"{path}: unexpected header {header!r}")
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {
        "k": table[:, 0].astype(np.int64),
        "t": table[:, 1],
        "states": table[:, 2:5].copy(),
        "inputs": table[:, 5:7].copy(),
        "measurements": table[:, 7:10].copy(),
    }


def write_estimates_csv(path, estimates: np.ndarray, cov_diag: np.ndarray | None = None) -> None:
    estimates = np.asarray(estimates, dtype=float)
    if cov_diag is None:
        cov_diag = np.full_like(estimates, np.nan)
    table = np.column_stack([np.arange(len(estimates)), estimates, cov_diag])
    np.savetxt(path, table, delimiter=",", header=ESTIMATE_HEADER, comments="", fmt=["%d"] + [_FLOAT] * 6)


def read_estimates_csv(path) -> tuple[np.ndarray, np.ndarray]:
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return table[:, 1:4], table[:, 4:7]


def write_grid_csv(path, grid: FrictionGrid) -> None:
    n = grid.cells_per_axis
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    table = np.column_stack([
        i.ravel(), j.ravel(), grid.centers[i.ravel()], grid.centers[j.ravel()],
        grid.eligible.ravel().astype(int), grid.counts.ravel(),
    ])
    np.savetxt(path, table, delimiter=",", header=GRID_HEADER, comments="",
               fmt=["%d", "%d", _FLOAT, _FLOAT, "%d", "%d"])


def read_grid_csv(path, radius: float) -> FrictionGrid:
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n = int(round(math.sqrt(len(table))))
    grid = FrictionGrid(radius, n)
    counts = np.zeros((n, n), dtype=np.int64)
    counts[table[:, 0].astype(int), table[:, 1].astype(int)] = table[:, 5].astype(np.int64)
    grid.set_counts(counts)
    return grid


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


def _traj_entry(traj: Trajectory, rel: str, digest: str) -> dict:
    seed = traj.seed if isinstance(traj.seed, int) else [int(s) for s in traj.seed]
    meta = {k: _jsonable(v) for k, v in traj.meta.items() if not isinstance(v, np.ndarray)}
    return {
        "file": rel,
        "seed": seed,
        "initial": list(map(float, traj.initial)),
        "alpha": traj.noise.alpha,
        "n": len(traj),
        "sha256": digest,
        "meta": meta,
    }


def write_split(root, split: DatasetSplit, config: dict | None = None) -> Path:
    """Write one split below ``root`` and return the manifest path.

    Layout: ``train/``, ``val/``, ``test/alpha_<level>/``; the training
    split also dumps ``grid.csv`` next to the split directories.
    """
    root = Path(root)
    base = root / SPLIT_DIRS[split.kind]
    base.mkdir(parents=True, exist_ok=True)
    entries = []
    for traj in split.trajectories:
        idx = int(traj.meta.get("index", len(entries)))
        if split.kind == "test":
            rel = f"{alpha_dirname(traj.noise.alpha)}/traj_{idx:04d}.csv"
        else:
            rel = f"traj_{idx:04d}.csv"
        path = base / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        write_trajectory_csv(path, traj)
        entries.append(_traj_entry(traj, rel, sha256_file(path)))

    first = split.trajectories[0]
    manifest = {
        "kind": split.kind,
        "generator": RNG_ALGORITHM,
        "params": dataclasses.asdict(first.params),
        "noise": first.noise.with_alpha(1.0).to_dict(),
        "alpha_levels": list(split.alpha_levels),
        "n_samples": split.n_samples,
        "config": config or {},
        "config_fingerprint": fingerprint(config or {}),
        "trajectories": entries,
    }
    if split.grid is not None:
        write_grid_csv(root / "grid.csv", split.grid)
        manifest["grid"] = {
            "file": "../grid.csv",
            "radius": split.grid.radius,
            "cells_per_axis": split.grid.cells_per_axis,
            "coverage": split.grid.coverage(),
            "sha256": sha256_file(root / "grid.csv"),
        }
    mpath = base / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return mpath


def read_split(root, kind: str, verify: bool = True) -> DatasetSplit:
    base = Path(root) / SPLIT_DIRS[kind]
    mpath = base / "manifest.json"
    if not mpath.exists():
        raise FileNotFoundError(f"no manifest at {mpath}")
    manifest = json.loads(mpath.read_text())
    params = VehicleParams(**manifest["params"])
    noise0 = NoiseSpec.from_dict(manifest["noise"])
    trajs = []
    for e in manifest["trajectories"]:
        path = base / e["file"]
        if verify and sha256_file(path) != e["sha256"]:
            raise ChecksumError(f"{path}: checksum mismatch with manifest")
        cols = read_trajectory_csv(path)
        meta = dict(e.get("meta", {}))
        trajs.append(Trajectory(params, noise0.with_alpha(e["alpha"]), e["seed"], VehicleState(*e["initial"]),
                                cols["states"], cols["inputs"], cols["measurements"], meta=meta))
    grid = None
    if "grid" in manifest:
        grid = read_grid_csv(base / manifest["grid"]["file"], manifest["grid"]["radius"])
    return DatasetSplit(manifest["kind"], trajs, manifest["alpha_levels"], grid=grid,
                        config={"manifest": manifest})
