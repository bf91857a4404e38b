"""``bikeobs`` command line: generate, train, evaluate, report.

Exit codes: 0 success, 1 usage, 2 invalid configuration or provenance,
3 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import datagen, evaluation, io, observer
from .config import ConfigError, RunConfig, check_window
from .ekf import EkfConfig

log = logging.getLogger("bikeobs")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
SPLIT_CHOICES = ("train", "val", "test", "all")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def _manifest_sha(root: Path, kind: str) -> str | None:
    p = root / io.SPLIT_DIRS[kind] / "manifest.json"
    return io.sha256_file(p) if p.exists() else None


def cmd_generate(cfg: RunConfig, split: str, scale: float = 1.0) -> dict:
    if not 0 < scale <= 1:
        raise ConfigError(f"--scale must be in (0, 1], got {scale}")
    root = Path(cfg.paths.data_dir)
    root.mkdir(parents=True, exist_ok=True)
    kinds = ["train", "val", "test"] if split == "all" else [split]
    written = {}
    for kind in kinds:
        if kind == "train":
            gen_cfg = cfg.training_set(scale)
            data = datagen.generate_training_set(gen_cfg)
        elif kind == "val":
            gen_cfg = cfg.validation_set()
            data = datagen.generate_validation_set(gen_cfg)
        else:
            gen_cfg = cfg.test_set()
            data = datagen.generate_test_sets(gen_cfg)
        meta = {"generator": type(gen_cfg).__name__, "settings": io.fingerprint(gen_cfg), "scale": scale,
                "seed": cfg.seed}
        path = io.write_split(root, data, meta)
        written[kind] = path
        print(f"{kind}: {len(data.trajectories)} trajectories, {data.n_samples} samples -> {path}")
    return written


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _grid_file(cfg: RunConfig, kind: str) -> Path:
    return Path(cfg.paths.model_dir) / f"grid_{kind}.json"


def _write_history(path: Path, history: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_mse", "val_mse"])
        for h in history:
            w.writerow([h["epoch"], f"{h['train_mse']:.17g}", f"{h['val_mse']:.17g}"])


def cmd_train(cfg: RunConfig, kind: str, n_window: int, max_epochs: int | None = None,
              do_grid_search: bool = False) -> Path:
    check_window(kind, n_window)
    root = Path(cfg.paths.data_dir)
    train_split = io.read_split(root, "train")
    val_split = io.read_split(root, "validation")
    model_dir = Path(cfg.paths.model_dir)
    model_dir.mkdir(parents=True, exist_ok=True)

    overrides = {"max_epochs": max_epochs}
    if do_grid_search:
        grids = {"lr": cfg.training.grid_lr, "batch_size": cfg.training.grid_batch_size}
        base = cfg.train_config(max_epochs=cfg.training.grid_max_epochs)
        best, results = observer.grid_search(kind, train_split, val_split, grids, n_window=n_window,
                                             base=base, seed=cfg.seed)
        _grid_file(cfg, kind).write_text(json.dumps({"n_window": n_window, "best": best, "results": results},
                                                    indent=2, sort_keys=True) + "\n")
        print(f"grid search ({kind}, N={n_window}): best {best}")
    grid_path = _grid_file(cfg, kind)
    if grid_path.exists():
        overrides.update(json.loads(grid_path.read_text())["best"])

    tcfg = cfg.train_config(**overrides)
    model = observer.build_model(kind, n_window, seed=cfg.seed)
    model, history = observer.train(model, train_split, val_split, tcfg)
    model.fingerprint["train_manifest_sha256"] = _manifest_sha(root, "train")
    model.fingerprint["val_manifest_sha256"] = _manifest_sha(root, "validation")

    out = model_dir / f"{model.name}.model"
    model.save(out)
    sidecar = {"kind": kind, "n_window": n_window, "scales": dataclasses.asdict(model.scales),
               "fingerprint": model.fingerprint}
    (model_dir / f"{model.name}.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    _write_history(model_dir / f"{model.name}_history.csv", history)
    best = min(h["val_mse"] for h in history)
    print(f"{model.name}: {len(history)} epochs, final validation MSE {history[-1]['val_mse']:.6g}, "
          f"best {best:.6g} -> {out}")
    return out


# ---------------------------------------------------------------------------
# evaluate / report
# ---------------------------------------------------------------------------


def load_observer(cfg: RunConfig, name: str, ekf_config: EkfConfig):
    if name == "ekf":
        return evaluation.EkfObserver(ekf_config)
    if name == "identity":
        return evaluation.MeasurementObserver()
    path = Path(cfg.paths.model_dir) / f"{name}.model"
    if not path.exists():
        raise FileNotFoundError(f"no model artifact {path}")
    model = observer.ObserverModel.load(path)
    recorded = model.fingerprint.get("train_manifest_sha256")
    current = _manifest_sha(Path(cfg.paths.data_dir), "train")
    if recorded and current and recorded != current:
        raise ConfigError(f"{name} was trained on a different training set than {cfg.paths.data_dir}")
    return evaluation.LearnedObserver(model, name)


def cmd_evaluate(cfg: RunConfig, names: list[str], alphas: list[float] | None = None, jobs: int = 1,
                 write_estimates: bool = False) -> dict:
    root = Path(cfg.paths.data_dir)
    test = io.read_split(root, "test")
    ekf_config = EkfConfig.from_noise(cfg.noise, cfg.params)
    observers = [load_observer(cfg, n, ekf_config) for n in dict.fromkeys(names)]
    skip = max(o.warmup for o in observers)

    if cfg.weights_mode == "measured":
        ref = evaluation.evaluate_observer(evaluation.EkfObserver(ekf_config), test.at_alpha(1.0), skip, 1.0)
        weights = evaluation.calibrate_reference(ref, "measured")
    else:
        weights = evaluation.NrmseWeights.frozen()

    rows = evaluation.sweep(observers, test, weights, alphas, skip=skip, jobs=jobs)
    for r in rows:
        e = r.report
        print(f"{e.observer:<12s} alpha={e.alpha:<5g} RMSE x={e.e_x:.4f} m y={e.e_y:.4f} m "
              f"psi={e.e_psi * 1e3:.3f} mrad NRMSE={r.nrmse:.4f}")
    grid = None
    if (root / "grid.csv").exists():
        grid = io.read_grid_csv(root / "grid.csv", datagen.TrainingSetConfig().grid_radius)
    paths = evaluation.emit_report(cfg.paths.report_dir, rows, weights, grid)
    if write_estimates:
        est_dir = Path(cfg.paths.report_dir) / "estimates"
        for o in observers:
            for a in sorted({r.report.alpha for r in rows}):
                d = est_dir / o.name / io.alpha_dirname(a)
                d.mkdir(parents=True, exist_ok=True)
                for traj in test.at_alpha(a):
                    io.write_estimates_csv(d / f"traj_{int(traj.meta.get('index', 0)):04d}.csv", o.estimate(traj))
    return paths


def cmd_report(cfg: RunConfig) -> dict:
    rep = Path(cfg.paths.report_dir)
    sweep_csv = rep / "nrmse_sweep.csv"
    if not sweep_csv.exists():
        raise FileNotFoundError(f"no sweep results at {sweep_csv}; run `evaluate` first")
    rows = evaluation.read_sweep_csv(sweep_csv)
    weights = evaluation.NrmseWeights.frozen()
    if cfg.weights_mode == "measured":
        ekf1 = [r.report for r in rows if r.report.observer == "ekf" and np.isclose(r.report.alpha, 1.0)]
        if not ekf1:
            raise ConfigError("measured weights need an ekf row at alpha = 1")
        weights = evaluation.calibrate_reference(ekf1[0], "measured")
    grid = None
    grid_csv = Path(cfg.paths.data_dir) / "grid.csv"
    if grid_csv.exists():
        grid = io.read_grid_csv(grid_csv, datagen.TrainingSetConfig().grid_radius)
    paths = evaluation.emit_report(rep, rows, weights, grid)
    print(paths["summary.txt"].read_text(), end="")
    return paths


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bikeobs", description="Bicycle-model observer benchmark pipeline.")
    p.add_argument("--config", type=Path, help="JSON run configuration (defaults used when omitted)")
    p.add_argument("--jobs", type=int, default=1, help="parallel sweep cells (default 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="generate a dataset split")
    g.add_argument("--split", choices=SPLIT_CHOICES, default="all")
    g.add_argument("--scale", type=float, default=1.0, help="fraction of training trajectories to generate")

    t = sub.add_parser("train", help="train a learned observer")
    t.add_argument("--kind", choices=("cnn", "lstm"), default="cnn")
    t.add_argument("--N", dest="n_window", type=int, default=20)
    t.add_argument("--max-epochs", type=int)
    t.add_argument("--grid-search", action="store_true", help="run the learning-rate/batch-size grid first")

    e = sub.add_parser("evaluate", help="noise sweep over the test split")
    e.add_argument("observers", nargs="*", default=["ekf"], help="ekf, identity, or model names like cnn_n60")
    e.add_argument("--alpha", type=float, action="append", help="restrict to these noise levels")
    e.add_argument("--write-estimates", action="store_true")

    sub.add_parser("report", help="rebuild report tables and summary from a finished sweep")
    sub.add_parser("init-config", help="print the default configuration").add_argument("path", nargs="?")
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        cfg = cfg.with_env_paths().validate()
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        if args.command == "generate":
            cmd_generate(cfg, args.split, args.scale)
        elif args.command == "train":
            cmd_train(cfg, args.kind, args.n_window, args.max_epochs, args.grid_search)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.observers, args.alpha, args.jobs, args.write_estimates)
        elif args.command == "report":
            cmd_report(cfg)
        elif args.command == "init-config":
            if args.path:
                cfg.save(args.path)
            else:
                print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    except (ConfigError, io.ChecksumError) as exc:
        print(f"bikeobs: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - surfaced as a runtime failure exit code
        log.debug("failure", exc_info=True)
        print(f"bikeobs: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
