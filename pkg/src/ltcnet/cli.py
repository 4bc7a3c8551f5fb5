"""Command-line entry point.

Every command writes its outputs plus a ``manifest.json`` into ``--out``
(default: ``$LTCNET_OUTPUT_DIR`` or ``./ltcnet-runs/<command>``). Exit
codes: 0 success, 1 runtime or numeric failure, 2 usage or configuration
error, 3 bound violations found.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from ltcnet import __version__
from ltcnet.bounds import fuzz_verify, random_sigmoid_ltc
from ltcnet.cells import ACTIVATIONS, CELL_KINDS
from ltcnet.data import (
    CsvParseError,
    MISSING_POLICIES,
    SPLIT_MODES,
    NormStats,
    SchemaError,
    fit_stats,
    load_csv,
    window_and_split,
)
from ltcnet.errors import ContractError, LtcError, ParameterError
from ltcnet.expressivity import (
    PRESETS,
    ExpressivityConfig,
    depth_sweep,
    trajectory_sweep,
)
from ltcnet.numcore import RNG_ALGORITHM
from ltcnet.solvers import SOLVER_KINDS, Solver
from ltcnet.training import (
    TrainingConfig,
    checkpoint_load,
    checkpoint_save,
    f1_score,
    predict,
    train_loop,
)
from ltcnet.training.bptt import LOSSES
from ltcnet.training.checkpoint import CheckpointParseError, CheckpointVersionError

log = logging.getLogger("ltcnet")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_VIOLATIONS = 0, 1, 2, 3
OUTPUT_ENV = "LTCNET_OUTPUT_DIR"

CONFIG_ERRORS = (ParameterError, ContractError, SchemaError, CsvParseError, CheckpointParseError,
                 CheckpointVersionError, FileNotFoundError, IsADirectoryError)


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def write_csv(path: Path, rows: list[dict]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if not rows:
            return
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(rows[0]))
        for r in rows:
            w.writerow([_fmt(v) for v in r.values()])


def write_json(path: Path, doc):
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True, default=_json_default) + "\n",
                          encoding="utf-8")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, Solver):
        return {"kind": o.kind, "rtol": o.rtol, "atol": o.atol}
    raise TypeError(f"cannot serialise {type(o).__name__}")


# ---------------------------------------------------------------------------
# data plumbing shared by train and eval


def _prepare_split(args, data_cfg):
    labels = data_cfg["task"] == "classification"
    ds = load_csv(args.data, data_cfg["features"], data_cfg["targets"], data_cfg["missing"],
                  labels=labels)
    split = window_and_split(ds, data_cfg["window"], data_cfg["stride"], tuple(data_cfg["ratios"]),
                             data_cfg["seed"], data_cfg.get("split_mode", "shuffled"))
    return ds, split


def _train_stats(ds, split, window):
    rows = sorted({s + i for _, s in split.starts["train"] for i in range(window)})
    return fit_stats(ds.features[rows])


def _apply_stats(split, stats: NormStats | None):
    if stats is None:
        return split
    norm = lambda part: ((part[0] - stats.mean) / stats.std, part[1])  # noqa: E731
    split.train, split.validation, split.test = (norm(p) for p in (split.train, split.validation, split.test))
    return split


# ---------------------------------------------------------------------------
# commands


def cmd_train(args, out: Path) -> tuple[int, dict, dict]:
    task = "classification" if args.loss != "mse" else "regression"
    data_cfg = {
        "features": _csv_list(args.features), "targets": _csv_list(args.targets),
        "missing": args.missing, "window": args.window, "stride": args.stride,
        "ratios": [0.75, 0.10, 0.15], "seed": args.seed, "task": task, "split_mode": args.split_mode,
        "normalize": not args.no_normalize,
    }
    config = TrainingConfig(
        hidden_units=args.hidden_units, minibatch=args.minibatch, learning_rate=args.lr,
        solver_substeps=args.substeps, bptt_length=args.bptt_length, epochs=args.epochs,
        loss=args.loss, class_weights=tuple(float(w) for w in _csv_list(args.class_weights))
        if args.class_weights else None, activation=args.activation, solver=args.solver,
        sampling_period=args.sampling_period, seed=args.seed,
    )
    ds, split = _prepare_split(args, data_cfg)
    stats = _train_stats(ds, split, args.window) if data_cfg["normalize"] else None
    split = _apply_stats(split, stats)
    extra = {"data": data_cfg}
    if stats is not None:
        extra["norm_mean"] = stats.mean
        extra["norm_std"] = stats.std
    ckpt, history = train_loop(split, args.model, config, extra=extra)
    paths = {"checkpoint": out / "checkpoint.json", "metrics": out / "metrics.csv"}
    checkpoint_save(paths["checkpoint"], ckpt)
    write_csv(paths["metrics"], history)
    print(f"best validation metric {ckpt.best_validation_metric:.6g} at epoch {ckpt.best_epoch}")
    status = EXIT_RUNTIME if any(r["note"].startswith("diverged") for r in history) else EXIT_OK
    return status, {"model": args.model, "training": config.to_dict(), "data": data_cfg}, paths


def cmd_eval(args, out: Path) -> tuple[int, dict, dict]:
    ckpt = checkpoint_load(args.checkpoint)
    data_cfg = dict(ckpt.extra.get("data", {}))
    if not data_cfg:
        raise SchemaError("checkpoint has no data description; cannot rebuild the pipeline")
    if args.features:
        data_cfg["features"] = _csv_list(args.features)
    if args.targets:
        data_cfg["targets"] = _csv_list(args.targets)
    if len(data_cfg["features"]) != ckpt.params.m:
        raise SchemaError(f"checkpoint expects {ckpt.params.m} features, got {len(data_cfg['features'])}")
    config = TrainingConfig.from_dict(ckpt.config)
    ds, split = _prepare_split(args, data_cfg)
    stats = None
    if "norm_mean" in ckpt.extra:
        mean, std = np.asarray(ckpt.extra["norm_mean"]), np.asarray(ckpt.extra["norm_std"])
        stats = NormStats(mean, std, np.zeros(mean.shape, dtype=bool))
    split = _apply_stats(split, stats)
    if args.split == "all":
        parts = [split.train, split.validation, split.test]
        data = (np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))
    else:
        data = getattr(split, args.split)
    if len(data[0]) == 0:
        raise ParameterError(f"the {args.split} split is empty")
    preds = predict(ckpt.cell_kind, ckpt.params, ckpt.head, config, data[0])
    metric = args.metric
    if metric == "auto":
        metric = "accuracy" if config.classification else "mse"
    if metric == "mse":
        value = float(np.mean((preds - data[1]) ** 2))
    elif metric == "accuracy":
        value = float(np.mean(np.argmax(preds, axis=-1) == data[1]))
    else:
        value = f1_score(np.argmax(preds, axis=-1), data[1])
    result = {"metric": metric, "value": value, "split": args.split, "sequences": int(len(data[0]))}
    paths = {"result": out / "eval.json"}
    write_json(paths["result"], result)
    print(f"{metric} on {args.split}: {value!r}")
    return EXIT_OK, {"checkpoint": str(args.checkpoint), **result}, paths


def _solver(name, args):
    return Solver(name, rtol=args.rtol, atol=args.atol)


def _expressivity_config(args, **overrides) -> ExpressivityConfig:
    kw = dict(
        kinds=tuple(_csv_list(getattr(args, "models", "ltc"))), activation=args.activation, width=args.width,
        layers=getattr(args, "layers", 1), sw2=args.sw2, sb2=args.sb2, trials=args.trials,
        dt=args.dt, preset=args.preset, solver=_solver("dopri45", args), seed=args.seed,
    )
    kw.update(overrides)
    return ExpressivityConfig(**kw)


def _summary_lines(summary, keys):
    for model, entry in summary.items():
        print(f"{model:>11}: " + "  ".join(f"{k}={entry.get(k, float('nan')):.4g}" for k in keys))


def cmd_expressivity(args, out: Path):
    config = _expressivity_config(
        args, ltc_solver=_solver(args.ltc_solver, args) if args.ltc_solver else None,
        measure_depth=not args.no_depth and args.layers == 1,
    )
    report = trajectory_sweep(config)
    paths = {"trials": out / "trials.csv", "summary": out / "summary.json"}
    paths["trials"].write_text(report.to_csv(), encoding="utf-8")
    doc = report.to_dict()
    lengths = {m: e["length_mean"] for m, e in report.summary.items()}
    doc["longest_model"] = max(lengths, key=lengths.get) if lengths else None
    write_json(paths["summary"], doc)
    _summary_lines(report.summary, ("length_mean", "length_std", "ve_sum_mean", "depth_mean"))
    return EXIT_OK, {"expressivity": config.to_dict()}, paths


def cmd_depth(args, out: Path):
    if args.solver != "dopri45":
        raise ContractError("computational depth is defined for adaptive solvers only (use dopri45)")
    config = _expressivity_config(args, measure_depth=True)
    measured = depth_sweep(config)
    rows, summary = [], {}
    for kind, m in measured.items():
        rows += [{"model": kind, "trial": i, "depth": d} for i, d in enumerate(m.depths)]
        summary[kind] = {"depth_mean": m.mean, "depth_std": m.std, "failures": m.failures,
                         "failure_messages": m.messages[:10]}
    order = sorted(summary, key=lambda k: summary[k]["depth_mean"], reverse=True)
    paths = {"trials": out / "depth.csv", "summary": out / "summary.json"}
    write_csv(paths["trials"], rows)
    write_json(paths["summary"], {"summary": summary, "ordering": order,
                                  "config": config.to_dict(), "rng_algorithm": RNG_ALGORITHM})
    _summary_lines(summary, ("depth_mean", "depth_std"))
    print("ordering: " + " > ".join(order))
    return EXIT_OK, {"depth": config.to_dict()}, paths


def cmd_solver_compare(args, out: Path):
    solvers = _csv_list(args.solvers)
    rows, summary = [], {}
    for name in solvers:
        cfg = _expressivity_config(args, kinds=("ltc",), ltc_solver=_solver(name, args),
                                   measure_depth=False)
        report = trajectory_sweep(cfg)
        rows += [{"solver": name, "trial": r.trial, "length": r.length, "ve_sum": r.ve1 + r.ve2}
                 for r in report.rows]
        summary[name] = report.summary.get("ltc", {})
    ref = summary.get(solvers[0], {}).get("length_mean")
    for name in solvers:
        mean = summary[name].get("length_mean")
        summary[name]["relative_difference"] = (abs(mean - ref) / ref if ref and mean is not None
                                                else float("nan"))
    paths = {"trials": out / "solver_compare.csv", "summary": out / "summary.json"}
    write_csv(paths["trials"], rows)
    write_json(paths["summary"], {"summary": summary, "reference_solver": solvers[0]})
    _summary_lines(summary, ("length_mean", "length_std", "relative_difference"))
    cfg = {k: getattr(args, k) for k in ("solvers", "activation", "width", "sw2", "sb2", "trials",
                                         "dt", "preset", "rtol", "atol", "seed")}
    return EXIT_OK, {"solver_compare": cfg}, paths


def cmd_bounds(args, out: Path):
    report = fuzz_verify(
        param_sampler=lambda rng: random_sigmoid_ltc(rng, args.max_neurons),
        n_trials=args.trials, solver=_solver(args.solver, args), steps=args.steps, dt=args.dt,
        amplitude=args.input_amp, seed=args.seed,
    )
    paths = {"report": out / "bounds.json", "violations": out / "violations.csv"}
    write_json(paths["report"], report.to_dict())
    write_csv(paths["violations"], [v.__dict__ for v in report.violations])
    print(f"trials={report.trials} samples={report.samples_tested} "
          f"violations={report.violation_count} solver_failures={len(report.solver_failures)}")
    status = EXIT_OK if report.passed else EXIT_VIOLATIONS
    cfg = {k: getattr(args, k) for k in ("trials", "input_amp", "steps", "dt", "solver",
                                         "max_neurons", "seed")}
    return status, {"bounds": cfg}, paths


# ---------------------------------------------------------------------------
# parser


def _add_sweep_args(p, trials=100):
    p.add_argument("--activation", choices=sorted(ACTIVATIONS), default="hard-tanh")
    p.add_argument("--width", type=int, default=100)
    p.add_argument("--sw2", type=float, default=2.0, help="weight variance (scaled by 1/width)")
    p.add_argument("--sb2", type=float, default=1.0, help="bias variance")
    p.add_argument("--trials", type=int, default=trials)
    p.add_argument("--dt", type=float, default=0.01, help="input sampling interval")
    p.add_argument("--preset", choices=sorted(PRESETS), default="full-circle")
    p.add_argument("--rtol", type=float, default=1e-3)
    p.add_argument("--atol", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ltcnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ltcnet {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=fn)
        p.add_argument("--out", type=Path, default=None, help="output directory")
        return p

    p = add("train", cmd_train, "train a model on a CSV time series")
    p.add_argument("--model", choices=CELL_KINDS, default="ltc")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--features", required=True, help="comma-separated feature columns")
    p.add_argument("--targets", required=True, help="comma-separated target columns")
    p.add_argument("--missing", choices=MISSING_POLICIES, default="error")
    p.add_argument("--window", type=int, default=32)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--split-mode", choices=SPLIT_MODES, default="shuffled",
                   help="shuffled windows (may share time steps) or chronological without overlap")
    p.add_argument("--hidden-units", type=int, default=32)
    p.add_argument("--minibatch", type=int, default=16)
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--substeps", type=int, default=6, help="solver steps per input sample")
    p.add_argument("--bptt-length", type=int, default=32)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--loss", choices=LOSSES, default="mse")
    p.add_argument("--class-weights", default=None, help="comma-separated, one per class")
    p.add_argument("--activation", choices=sorted(ACTIVATIONS), default="sigmoid")
    p.add_argument("--solver", choices=("auto", "euler", "rk4", "fused"), default="auto")
    p.add_argument("--sampling-period", type=float, default=1.0)
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--seed", type=int, default=0)

    p = add("eval", cmd_eval, "evaluate a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--features", default=None)
    p.add_argument("--targets", default=None)
    p.add_argument("--split", choices=("all", "train", "validation", "test"), default="test")
    p.add_argument("--metric", choices=("auto", "mse", "accuracy", "f1"), default="auto")

    p = add("expressivity", cmd_expressivity, "trajectory-length sweep")
    p.add_argument("--models", default=",".join(CELL_KINDS))
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--ltc-solver", choices=("dopri45", "fused"), default=None)
    p.add_argument("--no-depth", action="store_true")
    _add_sweep_args(p)

    p = add("depth", cmd_depth, "computational depth per input sample")
    p.add_argument("--models", default=",".join(CELL_KINDS))
    p.add_argument("--solver", choices=SOLVER_KINDS, default="dopri45")
    _add_sweep_args(p)

    p = add("solver-compare", cmd_solver_compare, "LTC trajectory length across solvers")
    p.add_argument("--solvers", default="dopri45,fused")
    _add_sweep_args(p, trials=20)

    p = add("bounds", cmd_bounds, "fuzz the state and time-constant bounds")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--input-amp", type=float, default=1e6)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--solver", choices=("fused", "dopri45"), default="fused")
    p.add_argument("--max-neurons", type=int, default=16)
    p.add_argument("--rtol", type=float, default=1e-3)
    p.add_argument("--atol", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=None)
    return parser


def _output_dir(args) -> Path:
    if args.out is not None:
        return args.out
    base = Path(os.environ.get(OUTPUT_ENV, "ltcnet-runs"))
    return base / args.command


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "replay":
        try:
            manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
            replay_argv = list(manifest["argv"])
        except (OSError, ValueError, KeyError) as exc:
            print(f"error: cannot read manifest: {exc}", file=sys.stderr)
            return EXIT_USAGE
        if args.out is not None:
            replay_argv = _replace_out(replay_argv, str(args.out))
        return main(replay_argv)

    out = _output_dir(args)
    start = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        status, config, paths = args.func(args, out)
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LtcError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    manifest = {
        "command": args.command,
        "argv": _replace_out(argv, str(out)),
        "config": config,
        "seed": getattr(args, "seed", None),
        "code_version": __version__,
        "rng_algorithm": RNG_ALGORITHM,
        "wall_clock_seconds": time.perf_counter() - start,
        "exit_code": status,
        "outputs": {k: str(v) for k, v in paths.items()},
    }
    write_json(out / "manifest.json", manifest)
    return status


def _replace_out(argv, out):
    argv = list(argv)
    if "--out" in argv:
        argv[argv.index("--out") + 1] = out
    else:
        cmd = next(i for i, a in enumerate(argv) if not a.startswith("-"))
        argv[cmd + 1:cmd + 1] = ["--out", out]
    return argv


if __name__ == "__main__":
    sys.exit(main())
