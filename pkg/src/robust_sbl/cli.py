"""Command-line surface: train/predict on CSV files, benchmark suites, and
bandwidth cross-validation, all emitting one JSON record per line.

CSV contract: first row is a header, a column named ``target`` is the
response, every other column is a feature in header order.  Exit code is 0
iff no error record was emitted.
"""

import argparse
import csv
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .baselines import SBCL, SBL_BINOMIAL, SBL_GAUSSIAN, SBL_MEE, fit_estimator
from .benchmark import (
    SCENARIOS,
    GaussianNoise,
    ImpulsiveNoise,
    MixtureGaussianNoise,
    Scenario,
    default_sigma_grid,
    run_scenario,
    select_bandwidth_cv,
    summarize,
)
from .engine import FitConfig
from .glm import CLASSIFICATION, LOGISTIC, REGRESSION, Dataset, predict
from .model_io import ModelFile

ESTIMATORS = (SBL_MEE, SBL_GAUSSIAN, SBL_BINOMIAL, SBCL)
THREADS_ENV = "ROBUST_SBL_THREADS"


class CliError(Exception):
    pass


def _strict_json(value):
    """Undefined metrics (NaN sentinels) become null so every emitted line is
    strict JSON."""
    if isinstance(value, dict):
        return {k: _strict_json(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_strict_json(v) for v in value]
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def _emit(record, stream=None):
    print(json.dumps(_strict_json(record), sort_keys=True, allow_nan=False),
          file=stream or sys.stdout)


def _read_table(path):
    """Read a numeric CSV with header; errors carry 1-based line numbers."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CliError(f"{path}: file is empty") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CliError(
                    f"{path}: line {lineno}: expected {len(header)} fields, found {len(row)}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                bad = next(v for v in row if not _is_float(v))
                raise CliError(f"{path}: line {lineno}: invalid numeric value {bad!r}") from None
    values = np.asarray(rows, dtype=float).reshape(len(rows), len(header))
    return header, values


def _is_float(v):
    try:
        float(v)
        return True
    except ValueError:
        return False


def _load_dataset(path, task_flag):
    header, values = _read_table(path)
    if "target" not in header:
        raise CliError(f"{path}: no column named 'target' in header {header}")
    if values.shape[0] == 0:
        raise CliError(f"{path}: no data rows")
    tcol = header.index("target")
    t = values[:, tcol]
    x = np.delete(values, tcol, axis=1)
    if x.shape[1] == 0:
        raise CliError(f"{path}: no feature columns besides 'target'")
    if task_flag == "auto":
        task = CLASSIFICATION if np.all(np.isin(t, (0.0, 1.0))) else REGRESSION
    else:
        task = task_flag
    try:
        data = Dataset(x=x, t=t, task=task)
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from exc
    return data


def _check_compatibility(estimator, task):
    if estimator == SBL_BINOMIAL and task != CLASSIFICATION:
        raise CliError(
            "task mismatch: sbl-binomial requires binary-classification data "
            f"(inferred task: {task}); pass --task classification with 0/1 targets"
        )


def _fit_config(args):
    try:
        return FitConfig(
            sigma=args.sigma if args.sigma is not None else 1.0,
            epsilon=args.epsilon,
            a_max=args.a_max,
            max_outer_iters=args.max_iters,
            seed=args.seed,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _train_once(args, data, sigma_override=None):
    cfg = _fit_config(args)
    if sigma_override is not None:
        cfg = replace(cfg, sigma=sigma_override)
    state, report = fit_estimator(data, args.estimator, cfg)
    mf = ModelFile.from_fit(
        state, report,
        link=data.link, task=data.task, estimator=args.estimator,
        sigma=cfg.sigma, epsilon=cfg.epsilon, seed=cfg.seed,
    )
    mf.save(args.model)
    summary = {
        "command": "train",
        "model": args.model,
        "estimator": args.estimator,
        "task": data.task,
        "n_samples": data.n_samples,
        "d_total": data.n_features,
        "active_dims": int(state.active.n_active),
        "iterations": int(report.iterations_used),
        "converged": bool(report.converged),
        "final_objective": float(report.objective_trace[-1]),
        "wall_time_s": float(report.wall_time_s),
    }
    _emit(summary)
    return summary


def cmd_train(args):
    if not args.input or not args.model:
        raise CliError("train requires --input and --model")
    data = _load_dataset(args.input, args.task)
    _check_compatibility(args.estimator, data.task)
    _train_once(args, data)
    return 0


def cmd_predict(args):
    if not args.input or not args.model or not args.output:
        raise CliError("predict requires --model, --input and --output")
    try:
        mf = ModelFile.load(args.model)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot load model {args.model}: {exc}") from exc
    header, values = _read_table(args.input)
    if "target" in header:
        values = np.delete(values, header.index("target"), axis=1)
    if values.shape[1] != mf.d_total:
        raise CliError(
            f"feature dimension mismatch: model expects {mf.d_total} columns, "
            f"found {values.shape[1]} in {args.input}"
        )
    model = mf.glm_model()
    pred = np.atleast_1d(predict(model, values)) if values.shape[0] else np.empty(0)
    emit_labels = mf.metadata.get("task") == CLASSIFICATION or mf.link == LOGISTIC
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if emit_labels:
            writer.writerow(["prediction", "label"])
            for p in pred:
                writer.writerow([repr(float(p)), int(p >= 0.5)])
        else:
            writer.writerow(["prediction"])
            for p in pred:
                writer.writerow([repr(float(p))])
    _emit({"command": "predict", "output": args.output, "rows": int(pred.shape[0])})
    return 0


def _noise_from_dict(doc):
    kinds = {
        "gaussian": lambda d: GaussianNoise(variance=d["variance"]),
        "mixture": lambda d: MixtureGaussianNoise(
            weights=tuple(d["weights"]), means=tuple(d["means"]), variances=tuple(d["variances"])
        ),
        "impulsive": lambda d: ImpulsiveNoise(
            rate=d["rate"], magnitude_var=d["magnitude_var"], base_var=d["base_var"]
        ),
    }
    kind = doc.get("kind")
    if kind not in kinds:
        raise CliError(f"unknown noise kind {kind!r}; expected one of {sorted(kinds)}")
    return kinds[kind](doc)


def _scenario_from_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read scenario file {path}: {exc}") from exc
    try:
        noise = _noise_from_dict(doc["noise"]) if "noise" in doc else None
        return Scenario(
            name=doc.get("name", os.path.basename(path)),
            task=doc["task"],
            n_train=int(doc["n_train"]),
            n_test=int(doc["n_test"]),
            d=int(doc["d"]),
            k_support=int(doc["k_support"]),
            noise=noise,
            flip_rate=float(doc.get("flip_rate", 0.0)),
            seeds=tuple(doc.get("seeds", range(20))),
            estimators=tuple(doc.get("estimators", (SBL_MEE, SBL_GAUSSIAN))),
            sigma=doc.get("sigma", "auto"),
            fit_overrides=tuple(tuple(p) for p in doc.get("fit_overrides", ())),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"invalid scenario file {path}: {exc}") from exc


def _resolve_scenario(name):
    if name in SCENARIOS:
        return SCENARIOS[name]
    if os.path.exists(name):
        return _scenario_from_file(name)
    raise CliError(
        f"unknown scenario {name!r}; available scenarios: {', '.join(sorted(SCENARIOS))} "
        "(or pass a path to a scenario JSON file)"
    )


def _max_workers():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise CliError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def cmd_bench(args):
    if not args.scenario or not args.output:
        raise CliError("bench requires --scenario and --output")
    scenario = _resolve_scenario(args.scenario)
    records = run_scenario(scenario, max_workers=_max_workers())
    summary = summarize(scenario, records)
    with open(args.output, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(_strict_json(record), sort_keys=True, allow_nan=False) + "\n")
        fh.write(json.dumps(_strict_json({"summary": summary}), sort_keys=True,
                            allow_nan=False) + "\n")
    _emit({"command": "bench", "output": args.output, "summary": summary})
    return 0


def cmd_crossval(args):
    if not args.input:
        raise CliError("crossval requires --input")
    data = _load_dataset(args.input, args.task)
    _check_compatibility(args.estimator, data.task)
    if args.sigma_grid:
        try:
            candidates = tuple(float(v) for v in args.sigma_grid.split(","))
        except ValueError as exc:
            raise CliError(f"invalid --sigma-grid: {exc}") from exc
    else:
        candidates = default_sigma_grid(data)
    cfg = _fit_config(args)
    try:
        result = select_bandwidth_cv(
            data, candidates, args.folds, args.estimator, cfg=cfg, seed=args.seed
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    _emit({
        "command": "crossval",
        "chosen_sigma": result.chosen_sigma,
        "candidates": list(result.sigmas),
        "mean_scores": [float(v) for v in result.mean_scores],
        "fold_scores": [[float(v) for v in row] for row in result.fold_scores],
        "failures": [list(f) for f in result.failures],
        "folds": args.folds,
    })
    if args.chain_train:
        if not args.model:
            raise CliError("--chain-train requires --model")
        _train_once(args, data, sigma_override=result.chosen_sigma)
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="robust-sbl",
        description="Sparse Bayesian regression/classification with error-entropy likelihoods.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_fit=True):
        p.add_argument("--input", help="input CSV (header row; 'target' column is the response)")
        p.add_argument("--model", help="model JSON path")
        p.add_argument("--output", help="output file path")
        p.add_argument("--estimator", choices=ESTIMATORS, default=SBL_MEE)
        p.add_argument("--task", choices=("auto", REGRESSION, CLASSIFICATION), default="auto")
        p.add_argument("--seed", type=int, default=0)
        if with_fit:
            p.add_argument("--sigma", type=float, default=None,
                           help="kernel bandwidth (default 1.0)")
            p.add_argument("--epsilon", type=_epsilon_arg, default="auto",
                           help="quantization threshold; default: residual range / 20")
            p.add_argument("--a-max", dest="a_max", type=float, default=1e6,
                           help="relevance pruning threshold (default 1e6)")
            p.add_argument("--max-iters", dest="max_iters", type=int, default=300,
                           help="maximum outer iterations (default 300)")

    p_train = sub.add_parser("train", help="fit a model on a CSV file")
    common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_predict = sub.add_parser("predict", help="predict with a saved model")
    common(p_predict, with_fit=False)
    p_predict.set_defaults(func=cmd_predict)

    p_bench = sub.add_parser("bench", help="run a seeded benchmark scenario")
    common(p_bench)
    p_bench.add_argument("--scenario", help="scenario name or JSON file path")
    p_bench.set_defaults(func=cmd_bench)

    p_cv = sub.add_parser("crossval", help="choose the kernel bandwidth by cross-validation")
    common(p_cv)
    p_cv.add_argument("--folds", type=int, default=5)
    p_cv.add_argument("--sigma-grid", dest="sigma_grid",
                      help="comma-separated candidate bandwidths")
    p_cv.add_argument("--chain-train", dest="chain_train", action="store_true",
                      help="train with the chosen bandwidth (requires --model)")
    p_cv.set_defaults(func=cmd_crossval)
    return parser


def _epsilon_arg(value):
    if value == "auto":
        return value
    return float(value)


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        _emit({"error": {"command": args.command, "message": str(exc)}}, stream=sys.stderr)
        return 2
    except Exception as exc:  # unexpected failures still yield an error record
        _emit(
            {"error": {"command": args.command, "message": f"{type(exc).__name__}: {exc}"}},
            stream=sys.stderr,
        )
        return 2


if __name__ == "__main__":
    sys.exit(main())
