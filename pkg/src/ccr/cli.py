"""Command-line entry point: fit, predict, evaluate, active-learn, benchmark.

Every run writes its artifacts under --out with fixed file names
(model.json, metrics.json, predictions.csv, residuals.csv, elbow.csv,
history.jsonl, manifest.json) and a manifest recording the command, the
resolved configuration, input hashes, and timestamps. Report commands also
render PNG figures next to the delimited output unless --no-figures is set.

Exit codes: 0 success, 1 runtime failure, 2 usage or input validation.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .active import ActiveConfig, PerturbKernel, active_loop
from .benchmarks import get_problem, sample_inputs
from .data import Dataset, load_dataset
from .forest import ForestConfig
from .mlp import MlpConfig, fit_regressor
from .pipeline import (
    CcrConfig,
    ccr_fit,
    ccr_predict,
    evaluate,
    load_model,
    save_model,
)


class UsageError(Exception):
    """Bad arguments or unusable input files (exit code 2)."""


@dataclass
class RunManifest:
    """Provenance record written next to every command's outputs."""

    command: str
    argv: list[str]
    config: dict
    seed: int
    started_at: str
    finished_at: str = ""
    inputs: dict = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _timestamp() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def _start_manifest(command: str, config: dict, seed: int, inputs: list[Path]) -> RunManifest:
    return RunManifest(
        command=command,
        argv=sys.argv[1:],
        config=config,
        seed=seed,
        started_at=_timestamp(),
        inputs={str(p): _sha256(p) for p in inputs if p is not None and p.exists()},
    )


def _finish_manifest(manifest: RunManifest, out_dir: Path, outputs: list[str]) -> None:
    manifest.finished_at = _timestamp()
    manifest.outputs = outputs
    with (out_dir / "manifest.json").open("w", encoding="utf-8") as f:
        json.dump(asdict(manifest), f, indent=2)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {p}")
    try:
        with p.open("r", encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {p} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError(f"config file {p} must hold a JSON object")
    return doc


def _resolve(args, file_cfg: dict, key: str, default):
    """Flags win over config-file values, which win over defaults."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in file_cfg:
        return file_cfg[key]
    return default


def _learner_configs(file_cfg: dict, args, seed: int) -> tuple[MlpConfig, ForestConfig]:
    mlp_kwargs = dict(file_cfg.get("mlp", {}))
    forest_kwargs = dict(file_cfg.get("forest", {}))
    if getattr(args, "hidden_width", None) is not None:
        mlp_kwargs["hidden_width"] = args.hidden_width
    if getattr(args, "max_epochs", None) is not None:
        mlp_kwargs["max_epochs"] = args.max_epochs
    if getattr(args, "trees", None) is not None:
        forest_kwargs["num_trees"] = args.trees
    mlp_kwargs.setdefault("seed", seed)
    forest_kwargs.setdefault("seed", seed)
    return MlpConfig(**mlp_kwargs), ForestConfig(**forest_kwargs)


def _build_ccr_config(args, file_cfg: dict, seed: int) -> CcrConfig:
    clusters = _resolve(args, file_cfg, "clusters", None)
    if clusters is not None and clusters < 1:
        raise UsageError(f"--clusters must be >= 1, got {clusters}")
    amplification = _resolve(args, file_cfg, "amplification", None)
    if amplification is not None and amplification < 1:
        raise UsageError(f"--amplification must be >= 1, got {amplification}")
    mlp_cfg, forest_cfg = _learner_configs(file_cfg, args, seed)
    try:
        return CcrConfig(
            num_clusters=clusters,
            amplification_cluster=amplification,
            classifier_kind=_resolve(args, file_cfg, "classifier", "mlp"),
            regressor_kind=_resolve(args, file_cfg, "regressor", "mlp"),
            mlp=mlp_cfg,
            forest=forest_cfg,
            seed=seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _load_labeled(path: str, format: str | None) -> Dataset:
    try:
        return load_dataset(path, format)
    except (FileNotFoundError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _write_predictions(path: Path, y_true: np.ndarray, y_pred: np.ndarray) -> None:
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["y_true", "y_pred"])
        for t, p in zip(y_true, y_pred):
            writer.writerow([repr(float(t)), repr(float(p))])


def _write_residual_bins(path: Path, residuals: np.ndarray, bins: int = 50) -> None:
    counts, edges = np.histogram(residuals, bins=bins)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["bin_left", "bin_right", "count"])
        for i, c in enumerate(counts):
            writer.writerow([repr(float(edges[i])), repr(float(edges[i + 1])), int(c)])


def _write_elbow(path: Path, report) -> None:
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["L", "inertia"])
        for L, inertia in zip(report.candidate_L, report.inertias):
            writer.writerow([L, repr(float(inertia))])


def _emit_evaluation(out: Path, metrics, y_true, y_pred, figures: bool) -> list[str]:
    with (out / "metrics.json").open("w", encoding="utf-8") as f:
        json.dump(metrics.to_dict(), f, indent=2)
    _write_predictions(out / "predictions.csv", y_true, y_pred)
    residuals = np.asarray(y_pred) - np.asarray(y_true)
    _write_residual_bins(out / "residuals.csv", residuals)
    outputs = ["metrics.json", "predictions.csv", "residuals.csv"]
    if figures:
        from . import figures as figs

        figs.plot_prediction_scatter(y_true, y_pred, out / "scatter.png")
        figs.plot_residual_histogram(residuals, out / "residuals.png")
        outputs += ["scatter.png", "residuals.png"]
    return outputs


# ----------------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------------


def cmd_fit(args) -> int:
    file_cfg = _load_config_file(args.config)
    seed = _resolve(args, file_cfg, "seed", 0)
    cfg = _build_ccr_config(args, file_cfg, seed)
    out = _out_dir(args)
    data_path = Path(args.data)
    manifest = _start_manifest("fit", cfg.to_dict(), seed, [data_path])

    data = _load_labeled(args.data, args.format)
    try:
        model = ccr_fit(data, cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    save_model(model, out / "model.json")
    outputs = ["model.json"]
    if model.elbow is not None:
        _write_elbow(out / "elbow.csv", model.elbow)
        outputs.append("elbow.csv")
        if not args.no_figures:
            from . import figures as figs

            figs.plot_elbow(model.elbow.candidate_L, model.elbow.inertias,
                            model.elbow.chosen_L, out / "elbow.png")
            outputs.append("elbow.png")
    _finish_manifest(manifest, out, outputs + ["manifest.json"])
    print(f"fitted {model.num_classes}-class model on {data.n} rows -> {out / 'model.json'}")
    return 0


def cmd_predict(args) -> int:
    out = _out_dir(args)
    model_path = Path(args.model)
    data_path = Path(args.data)
    if not model_path.exists():
        raise UsageError(f"model file not found: {model_path}")
    manifest = _start_manifest("predict", {}, 0, [model_path, data_path])
    model = load_model(model_path)
    data = _load_labeled(args.data, args.format)
    pred = ccr_predict(model, data.inputs)
    _write_predictions(out / "predictions.csv", data.outputs, pred)
    _finish_manifest(manifest, out, ["predictions.csv", "manifest.json"])
    print(f"wrote {len(pred)} predictions -> {out / 'predictions.csv'}")
    return 0


def cmd_evaluate(args) -> int:
    out = _out_dir(args)
    model_path = Path(args.model)
    data_path = Path(args.data)
    if not model_path.exists():
        raise UsageError(f"model file not found: {model_path}")
    manifest = _start_manifest("evaluate", {}, 0, [model_path, data_path])
    model = load_model(model_path)
    test = _load_labeled(args.data, args.format)
    metrics = evaluate(model, test)
    pred = ccr_predict(model, test.inputs)
    outputs = _emit_evaluation(out, metrics, test.outputs, pred, not args.no_figures)
    _finish_manifest(manifest, out, outputs + ["manifest.json"])
    print(json.dumps(metrics.to_dict()))
    print(metrics.table())
    return 0


_BENCHMARK_SIZES = {1: (500, 500), 2: (500, 500), 3: (2000, 0), 4: (4096, 0), 5: (20000, 500)}


def benchmark_data(example: int, seed: int) -> tuple[Dataset, Dataset]:
    """(train, test) for one numbered example; grid examples test on train."""
    problem = get_problem(example)
    n_train, n_test = _BENCHMARK_SIZES[example]
    seeds = np.random.SeedSequence([seed, example]).generate_state(2)
    if example in (3, 4):
        train = sample_inputs(problem, n_train, grid=True)
        return train, train
    train = sample_inputs(problem, n_train, seed=int(seeds[0]))
    test = sample_inputs(problem, n_test, seed=int(seeds[1]))
    return train, test


def benchmark_config(example: int, seed: int) -> CcrConfig:
    problem = get_problem(example)
    return CcrConfig(
        num_clusters=problem.recommended_clusters,
        classifier_kind=problem.classifier_kind,
        regressor_kind=problem.regressor_kind,
        mlp=MlpConfig(seed=seed),
        forest=ForestConfig(seed=seed),
        seed=seed,
    )


def _append_results_row(path: Path, row: dict) -> None:
    exists = path.exists()
    with path.open("a", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(row.keys()))
        if not exists:
            writer.writeheader()
        writer.writerow(row)


def _render_results_table(path: Path) -> str:
    with path.open("r", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    latest = {}
    for row in rows:
        latest[int(row["example"])] = row
    examples = sorted(latest)
    header = f"{'Accuracy':<12}" + "".join(f"{'Example ' + str(e):>12}" for e in examples)
    l2_line = f"{'L2':<12}" + "".join(f"{float(latest[e]['l2']):>12.4f}" for e in examples)
    r2_line = f"{'R2':<12}" + "".join(f"{float(latest[e]['r2']):>12.4f}" for e in examples)
    return "\n".join([header, l2_line, r2_line])


def _rmse(model, test: Dataset) -> float:
    resid = ccr_predict(model, test.inputs) - test.outputs
    return float(np.sqrt(np.mean(resid * resid)))


def run_table2(seed: int = 0, reservoir_size: int = 1000, initial_size: int = 50,
               budget: int = 100, refit_every: int = 20, test_size: int = 500) -> dict:
    """Active (strategy 1a, uncertainty) versus passive on the jump target f2."""
    problem = get_problem(2)
    seeds = np.random.SeedSequence([seed, 2, 7]).generate_state(3)
    pool = sample_inputs(problem, reservoir_size, seed=int(seeds[0]))
    test = sample_inputs(problem, test_size, seed=int(seeds[1]))
    initial = pool.subset(np.arange(initial_size))
    reservoir = pool.inputs[initial_size:]
    ccr_cfg = CcrConfig(
        num_clusters=2, classifier_kind="mlp", regressor_kind="mlp",
        mlp=MlpConfig(seed=seed), seed=seed,
    )
    cfg = ActiveConfig(
        strategy="reservoir", score_kind="uncertainty", reservoir=reservoir,
        ccr=ccr_cfg, test_data=test, seed=seed,
    )
    pool_lookup = {pool.inputs[i].tobytes(): pool.outputs[i] for i in range(pool.n)}

    def oracle(p: np.ndarray) -> float:
        return float(pool_lookup[np.asarray(p).tobytes()])

    active_model, history = active_loop(oracle, initial, cfg, budget, refit_every)
    passive_model = ccr_fit(pool, ccr_cfg)
    return {
        "active": {"rmse": _rmse(active_model, test), "n": initial_size + budget},
        "passive": {"rmse": _rmse(passive_model, test), "n": reservoir_size},
        "history": history,
    }


def cmd_benchmark(args) -> int:
    out = _out_dir(args)
    seed = args.seed if args.seed is not None else 0

    if args.table2:
        manifest = _start_manifest("benchmark", {"table2": True}, seed, [])
        result = run_table2(seed=seed)
        history = result.pop("history")
        with (out / "table2.json").open("w", encoding="utf-8") as f:
            json.dump(result, f, indent=2)
        with (out / "history.jsonl").open("w", encoding="utf-8") as f:
            for entry in history:
                f.write(json.dumps(entry) + "\n")
        outputs = ["table2.json", "history.jsonl"]
        if not args.no_figures:
            from . import figures as figs

            figs.plot_history(history, out / "history.png")
            outputs.append("history.png")
        _finish_manifest(manifest, out, outputs + ["manifest.json"])
        print(f"{'':<10}{'Active':>10}{'Passive':>10}")
        print(f"{'Error':<10}{result['active']['rmse']:>10.4f}{result['passive']['rmse']:>10.4f}")
        print(f"{'N':<10}{result['active']['n']:>10}{result['passive']['n']:>10}")
        return 0

    example = args.example
    if example is None:
        raise UsageError("choose --example 1..5 or --table2")
    cfg = benchmark_config(example, seed)
    manifest = _start_manifest("benchmark", {"example": example, **cfg.to_dict()}, seed, [])
    started = time.perf_counter()
    train, test = benchmark_data(example, seed)
    model = ccr_fit(train, cfg)
    metrics = evaluate(model, test)
    runtime = time.perf_counter() - started

    run_dir = out / f"example{example}"
    run_dir.mkdir(parents=True, exist_ok=True)
    pred = ccr_predict(model, test.inputs)
    outputs = _emit_evaluation(run_dir, metrics, test.outputs, pred, not args.no_figures)
    save_model(model, run_dir / "model.json")
    row = {
        "example": example,
        "name": get_problem(example).name,
        "seed": seed,
        "n_train": train.n,
        "n_test": test.n,
        "l2": metrics.l2,
        "r2": metrics.r2,
        "misclassification_rate": metrics.misclassification_rate,
        "runtime_s": round(runtime, 3),
    }
    _append_results_row(out / "results.csv", row)
    _finish_manifest(manifest, out, outputs + ["model.json", "results.csv", "manifest.json"])
    print(_render_results_table(out / "results.csv"))
    return 0


def cmd_active(args) -> int:
    out = _out_dir(args)
    file_cfg = _load_config_file(args.config)
    seed = _resolve(args, file_cfg, "seed", 0)
    ccr_cfg = _build_ccr_config(args, file_cfg, seed)
    data_path = Path(args.data)
    manifest = _start_manifest(
        "active",
        {"strategy": args.strategy, "score": args.score, "budget": args.budget,
         "refit_every": args.refit_every, **ccr_cfg.to_dict()},
        seed,
        [data_path] + ([Path(args.reservoir)] if args.reservoir else []),
    )
    initial = _load_labeled(args.data, args.format)

    reservoir = None
    oracle = None
    if args.reservoir:
        pool = _load_labeled(args.reservoir, None)
        reservoir = pool.inputs
        lookup = {pool.inputs[i].tobytes(): pool.outputs[i] for i in range(pool.n)}
        oracle = lambda p: float(lookup[np.asarray(p).tobytes()])  # noqa: E731
    if args.oracle_example is not None:
        problem = get_problem(args.oracle_example)
        oracle = lambda p: float(problem.evaluate(np.asarray(p)[None, :])[0])  # noqa: E731
    if oracle is None:
        raise UsageError("need an oracle: --oracle-example N or a labeled --reservoir file")
    if args.strategy == "reservoir" and reservoir is None:
        raise UsageError("reservoir strategy needs --reservoir FILE")

    test = _load_labeled(args.test, None) if args.test else None
    kernel = None
    if args.strategy == "perturb":
        kernel = PerturbKernel(kind=args.kernel, width=args.kernel_width,
                               samples_per_center=args.kernel_samples)
    try:
        cfg = ActiveConfig(
            strategy=args.strategy, score_kind=args.score, reservoir=reservoir,
            k_neighbors=args.k, kernel=kernel, ccr=ccr_cfg, test_data=test, seed=seed,
        )
        model, history = active_loop(oracle, initial, cfg, args.budget, args.refit_every)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    with (out / "history.jsonl").open("w", encoding="utf-8") as f:
        for entry in history:
            f.write(json.dumps(entry) + "\n")
    save_model(model, out / "model.json")
    outputs = ["history.jsonl", "model.json"]
    if not args.no_figures:
        from . import figures as figs

        figs.plot_history(history, out / "history.png")
        outputs.append("history.png")
    _finish_manifest(manifest, out, outputs + ["manifest.json"])
    print(f"active run complete: {history[-1]['n_train']} training rows "
          f"after {len(history) - 1} refits -> {out / 'history.jsonl'}")
    return 0


# ----------------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ccr",
        description="Cluster-classify-regress surrogate modeling for discontinuous functions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_data=True):
        if needs_data:
            p.add_argument("--data", required=True, help="labeled dataset (CSV or JSON)")
            p.add_argument("--format", choices=["csv", "json"], default=None)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", default=None, help="JSON file of option defaults")
        p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    p_fit = sub.add_parser("fit", help="fit a pipeline on a labeled dataset")
    common(p_fit)
    p_fit.add_argument("--clusters", type=int, default=None, help="cluster count L (elbow when omitted)")
    p_fit.add_argument("--classifier", choices=["mlp", "forest"], default=None)
    p_fit.add_argument("--regressor", choices=["mlp", "forest"], default=None)
    p_fit.add_argument("--amplification", type=float, default=None, help="output amplification for clustering")
    p_fit.add_argument("--hidden-width", type=int, default=None)
    p_fit.add_argument("--max-epochs", type=int, default=None)
    p_fit.add_argument("--trees", type=int, default=None)
    p_fit.set_defaults(handler=cmd_fit)

    p_pred = sub.add_parser("predict", help="predict a dataset with a saved model")
    common(p_pred)
    p_pred.add_argument("--model", required=True)
    p_pred.set_defaults(handler=cmd_predict)

    p_eval = sub.add_parser("evaluate", help="score a saved model on a labeled dataset")
    common(p_eval)
    p_eval.add_argument("--model", required=True)
    p_eval.set_defaults(handler=cmd_evaluate)

    p_bench = sub.add_parser("benchmark", help="reproduce a numbered example or the active-vs-passive table")
    common(p_bench, needs_data=False)
    p_bench.add_argument("--example", type=int, choices=[1, 2, 3, 4, 5], default=None)
    p_bench.add_argument("--table2", action="store_true", help="run the active-vs-passive comparison")
    p_bench.set_defaults(handler=cmd_benchmark)

    p_act = sub.add_parser("active", help="run an active-learning loop from an initial dataset")
    common(p_act)
    p_act.add_argument("--strategy", choices=["reservoir", "hull", "boundary", "perturb"], required=True)
    p_act.add_argument("--score", choices=["uncertainty", "entropy", "margin"], default="uncertainty")
    p_act.add_argument("--budget", type=int, required=True)
    p_act.add_argument("--refit-every", type=int, default=10)
    p_act.add_argument("--reservoir", default=None, help="labeled candidate pool (CSV or JSON)")
    p_act.add_argument("--oracle-example", type=int, choices=[1, 2, 3, 4, 5], default=None)
    p_act.add_argument("--test", default=None, help="fixed test set for history metrics")
    p_act.add_argument("--k", type=int, default=5, help="neighbor count for the boundary strategy")
    p_act.add_argument("--kernel", choices=["uniform_box", "gaussian", "local_covariance"],
                       default="gaussian")
    p_act.add_argument("--kernel-width", type=float, default=0.1)
    p_act.add_argument("--kernel-samples", type=int, default=3)
    p_act.add_argument("--clusters", type=int, default=None)
    p_act.add_argument("--classifier", choices=["mlp", "forest"], default=None)
    p_act.add_argument("--regressor", choices=["mlp", "forest"], default=None)
    p_act.add_argument("--amplification", type=float, default=None)
    p_act.add_argument("--hidden-width", type=int, default=None)
    p_act.add_argument("--max-epochs", type=int, default=None)
    p_act.add_argument("--trees", type=int, default=None)
    p_act.set_defaults(handler=cmd_active)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
