"""Command-line surface: fit, apply, evaluate, and study commands.

All commands are deterministic given identical files, flags, and seeds,
and every output file embeds a metadata block (tool version, effective
configuration, input digest) sufficient to re-run the command. Exit
codes: 0 success, 2 input error, 3 infeasible, 4 internal invariant
breach. Every flag can also be set through an environment variable
named ``SIMPLEXCAL_<COMMAND>_<OPTION>``.
"""

from __future__ import annotations

import csv
import functools
import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import click
import numpy as np

from . import __version__
from .analysis import (
    COMPARISON_METHODS,
    SyntheticSpec,
    bootstrap_convergence,
    compare_methods,
    fit_rate_slope,
    generate_synthetic,
)
from .calibration import CalibrationModel, FitConfig, apply_calibration, fit_geometric
from .datasets import (
    format_float,
    read_dataset_csv,
    read_probability_rows,
    write_dataset_csv,
)
from .diagnostics import (
    BinningScheme,
    classification_report,
    error_detection_curves,
    pareto_frontier,
    reliability_diagram,
)
from .exceptions import (
    BoundaryPoint,
    DegenerateLabels,
    DimensionMismatch,
    EmptyDataset,
    IndexOutOfRange,
    InsufficientData,
    InvalidArgument,
    InvalidProbability,
    NoFeasibleThreshold,
    NotPositiveDefinite,
    SimplexCalError,
    UndefinedAUC,
)
from .reliability import ReliabilityPolicy, concentration_report, fit_threshold, reliability_score
from .serialize import apply_model, load_model, save_model

EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_INTERNAL = 4

_INPUT_ERRORS = (
    InvalidArgument,
    InvalidProbability,
    DimensionMismatch,
    IndexOutOfRange,
    BoundaryPoint,
    DegenerateLabels,
    EmptyDataset,
    InsufficientData,
    UndefinedAUC,
    OSError,
    json.JSONDecodeError,
)
_INFEASIBLE_ERRORS = (NoFeasibleThreshold, NotPositiveDefinite)


@dataclass
class RunConfig:
    """Effective configuration echoed into every output's metadata."""

    epsilon: float = 1e-6
    lambda1: float = 0.01
    lambda2: float = 0.01
    reliability_lambda: float = 1.0
    alpha: float = 0.05
    bins: int = 15
    bin_mode: str = "equal_width"
    seed: int = 42
    trace_constraint: bool = False
    delta: float = 1e-3
    max_iterations: int = 500
    gradient_tolerance: float = 1e-8

    def fit_config(self) -> FitConfig:
        return FitConfig(
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            delta=self.delta,
            max_iterations=self.max_iterations,
            gradient_tolerance=self.gradient_tolerance,
            trace_constraint=self.trace_constraint,
        )


def _handle_errors(func):
    """Map package exceptions onto the documented exit-code scheme."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except _INFEASIBLE_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_INFEASIBLE)
        except _INPUT_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_INPUT)
        except SimplexCalError as exc:
            click.echo(f"internal error: {exc}", err=True)
            sys.exit(EXIT_INTERNAL)

    return wrapper


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _metadata(command: str, config: RunConfig, inputs: dict | None = None) -> dict:
    meta = {
        "tool": "simplexcal",
        "version": __version__,
        "command": command,
        "config": asdict(config),
    }
    if inputs:
        meta["inputs"] = {name: _sha256(path) for name, path in inputs.items()}
    return meta


def _metadata_comments(meta: dict) -> list[str]:
    return [f"metadata: {json.dumps(meta, sort_keys=True)}"]


def _write_csv(path, header: list[str], rows, meta: dict) -> None:
    with open(path, "w", newline="") as fh:
        for comment in _metadata_comments(meta):
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def _write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else format_float(value)
    return str(value)


_config_options = [
    click.option("--epsilon", type=float, default=1e-6, show_default=True,
                 help="Interior floor applied before log-ratio transforms."),
    click.option("--lambda1", type=float, default=0.01, show_default=True,
                 help="Penalty weight on the matrix (toward identity)."),
    click.option("--lambda2", type=float, default=0.01, show_default=True,
                 help="Penalty weight on the shift vector."),
    click.option("--reliability-lambda", type=float, default=1.0, show_default=True,
                 help="Reliability score sensitivity."),
    click.option("--alpha", type=float, default=0.05, show_default=True,
                 help="Target conditional error level for automation."),
    click.option("--bins", type=int, default=15, show_default=True,
                 help="Bin count for calibration-error binning."),
    click.option("--bin-mode", type=click.Choice(["equal_width", "equal_count"]),
                 default="equal_width", show_default=True, help="Binning mode."),
    click.option("--seed", type=int, default=42, show_default=True, help="RNG seed."),
    click.option("--trace-constraint/--no-trace-constraint", default=False,
                 show_default=True, help="Project the fitted matrix trace to c-1."),
    click.option("--delta", type=float, default=1e-3, show_default=True,
                 help="Eigenvalue floor for the fitted matrix."),
    click.option("--max-iterations", type=int, default=500, show_default=True,
                 help="Optimizer iteration cap."),
    click.option("--gradient-tolerance", type=float, default=1e-8, show_default=True,
                 help="Optimizer stopping tolerance (sample-averaged gradient)."),
]


def _with_config(func):
    for option in reversed(_config_options):
        func = option(func)

    @functools.wraps(func)
    def wrapper(epsilon, lambda1, lambda2, reliability_lambda, alpha, bins, bin_mode,
                seed, trace_constraint, delta, max_iterations, gradient_tolerance,
                **kwargs):
        config = RunConfig(
            epsilon=epsilon,
            lambda1=lambda1,
            lambda2=lambda2,
            reliability_lambda=reliability_lambda,
            alpha=alpha,
            bins=bins,
            bin_mode=bin_mode,
            seed=seed,
            trace_constraint=trace_constraint,
            delta=delta,
            max_iterations=max_iterations,
            gradient_tolerance=gradient_tolerance,
        )
        return func(config=config, **kwargs)

    return wrapper


@click.group(context_settings={"auto_envvar_prefix": "SIMPLEXCAL",
                               "help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="simplexcal")
def main():
    """Calibrate probability vectors and gate predictions by reliability."""


@main.command("fit")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Training CSV (p0,...,p{c-1},label).")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="Where to write the model JSON.")
@_with_config
@_handle_errors
def fit_command(data_path, out_path, config: RunConfig):
    """Fit the calibration map, learn the automation threshold, save both."""
    data = read_dataset_csv(data_path)
    model = fit_geometric(data, config.fit_config(), epsilon=config.epsilon)

    calibrated = apply_calibration(model, data.probs)
    scores = reliability_score(calibrated, config.reliability_lambda)
    correct = np.argmax(calibrated, axis=1) == data.labels
    tau_star = fit_threshold(scores, correct, config.alpha)
    policy = ReliabilityPolicy(config.reliability_lambda, tau_star, config.alpha)

    meta = _metadata("fit", config, {"data": data_path})
    save_model(out_path, model, policy, meta)

    automated = scores >= tau_star
    summary = {
        "model": str(out_path),
        "n_rows": len(data),
        "n_classes": data.n_classes,
        "fit_info": model.fit_info,
        "tau_star": tau_star,
        "train_automation_rate": float(automated.mean()),
        "train_automated_error_rate": (
            float((~correct[automated]).mean()) if automated.any() else 0.0
        ),
    }
    click.echo(json.dumps(summary, indent=2, sort_keys=True))


@main.command("apply")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Model JSON produced by `fit`.")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="CSV of probability rows (label column optional, ignored).")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="Output CSV: calibrated rows, prediction, reliability, decision.")
@_handle_errors
def apply_command(model_path, data_path, out_path):
    """Calibrate rows and emit per-row reliability and automate/defer decisions."""
    model, policy = load_model(model_path)
    probs, _, n_classes = read_probability_rows(data_path)
    if n_classes != model.n_classes:
        raise DimensionMismatch(
            f"{data_path} has {n_classes} classes, model expects {model.n_classes}"
        )
    if policy is None:
        raise InvalidArgument(
            f"{model_path} carries no decision policy; produce the model with `fit`"
        )
    sensitivity = policy.sensitivity

    calibrated = apply_model(model, probs)
    scores = reliability_score(calibrated, sensitivity)
    predicted = np.argmax(calibrated, axis=1)
    decisions = np.where(scores >= policy.tau_star, "automate", "defer")

    meta = {
        "tool": "simplexcal",
        "version": __version__,
        "command": "apply",
        "policy": {"lambda": sensitivity, "tau_star": policy.tau_star, "alpha": policy.alpha},
        "inputs": {"model": _sha256(model_path), "data": _sha256(data_path)},
    }
    header = [f"p_cal_{j}" for j in range(model.n_classes)] + [
        "predicted_class", "reliability", "decision",
    ]
    rows = (
        [format_float(v) for v in calibrated[i]]
        + [int(predicted[i]), format_float(float(scores[i])), decisions[i]]
        for i in range(len(probs))
    )
    _write_csv(out_path, header, rows, meta)
    click.echo(json.dumps({
        "rows": len(probs),
        "automated": int((decisions == "automate").sum()),
        "deferred": int((decisions == "defer").sum()),
        "out": str(out_path),
    }, indent=2, sort_keys=True))


@main.command("evaluate")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Labeled CSV to evaluate.")
@click.option("--model", "model_path", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Optional model JSON; rows are calibrated before scoring.")
@click.option("--out-dir", required=True, type=click.Path(file_okay=False),
              help="Directory for report.json, roc.csv, pr.csv, and bin CSVs.")
@_with_config
@_handle_errors
def evaluate_command(data_path, model_path, out_dir, config: RunConfig):
    """Evaluate (optionally calibrated) rows: metrics, curves, diagram bins."""
    data = read_dataset_csv(data_path)
    inputs = {"data": data_path}
    if model_path is not None:
        model, policy = load_model(model_path)
        if model.n_classes != data.n_classes:
            raise DimensionMismatch(
                f"{data_path} has {data.n_classes} classes, model expects {model.n_classes}"
            )
        probs = apply_model(model, data.probs)
        sensitivity = policy.sensitivity if policy else config.reliability_lambda
        inputs["model"] = model_path
    else:
        probs = data.probs
        sensitivity = config.reliability_lambda

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = _metadata("evaluate", config, inputs)

    report = classification_report(probs, data.labels, BinningScheme(config.bin_mode, config.bins))
    scores = reliability_score(probs, sensitivity)
    correct = np.argmax(probs, axis=1) == data.labels
    curves = error_detection_curves(scores, correct)

    _write_json(out / "report.json", {
        "metadata": meta,
        "log_loss": report.log_loss,
        "brier": report.brier,
        "ece_overall": report.ece_overall,
        "ece_per_class": report.ece_per_class,
        "accuracy": report.accuracy,
        "confusion": report.confusion.tolist(),
        "per_class": report.per_class,
        "error_detection_auc": curves.auc,
        "reliability_mean": float(np.mean(scores)),
    })
    _write_csv(out / "roc.csv", ["threshold", "fpr", "tpr"],
               ([_fmt(p.threshold), _fmt(p.x), _fmt(p.y)] for p in curves.roc), meta)
    _write_csv(out / "pr.csv", ["threshold", "recall", "precision"],
               ([_fmt(p.threshold), _fmt(p.x), _fmt(p.y)] for p in curves.pr), meta)

    if len(data) >= 10:
        diagram_scheme = BinningScheme("equal_count", 10)
    else:
        diagram_scheme = BinningScheme("equal_width", config.bins)
    bin_header = ["lo", "hi", "mean_confidence", "empirical_frequency", "count"]

    def bin_rows(bins):
        return ([_fmt(b.lo), _fmt(b.hi), _fmt(b.mean_confidence),
                 _fmt(b.empirical_frequency), b.count] for b in bins)

    _write_csv(out / "bins_overall.csv", bin_header,
               bin_rows(reliability_diagram(probs, data.labels, diagram_scheme)), meta)
    for j in range(data.n_classes):
        _write_csv(out / f"bins_class_{j}.csv", bin_header,
                   bin_rows(reliability_diagram(probs, data.labels, diagram_scheme, j)), meta)
    click.echo(json.dumps({"out_dir": str(out), "accuracy": report.accuracy,
                           "auc": curves.auc}, indent=2, sort_keys=True))


@main.command("pareto")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Labeled CSV.")
@click.option("--model", "model_path", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Optional model JSON applied before scoring.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="Frontier CSV output path.")
@_with_config
@_handle_errors
def pareto_command(data_path, model_path, out_path, config: RunConfig):
    """Emit the deferral-rate / automated-error-rate frontier."""
    data = read_dataset_csv(data_path)
    inputs = {"data": data_path}
    sensitivity = config.reliability_lambda
    if model_path is not None:
        model, policy = load_model(model_path)
        probs = apply_model(model, data.probs)
        if policy:
            sensitivity = policy.sensitivity
        inputs["model"] = model_path
    else:
        probs = data.probs

    scores = reliability_score(probs, sensitivity)
    correct = np.argmax(probs, axis=1) == data.labels
    points = pareto_frontier(scores, correct)
    meta = _metadata("pareto", config, inputs)
    _write_csv(out_path,
               ["threshold", "deferral_rate", "automated_error_rate", "automated_count"],
               ([_fmt(p.threshold), _fmt(p.deferral_rate), _fmt(p.automated_error_rate),
                 p.automated_count] for p in points),
               meta)
    click.echo(json.dumps({"points": len(points), "out": str(out_path)},
                          indent=2, sort_keys=True))


@main.command("bootstrap")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Labeled CSV to subsample.")
@click.option("--sizes", required=True, help="Comma-separated subsample sizes.")
@click.option("--replicates", type=int, default=1000, show_default=True,
              help="Refits per subsample size.")
@click.option("--workers", type=int, default=1, show_default=True,
              help="Parallel workers (output is identical for any worker count).")
@click.option("--out-dir", required=True, type=click.Path(file_okay=False),
              help="Directory for table.csv and summary.json.")
@_with_config
@_handle_errors
def bootstrap_command(data_path, sizes, replicates, workers, out_dir, config: RunConfig):
    """Convergence of refitted parameters toward the full-sample fit."""
    data = read_dataset_csv(data_path)
    try:
        size_list = [int(s) for s in sizes.split(",") if s.strip()]
    except ValueError:
        raise InvalidArgument(f"--sizes must be comma-separated integers, got {sizes!r}")

    table = bootstrap_convergence(
        data, size_list, replicates, config.fit_config(),
        seed=config.seed, epsilon=config.epsilon, workers=workers,
    )
    slope = None
    if len(size_list) >= 3 and all(v > 0 for v in table.mean_error):
        fitres = fit_rate_slope(table)
        slope = {"slope": fitres.slope, "ci_low": fitres.ci_low,
                 "ci_high": fitres.ci_high, "stderr": fitres.stderr}

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = _metadata("bootstrap", config, {"data": data_path})
    meta["replicates"] = replicates
    _write_csv(out / "table.csv", ["size", "mean_error", "sd_error", "replicates"],
               ([s, _fmt(m), _fmt(sd), table.replicates]
                for s, m, sd in zip(table.sizes, table.mean_error, table.sd_error)),
               meta)
    _write_json(out / "summary.json", {
        "metadata": meta,
        "sizes": table.sizes,
        "mean_error": table.mean_error,
        "sd_error": table.sd_error,
        "replicates": table.replicates,
        "rate": slope,
    })
    click.echo(json.dumps({"out_dir": str(out), "rate": slope}, indent=2, sort_keys=True))


@main.command("compare")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Labeled CSV.")
@click.option("--methods", default=",".join(COMPARISON_METHODS), show_default=True,
              help="Comma-separated method names.")
@click.option("--deferral-target", type=float, default=0.345, show_default=True,
              help="Deferral rate every method's threshold should match.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="Comparison table CSV.")
@_with_config
@_handle_errors
def compare_command(data_path, methods, deferral_target, out_path, config: RunConfig):
    """Compare calibration methods under a shared deferral budget."""
    data = read_dataset_csv(data_path)
    method_list = [m.strip() for m in methods.split(",") if m.strip()]
    rows = compare_methods(
        data, method_list, deferral_target, config.fit_config(),
        epsilon=config.epsilon, sensitivity=config.reliability_lambda,
    )
    meta = _metadata("compare", config, {"data": data_path})
    meta["deferral_target"] = deferral_target
    _write_csv(out_path,
               ["method", "errors", "accuracy", "ece_overall", "auc",
                "error_capture", "deferral_rate", "threshold"],
               ([r.method, r.errors, _fmt(r.accuracy), _fmt(r.ece_overall), _fmt(r.auc),
                 _fmt(r.error_capture), _fmt(r.deferral_rate), _fmt(r.threshold)]
                for r in rows),
               meta)
    click.echo(json.dumps({"methods": [r.method for r in rows], "out": str(out_path)},
                          indent=2, sort_keys=True))


@main.command("sample-size")
@click.option("--lambda", "sensitivity", type=float, default=1.0, show_default=True,
              help="Reliability score sensitivity.")
@click.option("--t", "precision", type=float, required=True,
              help="Desired precision of the mean-reliability estimate, in (0, 1).")
@click.option("--delta", type=float, required=True,
              help="Deviation probability budget, in (0, 1).")
@_handle_errors
def sample_size_command(sensitivity, precision, delta):
    """Closed-form validation-set sizes from the reliability concentration bound."""
    report = concentration_report(sensitivity, precision, delta)
    click.echo(json.dumps({
        "lambda": report.sensitivity,
        "sigma2": report.sigma2,
        "tail_coefficient": report.tail_coefficient,
        "t": report.t,
        "delta": report.delta,
        "n_ours": report.n_ours,
        "n_naive": report.n_naive,
    }, indent=2, sort_keys=True))


@main.command("simulate")
@click.option("--n", type=int, required=True, help="Number of rows to draw.")
@click.option("--c", "n_classes", type=int, default=3, show_default=True,
              help="Number of classes.")
@click.option("--seed", type=int, default=42, show_default=True, help="RNG seed.")
@click.option("--concentration", type=float, default=1.0, show_default=True,
              help="Inverse spread of rows around the class anchors.")
@click.option("--true-map", "true_map_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Model JSON whose inverse distorts the observations.")
@click.option("--map-temperature", type=float, default=None,
              help="Shorthand distortion: true map = T * identity.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="Dataset CSV output path.")
@_handle_errors
def simulate_command(n, n_classes, seed, concentration, true_map_path, map_temperature, out_path):
    """Write a reproducible synthetic dataset with known ground truth."""
    if true_map_path is not None and map_temperature is not None:
        raise InvalidArgument("--true-map and --map-temperature are mutually exclusive")
    if true_map_path is not None:
        true_map, _ = load_model(true_map_path)
        if not isinstance(true_map, CalibrationModel):
            raise InvalidArgument("--true-map must point to a geometric model")
    elif map_temperature is not None:
        if not map_temperature > 0:
            raise InvalidArgument("--map-temperature must be > 0")
        d = n_classes - 1
        true_map = CalibrationModel(map_temperature * np.eye(d), np.zeros(d), n_classes)
    else:
        true_map = CalibrationModel.identity(n_classes)

    spec = SyntheticSpec(n=n, n_classes=n_classes, true_map=true_map,
                         concentration=concentration, seed=seed)
    dataset = generate_synthetic(spec)
    meta = {
        "tool": "simplexcal",
        "version": __version__,
        "command": "simulate",
        "spec": {
            "n": n, "c": n_classes, "seed": seed, "concentration": concentration,
            "true_map_A": [float(v) for v in true_map.A.ravel()],
            "true_map_b": [float(v) for v in true_map.b],
        },
    }
    write_dataset_csv(out_path, dataset, _metadata_comments(meta))
    click.echo(json.dumps({"rows": n, "out": str(out_path)}, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
