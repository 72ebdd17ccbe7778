"""Synthetic studies: convergence, cross-validation, comparisons, audits.

Everything here is deterministic under explicit seeds. Replicated work
(bootstrap subsamples, folds) derives one RNG per task from
``(seed, task coordinates)``, so results are independent of execution
order and of how many workers run the tasks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import linregress

from .baselines import fit_baseline, baseline_apply
from .calibration import CalibrationModel, FitConfig, apply_calibration, fit_geometric
from .datasets import LabeledDataset
from .diagnostics import DEFAULT_ECE_SCHEME, ece, error_detection_curves
from .exceptions import InvalidArgument
from .geometry import DEFAULT_EPSILON, alr_inverse, normalize_and_clip
from .reliability import DEFAULT_ALPHA, DEFAULT_SENSITIVITY, fit_threshold, reliability_score

#: Log-ratio magnitude of the class anchors used by the synthetic generator.
#: At this scale an undistorted anchor row has winning probability ~0.9,
#: so labels carry enough signal for threshold and comparison studies.
ANCHOR_SCALE = 3.0

#: Methods understood by :func:`compare_methods`.
COMPARISON_METHODS = ("uncalibrated", "temperature", "platt_ovr", "isotonic", "geometric")

NORMAL_95 = 1.959963984540054


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a reproducible miscalibrated dataset.

    Rows are built by drawing a latent class uniformly, perturbing its
    anchor isotropically in log-ratio space with standard deviation
    ``1 / concentration``, drawing the label from the resulting (true)
    probabilities, and then distorting the observation with the inverse
    of ``true_map`` — so fitting a calibration map on the output should
    recover ``true_map`` itself.
    """

    n: int
    n_classes: int
    true_map: CalibrationModel
    concentration: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise InvalidArgument("n must be >= 1")
        if self.n_classes != self.true_map.n_classes:
            raise InvalidArgument("true_map class count must match n_classes")
        if not self.concentration > 0:
            raise InvalidArgument("concentration must be > 0")


@dataclass(frozen=True)
class ConvergenceTable:
    """Subsample-size convergence summary (aligned lists)."""

    sizes: list
    mean_error: list
    sd_error: list
    replicates: int


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    ci_low: float
    ci_high: float
    stderr: float


@dataclass(frozen=True)
class FoldResult:
    fold: int
    automated_error_rate: float
    error_capture: float
    deferral_rate: float
    automated_count: int
    error_count: int
    missing_class: bool


@dataclass(frozen=True)
class CrossValidationResult:
    folds: list
    mean_automated_error_rate: float
    sd_automated_error_rate: float
    mean_error_capture: float
    sd_error_capture: float
    mean_deferral_rate: float
    sd_deferral_rate: float


@dataclass(frozen=True)
class MethodRow:
    method: str
    errors: int
    accuracy: float
    ece_overall: float
    auc: float
    error_capture: float
    deferral_rate: float
    threshold: float


def _class_anchors(n_classes: int) -> np.ndarray:
    """Log-ratio coordinates of softmax(ANCHOR_SCALE * e_k) per class k."""
    logits = ANCHOR_SCALE * np.eye(n_classes)
    return logits[:, :-1] - logits[:, -1:]


def generate_synthetic(spec: SyntheticSpec) -> LabeledDataset:
    """Draw a labeled dataset from the spec; identical specs give identical bits."""
    rng = np.random.default_rng(spec.seed)
    c = spec.n_classes
    anchors = _class_anchors(c)

    latent = rng.integers(0, c, size=spec.n)
    z_true = anchors[latent] + rng.standard_normal((spec.n, c - 1)) / spec.concentration
    q_true = alr_inverse(z_true)

    draws = rng.random(spec.n)
    cumulative = np.cumsum(q_true, axis=1)
    labels = np.minimum((draws[:, None] > cumulative).sum(axis=1), c - 1)

    z_observed = np.linalg.solve(spec.true_map.A, (z_true - spec.true_map.b).T).T
    return LabeledDataset(alr_inverse(z_observed), labels.astype(np.int64), c)


def parameter_distance(model: CalibrationModel, reference: CalibrationModel) -> float:
    """Joint parameter distance ``sqrt(||dA||_F^2 + ||db||^2)``."""
    da = model.A - reference.A
    db = model.b - reference.b
    return float(math.sqrt((da * da).sum() + (db * db).sum()))


def _bootstrap_task(
    data: LabeledDataset,
    size: int,
    replicate: int,
    cfg: FitConfig,
    epsilon: float,
    seed: int,
    reference: CalibrationModel,
) -> float:
    import warnings

    rng = np.random.default_rng([seed, size, replicate])
    # sort so the subsample keeps original row order: a full-size draw then
    # reproduces the reference fit bit for bit
    idx = np.sort(rng.choice(len(data), size=size, replace=False))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # tiny subsamples warn per fit
        fitted = fit_geometric(data.subset(idx), cfg, epsilon=epsilon)
    return parameter_distance(fitted, reference)


def bootstrap_convergence(
    data: LabeledDataset,
    sizes,
    replicates: int,
    cfg: FitConfig | None = None,
    seed: int = 0,
    epsilon: float = DEFAULT_EPSILON,
    workers: int = 1,
    reference: CalibrationModel | None = None,
) -> ConvergenceTable:
    """Parameter distance to a reference fit as the subsample size grows.

    Per (size, replicate): draw that many rows without replacement, fit,
    and record the parameter distance to the reference. The default
    reference is the full-sample fit; pass a model (e.g. a known true
    map) to measure against ground truth instead. Replicate seeds are
    derived from ``(seed, size, replicate)``, so any worker count or
    execution order produces identical output.
    """
    cfg = cfg or FitConfig()
    sizes = [int(s) for s in sizes]
    if replicates < 1:
        raise InvalidArgument("replicates must be >= 1")
    if not sizes:
        raise InvalidArgument("need at least one subsample size")
    if max(sizes) > len(data):
        raise InvalidArgument(f"subsample size {max(sizes)} exceeds {len(data)} rows")
    if min(sizes) < 1:
        raise InvalidArgument("subsample sizes must be >= 1")

    if reference is None:
        reference = fit_geometric(data, cfg, epsilon=epsilon)

    tasks = [(size, rep) for size in sizes for rep in range(replicates)]
    errors = Parallel(n_jobs=workers)(
        delayed(_bootstrap_task)(data, size, rep, cfg, epsilon, seed, reference)
        for size, rep in tasks
    )
    by_size = np.asarray(errors, dtype=np.float64).reshape(len(sizes), replicates)
    means = by_size.mean(axis=1)
    sds = by_size.std(axis=1, ddof=1) if replicates > 1 else np.zeros(len(sizes))
    return ConvergenceTable(
        sizes=sizes,
        mean_error=[float(v) for v in means],
        sd_error=[float(v) for v in sds],
        replicates=replicates,
    )


def fit_rate_slope(table: ConvergenceTable) -> SlopeFit:
    """Least-squares slope of log(mean error) on log(size), with 95% CI.

    Raises:
        InvalidArgument: fewer than 3 sizes or a nonpositive mean error.
    """
    sizes = np.asarray(table.sizes, dtype=np.float64)
    means = np.asarray(table.mean_error, dtype=np.float64)
    if len(sizes) < 3:
        raise InvalidArgument("need at least 3 sizes to fit a rate")
    if (means <= 0).any():
        raise InvalidArgument("mean errors must be positive for a log-log fit")
    result = linregress(np.log(sizes), np.log(means))
    margin = NORMAL_95 * result.stderr
    return SlopeFit(
        slope=float(result.slope),
        ci_low=float(result.slope - margin),
        ci_high=float(result.slope + margin),
        stderr=float(result.stderr),
    )


def _stratified_folds(labels: np.ndarray, k: int, seed: int) -> list[np.ndarray]:
    """Deal each class's shuffled indices round-robin across k folds."""
    rng = np.random.default_rng([seed, len(labels), k])
    assignment = np.empty(len(labels), dtype=np.int64)
    cursor = 0
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        rng.shuffle(members)
        for idx in members:
            assignment[idx] = cursor % k
            cursor += 1
    return [np.flatnonzero(assignment == f) for f in range(k)]


def cross_validate(
    data: LabeledDataset,
    k: int,
    cfg: FitConfig | None = None,
    epsilon: float = DEFAULT_EPSILON,
    sensitivity: float = DEFAULT_SENSITIVITY,
    alpha: float = DEFAULT_ALPHA,
    seed: int = 0,
) -> CrossValidationResult:
    """Stratified k-fold pipeline evaluation (fit map and threshold on train).

    Each fold reports the held-out automated error rate, error capture,
    and deferral rate; a fold whose train or test split lacks some class
    proceeds with ``missing_class=True``.
    """
    if k < 2 or k > len(data):
        raise InvalidArgument(f"k must lie in [2, {len(data)}]")
    cfg = cfg or FitConfig()
    folds = _stratified_folds(data.labels, k, seed)
    all_classes = set(range(data.n_classes))

    results = []
    for f, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(len(data)), test_idx)
        train, test = data.subset(train_idx), data.subset(test_idx)
        missing = (set(np.unique(train.labels)) != all_classes) or (
            set(np.unique(test.labels)) != all_classes
        )

        model = fit_geometric(train, cfg, epsilon=epsilon)
        cal_train = apply_calibration(model, train.probs)
        tau = fit_threshold(
            reliability_score(cal_train, sensitivity),
            np.argmax(cal_train, axis=1) == train.labels,
            alpha,
        )

        cal_test = apply_calibration(model, test.probs)
        scores = reliability_score(cal_test, sensitivity)
        correct = np.argmax(cal_test, axis=1) == test.labels
        automated = scores >= tau
        n_automated = int(automated.sum())
        n_errors = int((~correct).sum())
        results.append(
            FoldResult(
                fold=f,
                automated_error_rate=(
                    float((~correct[automated]).mean()) if n_automated else 0.0
                ),
                error_capture=(
                    float((~correct[~automated]).sum() / n_errors) if n_errors else 0.0
                ),
                deferral_rate=float((~automated).mean()),
                automated_count=n_automated,
                error_count=n_errors,
                missing_class=missing,
            )
        )

    def moments(values):
        arr = np.asarray(values, dtype=np.float64)
        sd = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
        return float(arr.mean()), sd

    mean_err, sd_err = moments([r.automated_error_rate for r in results])
    mean_cap, sd_cap = moments([r.error_capture for r in results])
    mean_def, sd_def = moments([r.deferral_rate for r in results])
    return CrossValidationResult(
        folds=results,
        mean_automated_error_rate=mean_err,
        sd_automated_error_rate=sd_err,
        mean_error_capture=mean_cap,
        sd_error_capture=sd_cap,
        mean_deferral_rate=mean_def,
        sd_deferral_rate=sd_def,
    )


def _closest_deferral_threshold(scores: np.ndarray, target: float) -> float:
    """Observed-score threshold whose deferral rate is closest to target."""
    n = len(scores)
    sorted_scores = np.sort(scores)
    candidates = sorted_scores[np.flatnonzero(np.diff(sorted_scores, prepend=-np.inf) != 0)]
    deferral = np.searchsorted(sorted_scores, candidates, side="left") / n
    best = int(np.argmin(np.abs(deferral - target)))
    return float(candidates[best])


def compare_methods(
    data: LabeledDataset,
    methods=COMPARISON_METHODS,
    deferral_target: float = 0.345,
    cfg: FitConfig | None = None,
    epsilon: float = DEFAULT_EPSILON,
    sensitivity: float = DEFAULT_SENSITIVITY,
) -> list[MethodRow]:
    """Fit each method on the data and report its quality and deferral columns.

    Reliability scores always use the shared ``sensitivity`` on each
    method's calibrated outputs; the per-method threshold is the
    observed score whose deferral rate is closest to the target.
    """
    cfg = cfg or FitConfig()
    rows = []
    for method in methods:
        if method not in COMPARISON_METHODS:
            raise InvalidArgument(
                f"unknown method {method!r}; choose from {COMPARISON_METHODS}"
            )
        if method == "uncalibrated":
            calibrated = normalize_and_clip(data.probs, epsilon)
        elif method == "geometric":
            calibrated = apply_calibration(fit_geometric(data, cfg, epsilon=epsilon), data.probs)
        else:
            calibrated = baseline_apply(fit_baseline(method, data, epsilon=epsilon), data.probs)

        correct = np.argmax(calibrated, axis=1) == data.labels
        scores = reliability_score(calibrated, sensitivity)
        threshold = _closest_deferral_threshold(scores, deferral_target)
        deferred = scores < threshold
        n_errors = int((~correct).sum())
        rows.append(
            MethodRow(
                method=method,
                errors=n_errors,
                accuracy=float(correct.mean()),
                ece_overall=ece(calibrated, data.labels, DEFAULT_ECE_SCHEME),
                auc=error_detection_curves(scores, correct).auc,
                error_capture=(
                    float((~correct[deferred]).sum() / n_errors) if n_errors else 0.0
                ),
                deferral_rate=float(deferred.mean()),
                threshold=threshold,
            )
        )
    return rows


@dataclass(frozen=True)
class TheoryConstants:
    """Closed-form bound chain for the penalized calibration loss.

    Given an interior floor, parameter norm caps, and penalty weights,
    the derived members are

        alr_bound    = log((1 - (c-1)*eps) / eps)
        logit_bound  = matrix_bound * alr_bound * sqrt(c-1) + bias_bound
        loss_bound   = log(c) + 2 * logit_bound
        curvature    = min(2*lambda1, 2*lambda2)
    """

    epsilon: float
    n_classes: int
    matrix_bound: float
    bias_bound: float
    lambda1: float = 0.01
    lambda2: float = 0.01
    alr_bound: float = field(init=False)
    logit_bound: float = field(init=False)
    loss_bound: float = field(init=False)
    curvature: float = field(init=False)

    def __post_init__(self):
        if not 0 < self.epsilon < 1.0 / self.n_classes:
            raise InvalidArgument("epsilon must lie in (0, 1/c)")
        if self.matrix_bound < 0 or self.bias_bound < 0:
            raise InvalidArgument("norm bounds must be >= 0")
        c = self.n_classes
        alr_bound = math.log((1.0 - (c - 1) * self.epsilon) / self.epsilon)
        logit_bound = self.matrix_bound * alr_bound * math.sqrt(c - 1) + self.bias_bound
        object.__setattr__(self, "alr_bound", alr_bound)
        object.__setattr__(self, "logit_bound", logit_bound)
        object.__setattr__(self, "loss_bound", math.log(c) + 2.0 * logit_bound)
        object.__setattr__(self, "curvature", min(2.0 * self.lambda1, 2.0 * self.lambda2))


@dataclass(frozen=True)
class TheoryAudit:
    """Outcome of the numerical audit of the bound chain."""

    trials: int
    hessian_violations: int
    min_hessian_margin: float
    loss_violations: int
    max_loss_observed: float
    loss_bound: float
    constants_ok: bool

    @property
    def passed(self) -> bool:
        return self.hessian_violations == 0 and self.loss_violations == 0 and self.constants_ok


def softmax_hessian_block(p) -> np.ndarray:
    """Reduced softmax Hessian ``diag(p_{1:c-1}) - p_{1:c-1} p_{1:c-1}^T``."""
    p_arr = np.asarray(p, dtype=np.float64)
    head = p_arr[:-1]
    return np.diag(head) - np.outer(head, head)


def _interior_samples(rng: np.random.Generator, trials: int, c: int, epsilon: float) -> np.ndarray:
    """Random interior rows with every entry at least epsilon."""
    body = rng.dirichlet(np.ones(c), size=trials)
    return epsilon + (1.0 - c * epsilon) * body


def theory_audit(
    constants: TheoryConstants,
    trials: int = 10000,
    seed: int = 0,
    hessian_slack: float = 1e-12,
) -> TheoryAudit:
    """Numerically audit the eigenvalue and bounded-loss guarantees.

    Checks, over ``trials`` random draws each:

    a. the reduced softmax Hessian at interior points with min entry
       >= epsilon has minimum eigenvalue >= epsilon^2 (within slack);
    b. the per-sample loss of any model within the norm caps on any
       interior input stays below ``loss_bound``;
    c. the derived constants match their closed forms exactly.
    """
    rng = np.random.default_rng(seed)
    eps = constants.epsilon
    n_classes = constants.n_classes

    points = _interior_samples(rng, trials, n_classes, eps)
    blocks = points[:, :-1]
    hessians = blocks[:, :, None] * np.eye(n_classes - 1) - blocks[:, :, None] * blocks[:, None, :]
    eigenvalues = np.linalg.eigvalsh(hessians)[:, 0]
    margins = eigenvalues - eps * eps
    hessian_violations = int((margins < -hessian_slack).sum())

    d = n_classes - 1
    max_loss = 0.0
    loss_violations = 0
    for _ in range(trials):
        raw_A = rng.standard_normal((d, d))
        raw_b = rng.standard_normal(d)
        A = raw_A * (constants.matrix_bound * rng.random() / max(np.linalg.norm(raw_A), 1e-300))
        b_vec = raw_b * (constants.bias_bound * rng.random() / max(np.linalg.norm(raw_b), 1e-300))
        p = _interior_samples(rng, 1, n_classes, eps)[0]
        z = np.log(p[:-1] / p[-1])
        logits = np.concatenate([A @ z + b_vec, [0.0]])
        logits -= logits.max()
        cal = np.exp(logits)
        cal /= cal.sum()
        worst = float(-np.log(cal.min()))
        max_loss = max(max_loss, worst)
        if worst > constants.loss_bound:
            loss_violations += 1

    expected_alr = math.log((1.0 - (n_classes - 1) * eps) / eps)
    expected_logit = constants.matrix_bound * expected_alr * math.sqrt(d) + constants.bias_bound
    constants_ok = (
        constants.alr_bound == expected_alr
        and constants.logit_bound == expected_logit
        and constants.loss_bound == math.log(n_classes) + 2.0 * expected_logit
        and constants.curvature == min(2.0 * constants.lambda1, 2.0 * constants.lambda2)
    )
    return TheoryAudit(
        trials=trials,
        hessian_violations=hessian_violations,
        min_hessian_margin=float(margins.min()),
        loss_violations=loss_violations,
        max_loss_observed=max_loss,
        loss_bound=constants.loss_bound,
        constants_ok=constants_ok,
    )
