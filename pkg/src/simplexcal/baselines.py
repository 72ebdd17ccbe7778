"""Reference post-hoc calibrators: temperature, Platt one-vs-rest, isotonic.

These exist so the geometric map can be compared against the standard
alternatives under one application surface. All of them consume and emit
probability rows; temperature scaling treats ``log p`` as surrogate
logits (true logits are softmax-shift equivalent to ``log p``).
One-vs-rest outputs are renormalized to the simplex.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .datasets import LabeledDataset
from .exceptions import DegenerateLabels, DimensionMismatch, InvalidArgument
from .geometry import DEFAULT_EPSILON, normalize_and_clip

BASELINE_KINDS = ("temperature", "platt_ovr", "isotonic")

TEMPERATURE_BOUNDS = (0.05, 20.0)


@dataclass
class BaselineModel:
    """Fitted baseline calibrator, tagged by ``kind``.

    Parameters are kind-specific: a scalar ``temperature``; per-class
    Platt coefficients ``platt_a``/``platt_b``; or per-class step
    functions given by sorted breakpoints ``isotonic_x`` with
    nondecreasing values ``isotonic_y`` in [0, 1].
    """

    kind: str
    n_classes: int
    epsilon: float = DEFAULT_EPSILON
    temperature: float | None = None
    platt_a: np.ndarray | None = None
    platt_b: np.ndarray | None = None
    isotonic_x: list = field(default_factory=list)
    isotonic_y: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise InvalidArgument(f"unknown baseline kind {self.kind!r}")
        if self.kind == "temperature":
            if self.temperature is None or not self.temperature > 0:
                raise InvalidArgument("temperature must be positive")
        elif self.kind == "platt_ovr":
            self.platt_a = np.asarray(self.platt_a, dtype=np.float64)
            self.platt_b = np.asarray(self.platt_b, dtype=np.float64)
            if self.platt_a.shape != (self.n_classes,) or self.platt_b.shape != (self.n_classes,):
                raise DimensionMismatch("platt coefficients must have one (a, b) per class")
        else:
            if len(self.isotonic_x) != self.n_classes or len(self.isotonic_y) != self.n_classes:
                raise DimensionMismatch("isotonic breakpoints must cover every class")
            self.isotonic_x = [np.asarray(x, dtype=np.float64) for x in self.isotonic_x]
            self.isotonic_y = [np.asarray(y, dtype=np.float64) for y in self.isotonic_y]
            for x, y in zip(self.isotonic_x, self.isotonic_y):
                if np.any(np.diff(x) <= 0) or np.any(np.diff(y) < -1e-12):
                    raise InvalidArgument("isotonic breakpoints must be increasing in x, nondecreasing in y")
                if len(x) != len(y) or len(x) == 0:
                    raise InvalidArgument("isotonic breakpoints must be nonempty and aligned")
                if y.min() < -1e-12 or y.max() > 1 + 1e-12:
                    raise InvalidArgument("isotonic values must lie in [0, 1]")


def pav(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pool-adjacent-violators: least-squares nondecreasing fit of y on x.

    Ties in ``x`` are merged (mean target, summed weight) before pooling.

    Returns:
        ``(breakpoints, values)`` — strictly increasing x positions and
        the nondecreasing fitted level at each.
    """
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    ux, inverse, counts = np.unique(xs, return_inverse=True, return_counts=True)
    sums = np.zeros(len(ux))
    np.add.at(sums, inverse, ys)
    means = sums / counts

    levels: list[float] = []
    weights: list[float] = []
    spans: list[int] = []  # how many unique x positions each block covers
    for mean, weight in zip(means, counts):
        levels.append(float(mean))
        weights.append(float(weight))
        spans.append(1)
        while len(levels) > 1 and levels[-2] > levels[-1]:
            w = weights[-2] + weights[-1]
            levels[-2] = (levels[-2] * weights[-2] + levels[-1] * weights[-1]) / w
            weights[-2] = w
            spans[-2] += spans[-1]
            del levels[-1], weights[-1], spans[-1]

    return ux, np.repeat(levels, spans)


def _step_lookup(breakpoints: np.ndarray, values: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Right-continuous step function; queries below the first breakpoint clip."""
    idx = np.clip(np.searchsorted(breakpoints, query, side="right") - 1, 0, len(values) - 1)
    return values[idx]


def _logit(p: np.ndarray) -> np.ndarray:
    return np.log(p) - np.log1p(-p)


def _fit_platt_one(x: np.ndarray, t: np.ndarray) -> tuple[float, float]:
    """Unregularized logistic fit of binary t on scalar feature x."""

    def nll(params):
        u = params[0] * x + params[1]
        # log(1 + e^u) - t*u, stable in both tails
        loss = np.logaddexp(0.0, u) - t * u
        s = 1.0 / (1.0 + np.exp(-u))
        resid = s - t
        return loss.sum(), np.array([(resid * x).sum(), resid.sum()])

    result = minimize(nll, np.array([1.0, 0.0]), jac=True, method="L-BFGS-B",
                      options={"maxiter": 200, "ftol": 1e-14, "gtol": 1e-10})
    return float(result.x[0]), float(result.x[1])


def fit_baseline(kind: str, data: LabeledDataset, epsilon: float = DEFAULT_EPSILON) -> BaselineModel:
    """Fit a baseline calibrator of the given kind on labeled rows.

    Raises:
        DegenerateLabels: single-class data for ``platt_ovr``/``isotonic``.
        InvalidArgument: unknown kind.
    """
    if kind not in BASELINE_KINDS:
        raise InvalidArgument(f"unknown baseline kind {kind!r}; choose from {BASELINE_KINDS}")
    clipped = normalize_and_clip(data.probs, epsilon)
    c = data.n_classes

    if kind == "temperature":
        log_p = np.log(clipped)
        labels = data.labels

        def nll(T):
            logits = log_p / T
            shift = logits.max(axis=1, keepdims=True)
            lse = np.log(np.exp(logits - shift).sum(axis=1)) + shift[:, 0]
            return (lse - logits[np.arange(len(labels)), labels]).sum()

        result = minimize_scalar(
            nll, bounds=TEMPERATURE_BOUNDS, method="bounded",
            options={"xatol": 1e-10, "maxiter": 500},
        )
        return BaselineModel("temperature", c, epsilon, temperature=float(result.x))

    if len(np.unique(data.labels)) < 2:
        raise DegenerateLabels(f"{kind} needs at least two distinct labels")

    if kind == "platt_ovr":
        a = np.empty(c)
        b = np.empty(c)
        for j in range(c):
            a[j], b[j] = _fit_platt_one(_logit(clipped[:, j]), (data.labels == j).astype(float))
        return BaselineModel("platt_ovr", c, epsilon, platt_a=a, platt_b=b)

    xs, ys = [], []
    for j in range(c):
        bx, by = pav(clipped[:, j], (data.labels == j).astype(float))
        xs.append(bx)
        ys.append(np.clip(by, 0.0, 1.0))
    return BaselineModel("isotonic", c, epsilon, isotonic_x=xs, isotonic_y=ys)


def baseline_apply(model: BaselineModel, p) -> np.ndarray:
    """Apply a baseline calibrator to a vector or rows of probabilities.

    One-vs-rest outputs are renormalized; an isotonic row mapping every
    class to zero falls back to the uniform vector.
    """
    p_arr = np.asarray(p, dtype=np.float64)
    if p_arr.shape[-1] != model.n_classes:
        raise DimensionMismatch(
            f"input has {p_arr.shape[-1]} classes, model expects {model.n_classes}"
        )
    single = p_arr.ndim == 1
    rows = normalize_and_clip(np.atleast_2d(p_arr), model.epsilon)

    if model.kind == "temperature":
        logits = np.log(rows) / model.temperature
        logits -= logits.max(axis=1, keepdims=True)
        out = np.exp(logits)
        out /= out.sum(axis=1, keepdims=True)
    elif model.kind == "platt_ovr":
        u = model.platt_a * _logit(rows) + model.platt_b
        out = 1.0 / (1.0 + np.exp(-u))
        out /= out.sum(axis=1, keepdims=True)
    else:
        out = np.column_stack(
            [_step_lookup(model.isotonic_x[j], model.isotonic_y[j], rows[:, j])
             for j in range(model.n_classes)]
        )
        totals = out.sum(axis=1)
        degenerate = totals == 0.0
        out[degenerate] = 1.0 / model.n_classes
        out[~degenerate] /= totals[~degenerate, None]
    return out[0] if single else out


class _BaselineCalibrator(BaseEstimator, TransformerMixin):
    """Shared fit/transform plumbing for the baseline estimators."""

    _kind = ""

    def __init__(self, epsilon: float = DEFAULT_EPSILON):
        self.epsilon = epsilon

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        data = LabeledDataset(X, y, X.shape[1])
        self.model_ = fit_baseline(self._kind, data, epsilon=self.epsilon)
        self.n_classes_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return baseline_apply(self.model_, X)

    def predict(self, X):
        return np.argmax(self.transform(X), axis=1)


class TemperatureCalibrator(_BaselineCalibrator):
    """Single-temperature softmax rescaling of ``log p``."""

    _kind = "temperature"


class PlattCalibrator(_BaselineCalibrator):
    """Per-class logistic (one-vs-rest) calibration, renormalized."""

    _kind = "platt_ovr"


class IsotonicCalibrator(_BaselineCalibrator):
    """Per-class pool-adjacent-violators step functions, renormalized."""

    _kind = "isotonic"
