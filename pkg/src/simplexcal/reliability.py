"""Reliability scores, neutral-zone thresholds, and concentration bounds.

The reliability of a calibrated probability row is

    R(p) = exp(-sensitivity * d_FR(p, e_jhat)),    jhat = argmax_j p_j,

a scalar in ``[exp(-sensitivity * pi), 1]`` because the simplex diameter
is pi. R is continuous across argmax ties (the distances to the two
competing vertices agree when the entries tie) and strictly increasing
in the winning probability, so rankings by R do not depend on the
sensitivity.

A decision policy automates a prediction when ``R >= tau_star`` and
defers it otherwise. The threshold is learned as the smallest observed
score whose automated subset has empirical error at most ``alpha``,
which maximizes automation subject to the constraint.

Because R lives in a known bounded range, a single draw obeys the
two-sided tail bound ``P(|R - E R| > t) <= 2 exp(-2 t^2 / range^2)``
with ``range = 1 - exp(-sensitivity * pi)``; the matching sub-Gaussian
parameter is ``range^2 / 4``. These give closed-form validation-set
sizes well below what a Lipschitz-diameter argument would demand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import InvalidArgument, NoFeasibleThreshold

DEFAULT_SENSITIVITY = 1.0
DEFAULT_ALPHA = 0.05


def score_floor(sensitivity: float) -> float:
    """Lower end of the reliability range: ``exp(-sensitivity * pi)``."""
    return math.exp(-sensitivity * math.pi)


@dataclass(frozen=True)
class ReliabilityPolicy:
    """Automation policy: sensitivity, learned threshold, target level."""

    sensitivity: float
    tau_star: float
    alpha: float

    def __post_init__(self):
        if not self.sensitivity > 0:
            raise InvalidArgument("sensitivity must be > 0")
        if not 0 < self.alpha < 1:
            raise InvalidArgument("alpha must lie in (0, 1)")
        floor = score_floor(self.sensitivity)
        if not floor < self.tau_star <= 1:
            raise InvalidArgument(
                f"tau_star={self.tau_star} outside ({floor:.6g}, 1] for "
                f"sensitivity={self.sensitivity}"
            )


@dataclass(frozen=True)
class ConcentrationReport:
    """Closed-form concentration constants and planned sample sizes.

    ``n_ours`` uses the exact score range; ``n_naive`` is the
    Lipschitz-diameter alternative that ignores the exponential decay.
    """

    sensitivity: float
    sigma2: float
    tail_coefficient: float
    n_ours: int
    n_naive: int
    t: float
    delta: float

    def tail_bound(self, t: float) -> float:
        """Two-sided tail bound ``2 exp(-tail_coefficient * t^2)`` (may exceed 1)."""
        return 2.0 * math.exp(-self.tail_coefficient * t * t)


def reliability_score(p_cal, sensitivity: float = DEFAULT_SENSITIVITY) -> float | np.ndarray:
    """Reliability of calibrated rows: ``exp(-sensitivity * d_FR(p, e_jhat))``.

    Accepts one vector ``(c,)`` or rows ``(n, c)``.
    """
    if not sensitivity > 0:
        raise InvalidArgument("sensitivity must be > 0")
    p_arr = np.asarray(p_cal, dtype=np.float64)
    # p[argmax] == p.max(), so the winning-vertex distance needs no index pass
    top = np.clip(np.sqrt(p_arr.max(axis=-1)), 0.0, 1.0)
    out = np.exp(-sensitivity * 2.0 * np.arccos(top))
    return float(out) if out.ndim == 0 else out


def fit_threshold(scores, correct, alpha: float) -> float:
    """Smallest observed score whose automated subset has error <= alpha.

    Candidate thresholds are the distinct observed scores, scanned in
    ascending order; the empirical conditional error is piecewise
    constant between observations, so nothing is lost. By construction
    the returned threshold maximizes automation subject to the
    constraint, and the empirical error among ``scores >= tau`` is at
    most ``alpha`` exactly on the fitting data.

    Raises:
        NoFeasibleThreshold: no candidate qualifies (the top-scored
            samples already violate the constraint).
    """
    scores_arr = np.asarray(scores, dtype=np.float64)
    correct_arr = np.asarray(correct, dtype=bool)
    if scores_arr.ndim != 1 or scores_arr.shape != correct_arr.shape:
        raise InvalidArgument("scores and correct must be equal-length 1-D sequences")
    if len(scores_arr) == 0:
        raise InvalidArgument("need at least one sample")
    if not 0 < alpha < 1:
        raise InvalidArgument("alpha must lie in (0, 1)")

    order = np.argsort(scores_arr, kind="stable")
    sorted_scores = scores_arr[order]
    errors_sorted = (~correct_arr[order]).astype(np.int64)
    # errors and population among samples with score >= sorted_scores[i]
    suffix_errors = np.cumsum(errors_sorted[::-1])[::-1]
    n = len(sorted_scores)

    first_of_value = np.flatnonzero(np.diff(sorted_scores, prepend=-np.inf) != 0)
    for i in first_of_value:
        if suffix_errors[i] <= alpha * (n - i):
            return float(sorted_scores[i])
    raise NoFeasibleThreshold(
        f"no threshold keeps conditional error <= {alpha}; even the top-scored "
        "candidate set is in violation"
    )


def decide(score, policy: ReliabilityPolicy) -> bool | np.ndarray:
    """True (automate) iff ``score >= tau_star``; the boundary automates."""
    out = np.asarray(score, dtype=np.float64) >= policy.tau_star
    return bool(out) if out.ndim == 0 else out


def concentration_report(
    sensitivity: float, t: float, delta: float
) -> ConcentrationReport:
    """Concentration constants and sample sizes for a reliability study.

    Args:
        sensitivity: score sensitivity (> 0).
        t: precision of the mean-reliability estimate, in (0, 1).
        delta: deviation probability budget, in (0, 1).

    Returns:
        Report with the sub-Gaussian parameter
        ``sigma2 = (1 - exp(-sensitivity*pi))^2 / 4``, the tail exponent
        multiplier ``2 / (1 - exp(-sensitivity*pi))^2``, and the two
        sample sizes ``ceil(sigma2 * log(2/delta) / (2 t^2))`` (exact
        range) and ``ceil((sensitivity*pi)^2/4 * log(2/delta) / (2 t^2))``
        (Lipschitz-diameter).
    """
    if not sensitivity > 0:
        raise InvalidArgument("sensitivity must be > 0")
    if not 0 < t < 1:
        raise InvalidArgument("t must lie in (0, 1)")
    if not 0 < delta < 1:
        raise InvalidArgument("delta must lie in (0, 1)")
    score_range = 1.0 - score_floor(sensitivity)
    sigma2 = score_range * score_range / 4.0
    sigma2_naive = (sensitivity * math.pi) ** 2 / 4.0
    budget = math.log(2.0 / delta) / (2.0 * t * t)
    return ConcentrationReport(
        sensitivity=sensitivity,
        sigma2=sigma2,
        tail_coefficient=2.0 / (score_range * score_range),
        n_ours=math.ceil(sigma2 * budget),
        n_naive=math.ceil(sigma2_naive * budget),
        t=t,
        delta=delta,
    )


def hoeffding_tail_audit(samples, sensitivity: float, t_grid) -> list[dict]:
    """Empirical tail frequencies of ``|R - mean|`` against the range bound.

    Args:
        samples: draws of the reliability score from any fixed generator.
        sensitivity: the sensitivity the draws were computed with.
        t_grid: deviations to audit.

    Returns:
        One record per t: ``{"t", "empirical", "bound", "ok"}``.
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim != 1 or len(arr) == 0:
        raise InvalidArgument("samples must be a nonempty 1-D sequence")
    if not sensitivity > 0:
        raise InvalidArgument("sensitivity must be > 0")
    score_range = 1.0 - score_floor(sensitivity)
    coefficient = 2.0 / (score_range * score_range)
    deviations = np.abs(arr - arr.mean())
    out = []
    for t in t_grid:
        empirical = float((deviations > t).mean())
        bound = 2.0 * math.exp(-coefficient * float(t) ** 2)
        out.append({"t": float(t), "empirical": empirical, "bound": bound,
                    "ok": empirical <= bound})
    return out


class ReliabilityGate(BaseEstimator):
    """Automate-or-defer gate over calibrated probability rows.

    ``fit(X, y)`` scores the rows, compares argmax predictions with the
    labels, and learns the automation threshold at level ``alpha``.
    ``predict(X)`` returns the argmax class for automated rows and
    ``defer_label`` (default -1) for deferred ones.
    """

    def __init__(
        self,
        sensitivity: float = DEFAULT_SENSITIVITY,
        alpha: float = DEFAULT_ALPHA,
        defer_label: int = -1,
    ):
        self.sensitivity = sensitivity
        self.alpha = alpha
        self.defer_label = defer_label

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        scores = reliability_score(X, self.sensitivity)
        correct = np.argmax(X, axis=1) == y
        tau_star = fit_threshold(scores, correct, self.alpha)
        self.policy_ = ReliabilityPolicy(self.sensitivity, tau_star, self.alpha)
        self.tau_star_ = tau_star
        return self

    def score_samples(self, X):
        X = check_array(X, dtype=np.float64)
        return reliability_score(X, self.sensitivity)

    def predict(self, X):
        check_is_fitted(self, "policy_")
        X = check_array(X, dtype=np.float64)
        automate = decide(reliability_score(X, self.sensitivity), self.policy_)
        classes = np.argmax(X, axis=1)
        return np.where(automate, classes, self.defer_label)
