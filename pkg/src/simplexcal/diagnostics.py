"""Evaluation machinery: scoring rules, calibration bins, and curves.

Conventions used throughout:

* Brier score is the full multi-class sum ``mean_i sum_j (p_ij - y_ij)^2``
  (uniform 3-class predictions score 2/3).
* Overall calibration error bins samples by ``max_k p_k`` and measures
  argmax accuracy per bin; the per-class variant bins by ``p_j`` and
  measures the empirical frequency of label j.
* Error-detection curves treat a LOW score as the alarm: a sample is
  flagged as a suspected error when ``score <= threshold``. AUC is the
  rank statistic P(score_error < score_correct) + P(tie)/2 (midranks).
* All outputs are plot-ready data, never rendered images.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .exceptions import EmptyDataset, InsufficientData, InvalidArgument, UndefinedAUC

BIN_MODES = ("equal_width", "equal_count")


@dataclass(frozen=True)
class BinningScheme:
    """How to partition samples for calibration bins."""

    mode: str = "equal_width"
    bin_count: int = 15

    def __post_init__(self):
        if self.mode not in BIN_MODES:
            raise InvalidArgument(f"mode must be one of {BIN_MODES}, got {self.mode!r}")
        if self.bin_count < 2:
            raise InvalidArgument("bin_count must be >= 2")


#: Overall expected calibration error default.
DEFAULT_ECE_SCHEME = BinningScheme("equal_width", 15)
#: Reliability-diagram default (equal-count bins adapt to the sample).
DEFAULT_DIAGRAM_SCHEME = BinningScheme("equal_count", 10)


@dataclass(frozen=True)
class DiagramBin:
    """One reliability-diagram bin; empty equal-width bins carry NaNs."""

    lo: float
    hi: float
    mean_confidence: float
    empirical_frequency: float
    count: int


@dataclass(frozen=True)
class CurvePoint:
    """One swept point: for ROC x=FPR, y=TPR; for PR x=recall, y=precision."""

    threshold: float
    x: float
    y: float


@dataclass(frozen=True)
class ParetoPoint:
    """Deferral trade-off at one threshold (defer when score < threshold)."""

    threshold: float
    deferral_rate: float
    automated_error_rate: float
    automated_count: int


@dataclass(frozen=True)
class CurveBundle:
    roc: list
    pr: list
    auc: float


@dataclass(frozen=True)
class EvaluationReport:
    """Aggregate quality report for probability rows against labels."""

    log_loss: float
    brier: float
    ece_overall: float
    ece_per_class: list
    confusion: np.ndarray
    per_class: list
    accuracy: float


def _check_rows(probs, labels) -> tuple[np.ndarray, np.ndarray]:
    probs_arr = np.asarray(probs, dtype=np.float64)
    labels_arr = np.asarray(labels, dtype=np.int64)
    if probs_arr.ndim != 2:
        raise InvalidArgument("probs must be a matrix of rows")
    if len(probs_arr) != len(labels_arr):
        raise InvalidArgument("probs and labels must have equal length")
    if len(probs_arr) == 0:
        raise EmptyDataset("need at least one sample")
    return probs_arr, labels_arr


def proper_scores(probs, labels, eps: float = 1e-15) -> tuple[float, float]:
    """Mean log loss and Brier score of probability rows.

    The log argument is floored at ``eps`` so degenerate zero entries do
    not produce infinities.
    """
    probs_arr, labels_arr = _check_rows(probs, labels)
    n = len(labels_arr)
    true_probs = probs_arr[np.arange(n), labels_arr]
    log_loss = float(-np.log(np.maximum(true_probs, eps)).mean())
    onehot = np.zeros_like(probs_arr)
    onehot[np.arange(n), labels_arr] = 1.0
    brier = float(((probs_arr - onehot) ** 2).sum(axis=1).mean())
    return log_loss, brier


def _bin_assignments(confidence: np.ndarray, scheme: BinningScheme) -> list[np.ndarray]:
    """Sample index groups per bin (possibly empty for equal-width bins)."""
    n = len(confidence)
    if scheme.mode == "equal_width":
        idx = np.minimum((confidence * scheme.bin_count).astype(int), scheme.bin_count - 1)
        return [np.flatnonzero(idx == b) for b in range(scheme.bin_count)]
    if n < scheme.bin_count:
        raise InsufficientData(
            f"{n} samples cannot fill {scheme.bin_count} equal-count bins"
        )
    order = np.argsort(confidence, kind="stable")
    return [group for group in np.array_split(order, scheme.bin_count)]


def reliability_diagram(
    probs,
    labels,
    scheme: BinningScheme = DEFAULT_DIAGRAM_SCHEME,
    class_index: int | None = None,
) -> list[DiagramBin]:
    """Bin data for a reliability diagram.

    With ``class_index=None`` the confidence is ``max_k p_k`` and a hit
    is a correct argmax; with a class index the confidence is ``p_j``
    and a hit is ``label == j``. Bin counts always sum to n, and the
    matching calibration error is exactly reconstructible as
    ``sum_b count_b/n * |frequency_b - confidence_b|``.
    """
    probs_arr, labels_arr = _check_rows(probs, labels)
    if class_index is None:
        confidence = probs_arr.max(axis=1)
        hits = np.argmax(probs_arr, axis=1) == labels_arr
    else:
        if not 0 <= class_index < probs_arr.shape[1]:
            raise InvalidArgument(f"class index {class_index} outside [0, {probs_arr.shape[1]})")
        confidence = probs_arr[:, class_index]
        hits = labels_arr == class_index

    bins = []
    edges = np.linspace(0.0, 1.0, scheme.bin_count + 1)
    for b, members in enumerate(_bin_assignments(confidence, scheme)):
        if scheme.mode == "equal_width":
            lo, hi = float(edges[b]), float(edges[b + 1])
        else:
            lo = float(confidence[members].min())
            hi = float(confidence[members].max())
        if len(members) == 0:
            bins.append(DiagramBin(lo, hi, math.nan, math.nan, 0))
            continue
        bins.append(
            DiagramBin(
                lo=lo,
                hi=hi,
                mean_confidence=float(confidence[members].mean()),
                empirical_frequency=float(hits[members].mean()),
                count=len(members),
            )
        )
    return bins


def ece(
    probs,
    labels,
    scheme: BinningScheme = DEFAULT_ECE_SCHEME,
    class_index: int | None = None,
) -> float:
    """Expected calibration error: bin-weighted |frequency - confidence|."""
    bins = reliability_diagram(probs, labels, scheme, class_index)
    n = sum(b.count for b in bins)
    return float(
        sum(
            b.count / n * abs(b.empirical_frequency - b.mean_confidence)
            for b in bins
            if b.count > 0
        )
    )


def _check_scores(scores, correct) -> tuple[np.ndarray, np.ndarray]:
    scores_arr = np.asarray(scores, dtype=np.float64)
    correct_arr = np.asarray(correct, dtype=bool)
    if scores_arr.ndim != 1 or scores_arr.shape != correct_arr.shape:
        raise InvalidArgument("scores and correct must be equal-length 1-D sequences")
    if len(scores_arr) == 0:
        raise EmptyDataset("need at least one sample")
    return scores_arr, correct_arr


def error_detection_curves(scores, correct) -> CurveBundle:
    """ROC and PR curves plus AUC for low-score error detection.

    A sample is flagged as a suspected error when ``score <= threshold``;
    points are emitted at every distinct observed score, ascending.

    Raises:
        UndefinedAUC: all samples correct, or all in error.
    """
    scores_arr, correct_arr = _check_scores(scores, correct)
    n_err = int((~correct_arr).sum())
    n_corr = int(correct_arr.sum())
    if n_err == 0 or n_corr == 0:
        raise UndefinedAUC("need at least one error and one correct sample")

    order = np.argsort(scores_arr, kind="stable")
    sorted_scores = scores_arr[order]
    sorted_err = (~correct_arr[order]).astype(np.int64)
    cum_err = np.cumsum(sorted_err)
    cum_corr = np.cumsum(1 - sorted_err)
    # last index of each distinct score value
    last_of_value = np.flatnonzero(np.diff(sorted_scores, append=np.inf) != 0)

    roc, pr = [], []
    for i in last_of_value:
        tp = int(cum_err[i])
        fp = int(cum_corr[i])
        threshold = float(sorted_scores[i])
        roc.append(CurvePoint(threshold, fp / n_corr, tp / n_err))
        pr.append(CurvePoint(threshold, tp / n_err, tp / (tp + fp)))

    ranks = rankdata(scores_arr)  # midranks for ties
    rank_sum_correct = float(ranks[correct_arr].sum())
    auc = (rank_sum_correct - n_corr * (n_corr + 1) / 2.0) / (n_err * n_corr)
    return CurveBundle(roc=roc, pr=pr, auc=float(auc))


def pareto_frontier(scores, correct) -> list[ParetoPoint]:
    """Deferral-rate / automated-error-rate trade-off over all thresholds.

    Thresholds sweep the distinct observed scores ascending (defer when
    ``score < threshold``), so the first point has zero deferral and the
    base error rate. A terminal point just above the maximum score
    records full deferral; its undefined error rate is emitted as 0.0
    with ``automated_count == 0`` flagging the empty set.
    """
    scores_arr, correct_arr = _check_scores(scores, correct)
    n = len(scores_arr)
    order = np.argsort(scores_arr, kind="stable")
    sorted_scores = scores_arr[order]
    errors_sorted = (~correct_arr[order]).astype(np.int64)
    suffix_errors = np.cumsum(errors_sorted[::-1])[::-1]

    points = []
    first_of_value = np.flatnonzero(np.diff(sorted_scores, prepend=-np.inf) != 0)
    for i in first_of_value:
        automated = n - i
        points.append(
            ParetoPoint(
                threshold=float(sorted_scores[i]),
                deferral_rate=i / n,
                automated_error_rate=float(suffix_errors[i] / automated),
                automated_count=int(automated),
            )
        )
    points.append(
        ParetoPoint(
            threshold=float(np.nextafter(sorted_scores[-1], np.inf)),
            deferral_rate=1.0,
            automated_error_rate=0.0,
            automated_count=0,
        )
    )
    return points


def classification_report(
    probs,
    labels,
    ece_scheme: BinningScheme = DEFAULT_ECE_SCHEME,
) -> EvaluationReport:
    """Confusion matrix, per-class precision/recall/F1, and calibration metrics.

    ``confusion[i, j]`` counts rows with true class i and argmax j; the
    0/0 convention for precision, recall, and F1 is 0.
    """
    probs_arr, labels_arr = _check_rows(probs, labels)
    n, c = probs_arr.shape
    predicted = np.argmax(probs_arr, axis=1)
    confusion = np.zeros((c, c), dtype=np.int64)
    np.add.at(confusion, (labels_arr, predicted), 1)

    per_class = []
    for j in range(c):
        tp = int(confusion[j, j])
        predicted_j = int(confusion[:, j].sum())
        actual_j = int(confusion[j, :].sum())
        precision = tp / predicted_j if predicted_j else 0.0
        recall = tp / actual_j if actual_j else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class.append({"precision": precision, "recall": recall, "f1": f1})

    log_loss, brier = proper_scores(probs_arr, labels_arr)
    return EvaluationReport(
        log_loss=log_loss,
        brier=brier,
        ece_overall=ece(probs_arr, labels_arr, ece_scheme),
        ece_per_class=[ece(probs_arr, labels_arr, ece_scheme, class_index=j) for j in range(c)],
        confusion=confusion,
        per_class=per_class,
        accuracy=float(np.trace(confusion) / n),
    )
