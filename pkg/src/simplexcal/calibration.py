"""Affine calibration of probability vectors in log-ratio coordinates.

The calibration map is ``p_cal = alr_inverse(A @ alr(p) + b)`` with a
``(c-1) x (c-1)`` matrix ``A`` and a ``(c-1)`` vector ``b``, fitted by
minimizing the penalized cross-entropy

    L(A, b) = -sum_i log p_cal[i, y_i]
              + lambda1 * ||A - I||_F^2 + lambda2 * ||b||^2.

For two classes the map collapses to ``sigma(a * logit(p) + b)``, i.e.
classic Platt scaling. The penalties make the objective strongly convex
with modulus ``min(2*lambda1, 2*lambda2)``, so the minimizer is unique
and the quasi-Newton fit is deterministic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .datasets import LabeledDataset
from .exceptions import (
    DimensionMismatch,
    InvalidArgument,
    NotPositiveDefinite,
    NumericalUnderflow,
)
from .geometry import DEFAULT_EPSILON, alr, alr_inverse, normalize_and_clip, validate_epsilon


@dataclass
class FitConfig:
    """Hyperparameters of the quasi-Newton calibration fit.

    ``gradient_tolerance`` applies to the sample-averaged objective
    (the summed loss divided by n), which keeps the stopping rule
    meaningful across dataset sizes.
    """

    lambda1: float = 0.01
    lambda2: float = 0.01
    delta: float = 1e-3
    max_iterations: int = 500
    gradient_tolerance: float = 1e-8
    trace_constraint: bool = False

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InvalidArgument("regularization weights must be >= 0")
        if self.delta <= 0:
            raise InvalidArgument("delta must be > 0")
        if self.max_iterations < 1:
            raise InvalidArgument("max_iterations must be >= 1")
        if self.gradient_tolerance <= 0:
            raise InvalidArgument("gradient_tolerance must be > 0")


@dataclass
class CalibrationModel:
    """Fitted affine map in log-ratio coordinates.

    Attributes:
        A: ``(c-1, c-1)`` matrix, row-major.
        b: ``(c-1,)`` shift vector.
        n_classes: class count ``c``.
        lambda1, lambda2: penalty weights used at fit time.
        epsilon: interior clip applied to inputs at fit and apply time.
        trace_constraint: whether ``tr(A) = c-1`` was projected post-fit.
        fit_info: diagnostics (iterations, final_loss, converged,
            min_eig_sym_A, min_real_eig_A, trace_A, grad_inf_norm, n_rows).
    """

    A: np.ndarray
    b: np.ndarray
    n_classes: int
    lambda1: float = 0.01
    lambda2: float = 0.01
    epsilon: float = DEFAULT_EPSILON
    trace_constraint: bool = False
    fit_info: dict = field(default_factory=dict)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        d = self.n_classes - 1
        if self.n_classes < 2:
            raise InvalidArgument("need at least 2 classes")
        if A.shape != (d, d) or b.shape != (d,):
            raise DimensionMismatch(
                f"A must be ({d},{d}) and b ({d},) for {self.n_classes} classes, "
                f"got {A.shape} and {b.shape}"
            )
        if not (np.isfinite(A).all() and np.isfinite(b).all()):
            raise InvalidArgument("model parameters must be finite")
        validate_epsilon(self.epsilon, self.n_classes)
        self.A = A
        self.b = b

    @classmethod
    def identity(
        cls,
        n_classes: int,
        lambda1: float = 0.01,
        lambda2: float = 0.01,
        epsilon: float = DEFAULT_EPSILON,
    ) -> "CalibrationModel":
        """Identity map: ``A = I``, ``b = 0``."""
        d = n_classes - 1
        return cls(np.eye(d), np.zeros(d), n_classes, lambda1, lambda2, epsilon)

    def min_eig_symmetric(self) -> float:
        """Smallest eigenvalue of the symmetric part ``(A + A^T) / 2``."""
        return float(np.linalg.eigvalsh((self.A + self.A.T) / 2.0).min())

    def min_real_eig(self) -> float:
        """Smallest real part among the (possibly complex) eigenvalues of ``A``."""
        return float(np.linalg.eigvals(self.A).real.min())


def _prepare_design(data: LabeledDataset, epsilon: float) -> tuple[np.ndarray, np.ndarray]:
    """Clip rows into the interior and return (log-ratio matrix, labels)."""
    clipped = normalize_and_clip(data.probs, epsilon)
    return alr(clipped), data.labels


def _loss_and_grad(
    params: np.ndarray,
    Z: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    lambda1: float,
    lambda2: float,
) -> tuple[float, np.ndarray]:
    """Summed penalized cross-entropy and its gradient at flat params."""
    d = n_classes - 1
    A = params[: d * d].reshape(d, d)
    b = params[d * d :]
    n = len(labels)

    logits = np.concatenate([Z @ A.T + b, np.zeros((n, 1))], axis=1)
    shift = logits.max(axis=1, keepdims=True)
    exp_shifted = np.exp(logits - shift)
    denom = exp_shifted.sum(axis=1)
    probs = exp_shifted / denom[:, None]
    true_prob = probs[np.arange(n), labels]
    if (true_prob == 0.0).any():
        raise NumericalUnderflow(
            "calibrated probability underflowed to zero; check the interior clip"
        )
    log_true = (logits[np.arange(n), labels] - shift[:, 0]) - np.log(denom)

    diff = A - np.eye(d)
    loss = -log_true.sum() + lambda1 * (diff * diff).sum() + lambda2 * (b * b).sum()

    # d(loss)/d(logit_k) = p_k - 1[y = k]; the appended reference logit is fixed.
    residual = probs[:, :d].copy()
    non_reference = np.flatnonzero(labels < d)
    residual[non_reference, labels[non_reference]] -= 1.0
    grad_A = residual.T @ Z + 2.0 * lambda1 * diff
    grad_b = residual.sum(axis=0) + 2.0 * lambda2 * b
    return float(loss), np.concatenate([grad_A.ravel(), grad_b])


def calibration_loss(model: CalibrationModel, data: LabeledDataset) -> tuple[float, np.ndarray]:
    """Penalized cross-entropy of ``model`` on ``data`` with its gradient.

    Returns:
        ``(loss, gradient)`` where the gradient is the flat vector of
        length ``(c-1)^2 + (c-1)`` over row-major ``A`` then ``b``.

    Raises:
        DimensionMismatch: class counts differ.
        NumericalUnderflow: some calibrated probability is exactly zero.
    """
    if model.n_classes != data.n_classes:
        raise DimensionMismatch(
            f"model has {model.n_classes} classes, data has {data.n_classes}"
        )
    Z, labels = _prepare_design(data, model.epsilon)
    params = np.concatenate([model.A.ravel(), model.b])
    return _loss_and_grad(params, Z, labels, model.n_classes, model.lambda1, model.lambda2)


def fit_geometric(
    data: LabeledDataset,
    cfg: FitConfig | None = None,
    init: CalibrationModel | None = None,
    epsilon: float = DEFAULT_EPSILON,
    loss_callback=None,
) -> CalibrationModel:
    """Fit the affine calibration map by limited-memory quasi-Newton descent.

    Deterministic given identical inputs; the default start is the
    identity map. The optimizer minimizes the sample-averaged objective
    (same minimizer as the summed loss) and stops when the projected
    gradient falls below ``cfg.gradient_tolerance`` or the iteration cap
    is reached, in which case ``fit_info["converged"]`` is False.

    Args:
        data: training rows; needs at least ``(c-1)^2 + (c-1)`` of them
            (a warning is emitted below 10x that count).
        cfg: fit hyperparameters (defaults: see :class:`FitConfig`).
        init: optional warm start.
        epsilon: interior clip recorded on the returned model.
        loss_callback: if given, called with the summed loss at every
            accepted iterate.

    Raises:
        NotPositiveDefinite: if the symmetric part of the fitted ``A``
            has an eigenvalue at or below ``cfg.delta``.
    """
    cfg = cfg or FitConfig()
    d = data.n_classes - 1
    n_params = d * d + d
    if len(data) < n_params:
        raise InvalidArgument(
            f"{len(data)} rows cannot identify {n_params} parameters"
        )
    if len(data) < 10 * n_params:
        warnings.warn(
            f"only {len(data)} rows for {n_params} parameters; expect a noisy fit",
            stacklevel=2,
        )

    Z, labels = _prepare_design(data, epsilon)
    n = len(data)
    if init is not None:
        if init.n_classes != data.n_classes:
            raise DimensionMismatch("init model class count does not match data")
        x0 = np.concatenate([init.A.ravel(), init.b])
    else:
        x0 = np.concatenate([np.eye(d).ravel(), np.zeros(d)])

    def objective(params):
        loss, grad = _loss_and_grad(params, Z, labels, data.n_classes, cfg.lambda1, cfg.lambda2)
        return loss / n, grad / n

    callback = None
    if loss_callback is not None:
        callback = lambda xk: loss_callback(
            _loss_and_grad(xk, Z, labels, data.n_classes, cfg.lambda1, cfg.lambda2)[0]
        )

    result = minimize(
        objective,
        x0,
        jac=True,
        method="L-BFGS-B",
        callback=callback,
        options={
            "maxiter": cfg.max_iterations,
            "maxfun": 100 * cfg.max_iterations,
            "gtol": cfg.gradient_tolerance,
            "ftol": 1e-16,
            "maxcor": 20,
        },
    )

    A = result.x[: d * d].reshape(d, d).copy()
    b = result.x[d * d :].copy()
    grad_inf = float(np.abs(result.jac).max())
    if cfg.trace_constraint:
        A += (d - np.trace(A)) / d * np.eye(d)

    model = CalibrationModel(
        A=A,
        b=b,
        n_classes=data.n_classes,
        lambda1=cfg.lambda1,
        lambda2=cfg.lambda2,
        epsilon=epsilon,
        trace_constraint=cfg.trace_constraint,
    )
    final_loss, _ = calibration_loss(model, data)
    model.fit_info = {
        "iterations": int(result.nit),
        "final_loss": final_loss,
        "converged": bool(grad_inf <= cfg.gradient_tolerance),
        "grad_inf_norm": grad_inf,
        "min_eig_sym_A": model.min_eig_symmetric(),
        "min_real_eig_A": model.min_real_eig(),
        "trace_A": float(np.trace(A)),
        "n_rows": n,
    }
    if model.fit_info["min_eig_sym_A"] <= cfg.delta:
        raise NotPositiveDefinite(
            f"min eigenvalue of (A + A^T)/2 is {model.fit_info['min_eig_sym_A']:.6g} "
            f"<= delta={cfg.delta}"
        )
    return model


def apply_calibration(model: CalibrationModel, p) -> np.ndarray:
    """Calibrate ``p`` (vector or rows): clip, map in log-ratio space, invert.

    Raises:
        DimensionMismatch: if the class count differs from the model's.
    """
    p_arr = np.asarray(p, dtype=np.float64)
    if p_arr.shape[-1] != model.n_classes:
        raise DimensionMismatch(
            f"input has {p_arr.shape[-1]} classes, model expects {model.n_classes}"
        )
    z = alr(normalize_and_clip(p_arr, model.epsilon))
    return alr_inverse(z @ model.A.T + model.b)


class GeometricCalibrator(BaseEstimator, TransformerMixin):
    """Scikit-learn estimator wrapping the affine log-ratio calibration.

    ``fit(X, y)`` expects ``X`` as an ``(n, c)`` matrix of probability
    rows and integer labels ``y`` in ``[0, c)``; ``transform`` returns
    calibrated rows and ``predict`` their argmax class.

    Parameters mirror :class:`FitConfig` plus the interior clip.
    """

    def __init__(
        self,
        lambda1: float = 0.01,
        lambda2: float = 0.01,
        epsilon: float = DEFAULT_EPSILON,
        delta: float = 1e-3,
        max_iterations: int = 500,
        gradient_tolerance: float = 1e-8,
        trace_constraint: bool = False,
    ):
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.epsilon = epsilon
        self.delta = delta
        self.max_iterations = max_iterations
        self.gradient_tolerance = gradient_tolerance
        self.trace_constraint = trace_constraint

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        data = LabeledDataset(X, y, X.shape[1])
        cfg = FitConfig(
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            delta=self.delta,
            max_iterations=self.max_iterations,
            gradient_tolerance=self.gradient_tolerance,
            trace_constraint=self.trace_constraint,
        )
        self.model_ = fit_geometric(data, cfg, epsilon=self.epsilon)
        self.A_ = self.model_.A
        self.b_ = self.model_.b
        self.fit_info_ = self.model_.fit_info
        self.n_classes_ = self.model_.n_classes
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return apply_calibration(self.model_, X)

    def predict(self, X):
        return np.argmax(self.transform(X), axis=1)
