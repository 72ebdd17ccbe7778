import math

import numpy as np
import pytest
from sklearn.base import clone

from simplexcal import (
    CalibrationModel,
    DimensionMismatch,
    FitConfig,
    GeometricCalibrator,
    InvalidArgument,
    LabeledDataset,
    NotPositiveDefinite,
    NumericalUnderflow,
    SyntheticSpec,
    apply_calibration,
    calibration_loss,
    fit_geometric,
    generate_synthetic,
    normalize_and_clip,
)
from conftest import labels_from_probs, random_interior

REFERENCE_MODEL = CalibrationModel(
    A=np.array([[0.988, -0.002], [-0.044, 1.238]]),
    b=np.array([-0.017, 0.636]),
    n_classes=3,
)


def make_data(rng, n=10, c=3, random_labels=False):
    probs = random_interior(rng, n, c)
    if random_labels:
        labels = rng.integers(0, c, size=n)
    else:
        labels = labels_from_probs(rng, probs)
    return LabeledDataset(probs, labels, c)


def random_model(rng, c, scale=0.3):
    d = c - 1
    A = np.eye(d) + scale * rng.standard_normal((d, d))
    b = scale * rng.standard_normal(d)
    return CalibrationModel(A, b, c)


class TestCalibrationLoss:
    def test_identity_model_gives_plain_cross_entropy(self, rng):
        data = make_data(rng, n=40)
        model = CalibrationModel.identity(3, lambda1=0.7, lambda2=0.3)
        loss, _ = calibration_loss(model, data)
        clipped = normalize_and_clip(data.probs, model.epsilon)
        expected = -np.log(clipped[np.arange(len(data)), data.labels]).sum()
        assert abs(loss - expected) < 1e-10

    def test_penalty_contribution_is_exact(self, rng):
        data = make_data(rng, n=15)
        d = 2
        perturbation = rng.standard_normal((d, d))
        perturbation /= np.linalg.norm(perturbation)  # unit Frobenius norm
        A = np.eye(d) + perturbation
        with_penalty = calibration_loss(
            CalibrationModel(A, np.zeros(d), 3, lambda1=0.37, lambda2=0.0), data
        )[0]
        without_penalty = calibration_loss(
            CalibrationModel(A, np.zeros(d), 3, lambda1=0.0, lambda2=0.0), data
        )[0]
        assert abs((with_penalty - without_penalty) - 0.37) < 1e-12

    @pytest.mark.parametrize("seed", range(20))
    def test_gradient_matches_central_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        c = int(rng.integers(2, 5))
        data = make_data(rng, n=10, c=c, random_labels=True)
        model = random_model(rng, c)
        _, grad = calibration_loss(model, data)

        d = c - 1
        params = np.concatenate([model.A.ravel(), model.b])
        step = 1e-5
        fd = np.empty_like(params)
        for k in range(len(params)):
            plus, minus = params.copy(), params.copy()
            plus[k] += step
            minus[k] -= step
            loss_plus = calibration_loss(
                CalibrationModel(plus[: d * d].reshape(d, d), plus[d * d:], c,
                                 model.lambda1, model.lambda2), data)[0]
            loss_minus = calibration_loss(
                CalibrationModel(minus[: d * d].reshape(d, d), minus[d * d:], c,
                                 model.lambda1, model.lambda2), data)[0]
            fd[k] = (loss_plus - loss_minus) / (2 * step)
        rel = np.abs(grad - fd) / np.maximum(np.abs(fd), 1.0)
        assert rel.max() < 1e-5

    def test_row_order_invariance(self, rng):
        data = make_data(rng, n=30)
        model = random_model(rng, 3)
        loss, grad = calibration_loss(model, data)
        perm = rng.permutation(len(data))
        loss_p, grad_p = calibration_loss(model, data.subset(perm), )
        assert abs(loss - loss_p) < 1e-9
        np.testing.assert_allclose(grad, grad_p, atol=1e-9)

    def test_class_count_mismatch(self, rng):
        with pytest.raises(DimensionMismatch):
            calibration_loss(CalibrationModel.identity(4), make_data(rng))

    def test_underflow_detected(self):
        # |A| large enough to push a clipped logit past the exp underflow point
        data = LabeledDataset(np.array([[1e-9, 1.0 - 1e-9]]), np.array([0]), 2)
        model = CalibrationModel(np.array([[60.0]]), np.zeros(1), 2)
        with pytest.raises(NumericalUnderflow):
            calibration_loss(model, data)


class TestFitGeometric:
    def test_well_specified_data_recovers_identity(self):
        spec = SyntheticSpec(n=5000, n_classes=3, true_map=CalibrationModel.identity(3),
                             concentration=1.0, seed=3)
        model = fit_geometric(generate_synthetic(spec), FitConfig(lambda1=0.01, lambda2=0.01))
        assert np.linalg.norm(model.A - np.eye(2)) < 0.1
        assert np.linalg.norm(model.b) < 0.1

    def test_generate_and_recover_known_map(self):
        true_map = CalibrationModel(np.array([[1.2, 0.1], [-0.05, 0.9]]),
                                    np.array([0.3, -0.2]), 3)
        spec = SyntheticSpec(n=20000, n_classes=3, true_map=true_map,
                             concentration=0.8, seed=0)
        model = fit_geometric(generate_synthetic(spec),
                              FitConfig(lambda1=1e-4, lambda2=1e-4))
        err = math.sqrt(((model.A - true_map.A) ** 2).sum()
                        + ((model.b - true_map.b) ** 2).sum())
        assert err < 0.1

    def test_loss_nonincreasing_over_accepted_iterates(self, rng):
        data = make_data(rng, n=400)
        history = []
        fit_geometric(data, FitConfig(), loss_callback=history.append)
        assert len(history) >= 2
        diffs = np.diff(history)
        assert (diffs <= 1e-8 * (1.0 + np.abs(history[:-1]))).all()

    def test_convergence_flag_and_fit_info(self, rng):
        data = make_data(rng, n=500)
        model = fit_geometric(data, FitConfig())
        info = model.fit_info
        assert info["converged"] is True
        assert info["grad_inf_norm"] <= 1e-8
        assert info["min_eig_sym_A"] > 0
        assert info["n_rows"] == 500
        assert abs(info["trace_A"] - np.trace(model.A)) < 1e-15

    def test_deterministic(self, rng):
        data = make_data(rng, n=300)
        a = fit_geometric(data, FitConfig())
        b = fit_geometric(data, FitConfig())
        np.testing.assert_array_equal(a.A, b.A)
        np.testing.assert_array_equal(a.b, b.b)

    def test_iteration_cap_reports_nonconvergence(self, rng):
        data = make_data(rng, n=300)
        model = fit_geometric(data, FitConfig(max_iterations=2))
        assert model.fit_info["converged"] is False
        assert model.fit_info["iterations"] <= 2
        assert "min_real_eig_A" in model.fit_info

    def test_too_few_rows_rejected_and_small_data_warns(self, rng):
        with pytest.raises(InvalidArgument):
            fit_geometric(make_data(rng, n=5, c=3))  # needs 6 rows
        with pytest.warns(UserWarning):
            fit_geometric(make_data(rng, n=20, c=3))

    def test_anticalibrated_data_fails_positive_definiteness(self, rng):
        # labels follow the flipped probabilities, so the optimal map negates
        p = rng.uniform(0.05, 0.95, size=4000)
        probs = np.column_stack([p, 1 - p])
        labels = (rng.random(4000) < p).astype(int)  # label 1 where class 0 is likely
        data = LabeledDataset(probs, labels, 2)
        with pytest.raises(NotPositiveDefinite):
            fit_geometric(data, FitConfig())

    def test_trace_projection(self, rng):
        data = make_data(rng, n=500)
        model = fit_geometric(data, FitConfig(trace_constraint=True))
        assert abs(np.trace(model.A) - 2.0) < 1e-12

    def test_warm_start_matches_cold_start(self, rng):
        data = make_data(rng, n=500)
        cold = fit_geometric(data, FitConfig())
        warm = fit_geometric(data, FitConfig(), init=cold)
        assert np.abs(warm.A - cold.A).max() < 1e-6
        assert np.abs(warm.b - cold.b).max() < 1e-6


class TestApplyCalibration:
    def test_identity_returns_clipped_input(self, rng):
        model = CalibrationModel.identity(3)
        rows = random_interior(rng, 100, 3)
        out = apply_calibration(model, rows)
        np.testing.assert_allclose(out, normalize_and_clip(rows, model.epsilon), atol=1e-12)

    def test_three_class_hand_example(self):
        out = apply_calibration(REFERENCE_MODEL, np.array([1 / 3, 1 / 3, 1 / 3]))
        # uniform input maps through logits (-0.017, 0.636, 0)
        z = np.array([-0.017, 0.636, 0.0])
        expected = np.exp(z) / np.exp(z).sum()
        np.testing.assert_allclose(out, expected, atol=1e-12)
        np.testing.assert_allclose(out, [0.2539, 0.4878, 0.2583], atol=5e-5)

    def test_vertex_input_stays_finite_and_interior(self):
        out = apply_calibration(REFERENCE_MODEL, np.array([1.0, 0.0, 0.0]))
        assert np.isfinite(out).all() and out.min() > 0.0
        assert abs(out.sum() - 1.0) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            apply_calibration(REFERENCE_MODEL, np.array([0.5, 0.5]))


class TestBinaryReduction:
    def test_pipeline_equals_logistic_form_pointwise(self):
        a, shift = 1.7, -0.4
        model = CalibrationModel(np.array([[a]]), np.array([shift]), 2)
        grid = np.linspace(0.001, 0.999, 1000)
        rows = np.column_stack([grid, 1 - grid])
        out = apply_calibration(model, rows)[:, 0]
        expected = 1.0 / (1.0 + np.exp(-(a * np.log(grid / (1 - grid)) + shift)))
        assert np.abs(out - expected).max() < 1e-12

    def test_fit_matches_direct_platt_fit(self):
        # independent oracle: full Newton on the two-parameter logistic problem
        def platt_newton(x, t, lam1, lam2):
            a, b = 1.0, 0.0
            for _ in range(80):
                u = a * x + b
                s = 1.0 / (1.0 + np.exp(-u))
                ga = (s - t) @ x + 2 * lam1 * (a - 1)
                gb = (s - t).sum() + 2 * lam2 * b
                w = s * (1 - s)
                haa = (w * x * x).sum() + 2 * lam1
                hab = (w * x).sum()
                hbb = w.sum() + 2 * lam2
                det = haa * hbb - hab * hab
                da = (hbb * ga - hab * gb) / det
                db = (haa * gb - hab * ga) / det
                a, b = a - da, b - db
                if max(abs(da), abs(db)) < 1e-14:
                    break
            return a, b

        for seed in range(3):
            rng = np.random.default_rng(seed)
            p = np.clip(rng.beta(2, 2, 5000), 1e-4, 1 - 1e-4)
            q = 1.0 / (1.0 + np.exp(-(1.6 * np.log(p / (1 - p)) + 0.5)))
            class0 = rng.random(5000) < q
            data = LabeledDataset(np.column_stack([p, 1 - p]),
                                  np.where(class0, 0, 1), 2)
            model = fit_geometric(data, FitConfig(lambda1=0.01, lambda2=0.01))
            a, b = platt_newton(np.log(p / (1 - p)), class0.astype(float), 0.01, 0.01)
            assert abs(model.A[0, 0] - a) < 1e-4
            assert abs(model.b[0] - b) < 1e-4


class TestPenaltyCurvature:
    def test_penalty_hessian_floor(self):
        # the penalty part of the objective is quadratic; build its Hessian
        # explicitly and check the smallest eigenvalue equals min(2*l1, 2*l2)
        lam1, lam2 = 0.03, 0.11
        d = 2
        n_params = d * d + d
        hessian = np.zeros((n_params, n_params))
        hessian[: d * d, : d * d] = 2 * lam1 * np.eye(d * d)
        hessian[d * d:, d * d:] = 2 * lam2 * np.eye(d)
        assert abs(np.linalg.eigvalsh(hessian).min() - min(2 * lam1, 2 * lam2)) < 1e-15

    def test_fitted_loss_beats_identity_on_held_out_data(self):
        true_map = CalibrationModel(2.0 * np.eye(2), np.zeros(2), 3)
        train = generate_synthetic(SyntheticSpec(5000, 3, true_map, 1.0, seed=21))
        held = generate_synthetic(SyntheticSpec(5000, 3, true_map, 1.0, seed=22))
        model = fit_geometric(train, FitConfig())

        def held_out_nll(m):
            cal = apply_calibration(m, held.probs)
            return -np.log(cal[np.arange(len(held)), held.labels]).mean()

        assert held_out_nll(model) <= held_out_nll(CalibrationModel.identity(3))


class TestGeometricCalibratorEstimator:
    def test_fit_transform_predict(self, rng):
        spec = SyntheticSpec(n=2000, n_classes=3,
                             true_map=CalibrationModel(2.0 * np.eye(2), np.zeros(2), 3),
                             concentration=1.0, seed=8)
        data = generate_synthetic(spec)
        est = GeometricCalibrator()
        out = est.fit(data.probs, data.labels).transform(data.probs)
        assert out.shape == data.probs.shape
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)
        assert (est.predict(data.probs) == np.argmax(out, axis=1)).all()
        assert est.fit_info_["converged"]

    def test_sklearn_params_roundtrip(self):
        est = GeometricCalibrator(lambda1=0.5, trace_constraint=True)
        cloned = clone(est)
        assert cloned.get_params()["lambda1"] == 0.5
        assert cloned.get_params()["trace_constraint"] is True

    def test_composes_in_sklearn_pipeline(self):
        from sklearn.pipeline import Pipeline

        from simplexcal import ReliabilityGate

        spec = SyntheticSpec(n=2000, n_classes=3,
                             true_map=CalibrationModel(2.0 * np.eye(2), np.zeros(2), 3),
                             concentration=1.0, seed=12)
        data = generate_synthetic(spec)
        pipeline = Pipeline([
            ("calibrate", GeometricCalibrator()),
            ("gate", ReliabilityGate(alpha=0.1)),
        ]).fit(data.probs, data.labels)
        decisions = pipeline.predict(data.probs)
        automated = decisions >= 0
        assert automated.any() and (~automated).any()
        calibrated = pipeline.named_steps["calibrate"].transform(data.probs)
        correct = np.argmax(calibrated, axis=1) == data.labels
        assert (~correct[automated]).sum() <= 0.1 * automated.sum()
