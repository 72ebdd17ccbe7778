import numpy as np
import pytest

from simplexcal import (
    BaselineModel,
    CalibrationModel,
    DegenerateLabels,
    DimensionMismatch,
    InvalidArgument,
    IsotonicCalibrator,
    LabeledDataset,
    PlattCalibrator,
    SyntheticSpec,
    TemperatureCalibrator,
    baseline_apply,
    fit_baseline,
    generate_synthetic,
)
from simplexcal.baselines import pav
from conftest import labels_from_probs, random_interior


def calibrated_dataset(rng, n=4000, c=3):
    probs = random_interior(rng, n, c, floor=1e-3)
    return LabeledDataset(probs, labels_from_probs(rng, probs), c)


class TestTemperature:
    def test_calibrated_data_fits_near_one(self, rng):
        model = fit_baseline("temperature", calibrated_dataset(rng))
        assert 0.9 <= model.temperature <= 1.1

    def test_unit_temperature_is_identity(self, rng):
        model = BaselineModel("temperature", 3, temperature=1.0)
        rows = random_interior(rng, 50, 3)
        np.testing.assert_allclose(baseline_apply(model, rows), rows, atol=1e-12)

    def test_huge_temperature_flattens(self, rng):
        model = BaselineModel("temperature", 3, temperature=1e6)
        # temperature applies to log-probabilities, so stay in [0.05, 20] for
        # fits, but application accepts anything positive
        out = baseline_apply(model, random_interior(rng, 20, 3))
        assert np.abs(out - 1 / 3).max() < 1e-3

    def test_overconfident_data_fits_above_one(self):
        rng = np.random.default_rng(5)
        spec = SyntheticSpec(4000, 3, CalibrationModel(0.5 * np.eye(2), np.zeros(2), 3),
                             concentration=1.0, seed=5)
        data = generate_synthetic(spec)  # observations sharper than truth
        model = fit_baseline("temperature", data)
        assert model.temperature > 1.1


class TestPlattOvR:
    def test_recovers_known_distortion(self):
        rng = np.random.default_rng(11)
        p = np.clip(rng.beta(2, 2, 10000), 1e-4, 1 - 1e-4)
        logit = np.log(p / (1 - p))
        q = 1.0 / (1.0 + np.exp(-(2.0 * logit - 1.0)))
        class0 = rng.random(10000) < q
        data = LabeledDataset(np.column_stack([p, 1 - p]), np.where(class0, 0, 1), 2)
        model = fit_baseline("platt_ovr", data)
        assert abs(model.platt_a[0] - 2.0) < 0.1
        assert abs(model.platt_b[0] - (-1.0)) < 0.1

    def test_unit_coefficients_are_identity(self, rng):
        model = BaselineModel("platt_ovr", 3, platt_a=np.ones(3), platt_b=np.zeros(3))
        rows = random_interior(rng, 50, 3)
        np.testing.assert_allclose(baseline_apply(model, rows), rows, atol=1e-12)

    def test_single_class_labels_rejected(self, rng):
        probs = random_interior(rng, 30, 3)
        data = LabeledDataset(probs, np.zeros(30, dtype=int), 3)
        with pytest.raises(DegenerateLabels):
            fit_baseline("platt_ovr", data)


class TestIsotonic:
    def test_outputs_are_monotone_step_functions(self, rng):
        model = fit_baseline("isotonic", calibrated_dataset(rng, n=500))
        for j in range(3):
            x, y = model.isotonic_x[j], model.isotonic_y[j]
            assert (np.diff(y) >= -1e-12).all()
            assert (np.diff(x) > 0).all()
            assert y.min() >= 0.0 and y.max() <= 1.0

    def test_uniform_fallback_when_all_classes_map_to_zero(self):
        model = BaselineModel(
            "isotonic", 3,
            isotonic_x=[np.array([0.9]), np.array([0.9]), np.array([0.9])],
            isotonic_y=[np.array([0.0]), np.array([0.0]), np.array([0.0])],
        )
        out = baseline_apply(model, np.array([0.2, 0.3, 0.5]))
        np.testing.assert_allclose(out, [1 / 3, 1 / 3, 1 / 3], atol=1e-15)

    def test_single_class_labels_rejected(self, rng):
        probs = random_interior(rng, 30, 3)
        with pytest.raises(DegenerateLabels):
            fit_baseline("isotonic", LabeledDataset(probs, np.ones(30, dtype=int), 3))


class TestPav:
    def test_already_monotone_is_untouched(self):
        x = np.array([0.1, 0.2, 0.3, 0.4])
        y = np.array([0.0, 0.25, 0.5, 1.0])
        bx, by = pav(x, y)
        np.testing.assert_array_equal(bx, x)
        np.testing.assert_array_equal(by, y)

    def test_violators_are_pooled(self):
        x = np.array([1.0, 2.0, 3.0])
        y = np.array([1.0, 0.0, 2.0])
        bx, by = pav(x, y)
        np.testing.assert_allclose(by, [0.5, 0.5, 2.0])

    def test_ties_in_x_are_merged(self):
        x = np.array([1.0, 1.0, 2.0])
        y = np.array([0.0, 1.0, 0.75])
        bx, by = pav(x, y)
        np.testing.assert_array_equal(bx, [1.0, 2.0])
        np.testing.assert_allclose(by, [0.5, 0.75])

    def test_matches_isotonic_least_squares_oracle(self, rng):
        # brute force: project onto the monotone cone via quadratic program
        # solved by scipy on a small instance
        x = rng.random(12)
        y = rng.random(12)
        bx, by = pav(x, y)
        order = np.argsort(x, kind="stable")
        fitted = by[np.searchsorted(bx, x[order])]
        from scipy.optimize import minimize

        def objective(v):
            return ((v - y[order]) ** 2).sum()

        constraints = [{"type": "ineq", "fun": (lambda v, i=i: v[i + 1] - v[i])}
                       for i in range(11)]
        res = minimize(objective, np.sort(y[order]), constraints=constraints)
        assert abs(objective(fitted) - res.fun) < 1e-6


class TestUnknownKind:
    def test_rejected(self, rng):
        with pytest.raises(InvalidArgument):
            fit_baseline("histogram", calibrated_dataset(rng, n=50))


class TestEstimators:
    def test_all_wrappers_roundtrip(self, rng):
        data = calibrated_dataset(rng, n=800)
        for cls in (TemperatureCalibrator, PlattCalibrator, IsotonicCalibrator):
            est = cls().fit(data.probs, data.labels)
            out = est.transform(data.probs)
            assert out.shape == data.probs.shape
            np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)
            assert est.predict(data.probs).shape == (len(data),)

    def test_dimension_mismatch_on_apply(self, rng):
        data = calibrated_dataset(rng, n=100)
        est = TemperatureCalibrator().fit(data.probs, data.labels)
        with pytest.raises(DimensionMismatch):
            est.transform(random_interior(rng, 5, 4))
