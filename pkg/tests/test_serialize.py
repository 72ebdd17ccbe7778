import numpy as np
import pytest

from simplexcal import (
    CalibrationModel,
    FitConfig,
    InvalidArgument,
    ReliabilityPolicy,
    SyntheticSpec,
    apply_model,
    fit_baseline,
    fit_geometric,
    generate_synthetic,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
)
from conftest import random_interior


@pytest.fixture(scope="module")
def fitted_models():
    data = generate_synthetic(
        SyntheticSpec(n=2000, n_classes=3,
                      true_map=CalibrationModel(1.5 * np.eye(2), np.zeros(2), 3),
                      concentration=1.0, seed=4))
    geometric = fit_geometric(data, FitConfig())
    return [
        geometric,
        fit_baseline("temperature", data),
        fit_baseline("platt_ovr", data),
        fit_baseline("isotonic", data),
    ]


class TestRoundTrip:
    def test_apply_is_bit_identical_after_roundtrip(self, fitted_models, tmp_path, rng):
        queries = random_interior(rng, 200, 3)
        for i, model in enumerate(fitted_models):
            path = tmp_path / f"model_{i}.json"
            save_model(path, model, ReliabilityPolicy(1.0, 0.45, 0.05))
            loaded, policy = load_model(path)
            np.testing.assert_array_equal(apply_model(model, queries),
                                          apply_model(loaded, queries))
            assert policy.tau_star == 0.45
            assert policy.sensitivity == 1.0
            assert policy.alpha == 0.05

    def test_double_roundtrip_documents_are_identical(self, fitted_models, tmp_path):
        for i, model in enumerate(fitted_models):
            first = model_to_dict(model)
            loaded, _ = model_from_dict(first)
            assert model_to_dict(loaded) == first

    def test_geometric_document_schema(self, fitted_models):
        doc = model_to_dict(fitted_models[0])
        assert doc["format_version"] == 1
        assert doc["kind"] == "geometric"
        assert doc["c"] == 3
        assert len(doc["A"]) == 4  # row-major flat
        assert len(doc["b"]) == 2
        assert {"lambda1", "lambda2", "epsilon", "trace_constraint", "fit_info"} <= doc.keys()

    def test_policy_block_schema(self, fitted_models):
        doc = model_to_dict(fitted_models[0], ReliabilityPolicy(1.5, 0.3, 0.1))
        assert doc["policy"] == {"lambda": 1.5, "tau_star": 0.3, "alpha": 0.1}

    def test_metadata_passthrough(self, fitted_models, tmp_path):
        path = tmp_path / "model.json"
        save_model(path, fitted_models[0], metadata={"note": "hello"})
        import json

        with open(path) as fh:
            assert json.load(fh)["metadata"] == {"note": "hello"}


class TestErrors:
    def test_unknown_kind_rejected(self):
        with pytest.raises(InvalidArgument):
            model_from_dict({"format_version": 1, "kind": "mystery", "c": 3})

    def test_wrong_format_version_rejected(self):
        with pytest.raises(InvalidArgument):
            model_from_dict({"format_version": 99, "kind": "geometric", "c": 3})
