"""Model persistence: one JSON document per fitted model.

The document is ``{format_version, kind, c, ...kind-specific params,
policy?, metadata?}``. Matrices are stored as flat row-major arrays.
Floats pass through ``json`` unmodified (shortest round-trip repr), so a
save/load cycle reproduces bit-identical application outputs.
"""

from __future__ import annotations

import json

import numpy as np

from .baselines import BaselineModel, baseline_apply
from .calibration import CalibrationModel, apply_calibration
from .exceptions import InvalidArgument
from .reliability import ReliabilityPolicy

FORMAT_VERSION = 1


def policy_to_dict(policy: ReliabilityPolicy) -> dict:
    return {"lambda": policy.sensitivity, "tau_star": policy.tau_star, "alpha": policy.alpha}


def policy_from_dict(doc: dict) -> ReliabilityPolicy:
    return ReliabilityPolicy(
        sensitivity=float(doc["lambda"]),
        tau_star=float(doc["tau_star"]),
        alpha=float(doc["alpha"]),
    )


def model_to_dict(
    model: CalibrationModel | BaselineModel,
    policy: ReliabilityPolicy | None = None,
    metadata: dict | None = None,
) -> dict:
    """Serializable document for a geometric or baseline model."""
    doc: dict = {"format_version": FORMAT_VERSION}
    if isinstance(model, CalibrationModel):
        doc.update(
            kind="geometric",
            c=model.n_classes,
            A=[float(v) for v in model.A.ravel()],
            b=[float(v) for v in model.b],
            lambda1=model.lambda1,
            lambda2=model.lambda2,
            epsilon=model.epsilon,
            trace_constraint=model.trace_constraint,
            fit_info=model.fit_info,
        )
    elif isinstance(model, BaselineModel):
        doc.update(kind=model.kind, c=model.n_classes, epsilon=model.epsilon)
        if model.kind == "temperature":
            doc["temperature"] = model.temperature
        elif model.kind == "platt_ovr":
            doc["a"] = [float(v) for v in model.platt_a]
            doc["b"] = [float(v) for v in model.platt_b]
        else:
            doc["breakpoints"] = [
                {"x": [float(v) for v in x], "y": [float(v) for v in y]}
                for x, y in zip(model.isotonic_x, model.isotonic_y)
            ]
    else:
        raise InvalidArgument(f"cannot serialize {type(model).__name__}")
    if policy is not None:
        doc["policy"] = policy_to_dict(policy)
    if metadata is not None:
        doc["metadata"] = metadata
    return doc


def model_from_dict(doc: dict) -> tuple[CalibrationModel | BaselineModel, ReliabilityPolicy | None]:
    """Rebuild a model (and embedded policy, when present) from a document."""
    if doc.get("format_version") != FORMAT_VERSION:
        raise InvalidArgument(
            f"unsupported format_version {doc.get('format_version')!r}, expected {FORMAT_VERSION}"
        )
    kind = doc.get("kind")
    c = int(doc["c"])
    policy = policy_from_dict(doc["policy"]) if "policy" in doc else None

    if kind == "geometric":
        d = c - 1
        model: CalibrationModel | BaselineModel = CalibrationModel(
            A=np.array(doc["A"], dtype=np.float64).reshape(d, d),
            b=np.array(doc["b"], dtype=np.float64),
            n_classes=c,
            lambda1=float(doc["lambda1"]),
            lambda2=float(doc["lambda2"]),
            epsilon=float(doc["epsilon"]),
            trace_constraint=bool(doc["trace_constraint"]),
            fit_info=doc.get("fit_info", {}),
        )
    elif kind == "temperature":
        model = BaselineModel(kind, c, float(doc["epsilon"]), temperature=float(doc["temperature"]))
    elif kind == "platt_ovr":
        model = BaselineModel(
            kind, c, float(doc["epsilon"]),
            platt_a=np.array(doc["a"], dtype=np.float64),
            platt_b=np.array(doc["b"], dtype=np.float64),
        )
    elif kind == "isotonic":
        model = BaselineModel(
            kind, c, float(doc["epsilon"]),
            isotonic_x=[np.array(bp["x"], dtype=np.float64) for bp in doc["breakpoints"]],
            isotonic_y=[np.array(bp["y"], dtype=np.float64) for bp in doc["breakpoints"]],
        )
    else:
        raise InvalidArgument(f"unknown model kind {kind!r}")
    return model, policy


def save_model(
    path,
    model: CalibrationModel | BaselineModel,
    policy: ReliabilityPolicy | None = None,
    metadata: dict | None = None,
) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model, policy, metadata), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> tuple[CalibrationModel | BaselineModel, ReliabilityPolicy | None]:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def apply_model(model: CalibrationModel | BaselineModel, probs):
    """Uniform application surface across geometric and baseline models."""
    if isinstance(model, CalibrationModel):
        return apply_calibration(model, probs)
    return baseline_apply(model, probs)
