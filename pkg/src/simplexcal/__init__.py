"""simplexcal: calibrate probability vectors and gate predictions by reliability.

The package treats classifier outputs as points of the probability
simplex. It fits an affine correction in additive log-ratio coordinates
(reducing to Platt scaling for two classes), scores each calibrated
prediction by its Fisher-Rao proximity to the winning vertex, and
defers low-reliability predictions instead of automating them. The
concentration behavior of the score has closed-form constants, exposed
for validation-set sizing.
"""

from .analysis import (
    ConvergenceTable,
    SlopeFit,
    SyntheticSpec,
    TheoryAudit,
    TheoryConstants,
    bootstrap_convergence,
    compare_methods,
    cross_validate,
    fit_rate_slope,
    generate_synthetic,
    theory_audit,
)
from .baselines import (
    BaselineModel,
    IsotonicCalibrator,
    PlattCalibrator,
    TemperatureCalibrator,
    baseline_apply,
    fit_baseline,
)
from .calibration import (
    CalibrationModel,
    FitConfig,
    GeometricCalibrator,
    apply_calibration,
    calibration_loss,
    fit_geometric,
)
from .datasets import LabeledDataset, read_dataset_csv, write_dataset_csv
from .diagnostics import (
    BinningScheme,
    CurveBundle,
    CurvePoint,
    DiagramBin,
    EvaluationReport,
    ParetoPoint,
    classification_report,
    ece,
    error_detection_curves,
    pareto_frontier,
    proper_scores,
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
    NumericalUnderflow,
    SimplexCalError,
    UndefinedAUC,
)
from .geometry import (
    alr,
    alr_inverse,
    argmax_class,
    bhattacharyya_coefficient,
    distance_to_vertex,
    fisher_rao_distance,
    normalize_and_clip,
)
from .reliability import (
    ConcentrationReport,
    ReliabilityGate,
    ReliabilityPolicy,
    concentration_report,
    decide,
    fit_threshold,
    hoeffding_tail_audit,
    reliability_score,
)
from .serialize import apply_model, load_model, model_from_dict, model_to_dict, save_model

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # geometry
    "normalize_and_clip", "fisher_rao_distance", "distance_to_vertex",
    "alr", "alr_inverse", "bhattacharyya_coefficient", "argmax_class",
    # datasets
    "LabeledDataset", "read_dataset_csv", "write_dataset_csv",
    # calibration
    "CalibrationModel", "FitConfig", "GeometricCalibrator",
    "calibration_loss", "fit_geometric", "apply_calibration",
    # baselines
    "BaselineModel", "fit_baseline", "baseline_apply",
    "TemperatureCalibrator", "PlattCalibrator", "IsotonicCalibrator",
    # reliability
    "ReliabilityPolicy", "ConcentrationReport", "ReliabilityGate",
    "reliability_score", "fit_threshold", "decide",
    "concentration_report", "hoeffding_tail_audit",
    # diagnostics
    "BinningScheme", "DiagramBin", "CurvePoint", "ParetoPoint", "CurveBundle",
    "EvaluationReport", "proper_scores", "ece", "reliability_diagram",
    "error_detection_curves", "pareto_frontier", "classification_report",
    # analysis
    "SyntheticSpec", "ConvergenceTable", "SlopeFit", "TheoryConstants", "TheoryAudit",
    "generate_synthetic", "bootstrap_convergence", "fit_rate_slope",
    "cross_validate", "compare_methods", "theory_audit",
    # persistence
    "save_model", "load_model", "model_to_dict", "model_from_dict", "apply_model",
    # errors
    "SimplexCalError", "InvalidProbability", "DimensionMismatch", "IndexOutOfRange",
    "BoundaryPoint", "NumericalUnderflow", "NotPositiveDefinite", "DegenerateLabels",
    "NoFeasibleThreshold", "EmptyDataset", "InsufficientData", "UndefinedAUC",
    "InvalidArgument",
]
