"""Local feature attributions for small tree ensembles.

Trains desk-scale random forests and gradient-boosted trees, explains their
predictions with conditional feature contributions (decision-path deltas)
and exact Shapley values, and benchmarks how closely the two methods agree.
"""

__version__ = "0.1.0"

from .attribution import (
    AttributionResult,
    cfc_ensemble,
    cfc_tree,
    expvalue_conditional,
    global_importance,
    shap_bruteforce,
    shap_ensemble,
    shap_tree,
    write_attribution_table,
)
from .bench import (
    CorrelationReport,
    FeatureRow,
    StudyConfig,
    StudyLevel,
    SubsetSample,
    f1_score,
    local_correlation_study,
    log_loss,
    pearson_r,
    read_report,
    sample_feature_subset,
    subset_power_study,
    write_report,
)
from .dataset import Dataset, load_dataset
from .errors import (
    DatasetError,
    ModelValidationError,
    OracleSizeError,
    SplitError,
    StudyError,
    TrainingError,
    TreeAttribError,
    UnsupportedModelError,
)
from .model import (
    Ensemble,
    Tree,
    expected_value,
    load_model,
    predict_ensemble,
    predict_tree,
    raw_output,
    save_model,
    sigmoid,
    validate_ensemble,
    validate_tree,
)
from .train import (
    SplitCandidate,
    TrainConfig,
    best_split,
    boosted_defaults,
    fit_cart,
    fit_gbt,
    fit_random_forest,
    forest_defaults,
    gini,
    mdi_importance,
    train_test_split,
)

__all__ = [
    "AttributionResult",
    "CorrelationReport",
    "Dataset",
    "DatasetError",
    "Ensemble",
    "FeatureRow",
    "ModelValidationError",
    "OracleSizeError",
    "SplitCandidate",
    "SplitError",
    "StudyConfig",
    "StudyError",
    "StudyLevel",
    "SubsetSample",
    "TrainConfig",
    "TrainingError",
    "Tree",
    "TreeAttribError",
    "UnsupportedModelError",
    "best_split",
    "boosted_defaults",
    "cfc_ensemble",
    "cfc_tree",
    "expected_value",
    "expvalue_conditional",
    "f1_score",
    "fit_cart",
    "fit_gbt",
    "fit_random_forest",
    "forest_defaults",
    "gini",
    "global_importance",
    "load_dataset",
    "load_model",
    "local_correlation_study",
    "log_loss",
    "mdi_importance",
    "pearson_r",
    "predict_ensemble",
    "predict_tree",
    "raw_output",
    "read_report",
    "sample_feature_subset",
    "save_model",
    "shap_bruteforce",
    "shap_ensemble",
    "shap_tree",
    "sigmoid",
    "subset_power_study",
    "train_test_split",
    "validate_ensemble",
    "validate_tree",
    "write_attribution_table",
    "write_report",
]
