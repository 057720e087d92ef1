"""Blood glucose estimation from windowed feature averaging and piecewise random forests."""

from .averaging import (
    AveragingModel,
    WindowMatrix,
    align_glucose,
    build_window_matrix,
    fit_feature_averaging,
    solve_averaging_weights,
    squared_alignment,
)
from .dataset import (
    GLUCOSE_COLUMN,
    Dataset,
    NormalizationGains,
    SplitConfig,
    load_csv,
    normalize_unit_energy,
    rescale_test,
    save_csv,
    split_train_test,
)
from .forest import Forest, ForestParams, feature_importance, fit_forest, predict_forest, predict_forest_batch
from .metrics import (
    MMOL_TO_MGDL,
    EgaReport,
    MetricsReport,
    compute_metrics,
    ega_report,
    ega_zone,
    mmol_to_mgdl,
)
from .piecewise import (
    PiecewisePipeline,
    SubsetPartition,
    classify_measurement,
    compute_centroids,
    load_pipeline,
    partition_by_glucose,
    predict_pipeline,
    predict_with_classes,
    save_pipeline,
    train_pipeline,
    weighted_distance,
)
from .synth import SynthConfig, generate_synthetic_dataset

__version__ = "0.1.0"

__all__ = [
    "AveragingModel",
    "Dataset",
    "EgaReport",
    "Forest",
    "ForestParams",
    "GLUCOSE_COLUMN",
    "MMOL_TO_MGDL",
    "MetricsReport",
    "NormalizationGains",
    "PiecewisePipeline",
    "SplitConfig",
    "SubsetPartition",
    "SynthConfig",
    "WindowMatrix",
    "align_glucose",
    "build_window_matrix",
    "classify_measurement",
    "compute_centroids",
    "compute_metrics",
    "ega_report",
    "ega_zone",
    "feature_importance",
    "fit_feature_averaging",
    "fit_forest",
    "generate_synthetic_dataset",
    "load_csv",
    "load_pipeline",
    "mmol_to_mgdl",
    "normalize_unit_energy",
    "partition_by_glucose",
    "predict_forest",
    "predict_forest_batch",
    "predict_pipeline",
    "predict_with_classes",
    "rescale_test",
    "save_csv",
    "save_pipeline",
    "solve_averaging_weights",
    "split_train_test",
    "squared_alignment",
    "train_pipeline",
    "weighted_distance",
]
