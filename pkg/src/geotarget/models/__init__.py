from .base import (
    DEFAULT_HYPERPARAMETERS,
    FAMILIES,
    FitError,
    InsufficientDataError,
    ModelSpec,
    PcaRule,
    SingleClassError,
    TrainedModel,
    model_from_json,
    model_to_json,
)
from .zoo import (
    ClusterModelSet,
    build_matrix,
    cluster_of_rows,
    fit,
    fit_per_cluster,
    predict,
    predict_union,
    region_feature_means,
)

__all__ = [
    "DEFAULT_HYPERPARAMETERS",
    "FAMILIES",
    "FitError",
    "InsufficientDataError",
    "ModelSpec",
    "PcaRule",
    "SingleClassError",
    "TrainedModel",
    "ClusterModelSet",
    "build_matrix",
    "cluster_of_rows",
    "fit",
    "fit_per_cluster",
    "predict",
    "predict_union",
    "region_feature_means",
    "model_from_json",
    "model_to_json",
]
