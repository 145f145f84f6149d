"""geotarget: spatial machine learning for poverty-targeting proxy means tests.

Pipeline pieces: survey ingestion and preprocessing, Delaunay contiguity,
Moran/Getis-Ord autocorrelation statistics, contiguity-constrained
regionalization, PCA with dimensionality selection, a zoo of per-cluster
classifiers, targeting-error evaluation and a synthetic data generator with
known ground truth.
"""

from .clustering import (
    ClusterAssignment,
    ClusteringError,
    Dendrogram,
    assert_connected,
    constrained_divisive_cluster,
    cut_dendrogram,
    standardize_columns,
)
from .data import (
    DataError,
    Dataset,
    PovertyLabels,
    RecodeRule,
    RegionTable,
    VariableSpec,
    binarize_target,
    design_matrix,
    impute_region_mean,
    load_households,
    load_regions,
    log_pce,
    one_hot_encode,
    split_train_test,
    winsorize_recode,
)
from .evaluation import (
    ComparisonGrid,
    ConfusionCounts,
    EvaluationError,
    TargetingReport,
    aggregate_report,
    comparison_grid,
    confusion,
    exclusion_error,
    grid_to_csv,
    inclusion_error,
    secondary_metrics,
)
from .pca import (
    PcaError,
    PcaModel,
    cumulative_variance,
    kaiser_count,
    minka_dimension,
    pca_fit,
    pca_inverse_transform,
    pca_transform,
)
from .stats import (
    LocalStatResult,
    MoranResult,
    StatsError,
    getis_ord,
    moran_i,
    moran_permutation_test,
    moran_subset,
)
from .synthetic import (
    SyntheticError,
    SyntheticSpec,
    gen_households,
    gen_regions,
    gen_sar_field,
    two_regime_map,
)
from .weights import (
    ContiguityMatrix,
    RowStandardizedWeights,
    WeightsError,
    contiguity_from_edge_csv,
    contiguity_from_json,
    contiguity_to_edge_csv,
    contiguity_to_json,
    delaunay_neighbors,
    lag_features_to_households,
    row_standardize,
    spatial_lag,
)

__version__ = "0.1.0"
