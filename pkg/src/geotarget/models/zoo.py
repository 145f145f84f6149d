"""Fit/predict dispatch over the eight families, globally or per cluster.

The benchmark path fits one global model; the spatial path fits one model
per contiguity-constrained cluster (falling back to the global model where
a cluster cannot support a fit) and predictions over the test set are the
union of the per-cluster predictions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from ..clustering import ClusterAssignment
from ..data import Dataset, PovertyLabels, log_pce
from ..pca import PcaError, PcaModel, cumulative_variance, kaiser_count, minka_dimension, pca_fit, pca_transform
from ..weights import RowStandardizedWeights
from .base import (
    FitError,
    InsufficientDataError,
    MIN_FIT_ROWS,
    ModelSpec,
    REGRESSION_FAMILIES,
    STANDARDIZED_FAMILIES,
    SingleClassError,
    TrainedModel,
)
from .linear import fit_elastic_net, fit_linear_regression, predict_linear
from .logistic import fit_logistic, fit_stochastic_gradient, predict_logistic
from .naive_bayes import fit_naive_bayes, predict_naive_bayes
from .neural import fit_neural_network, predict_neural_network
from .trees import (
    fit_gradient_boosting,
    fit_random_forest,
    predict_gradient_boosting,
    predict_random_forest,
)


@dataclass(frozen=True)
class ClusterModelSet:
    """One trained model per cluster plus the always-trained global fallback."""

    spec: ModelSpec
    assignment: ClusterAssignment
    models: dict[int, TrainedModel]
    fallback: TrainedModel
    feature_names: tuple[str, ...]
    lag_table: pd.DataFrame | None = None
    fallback_clusters: tuple[int, ...] = ()


# ---------------------------------------------------------------------------
# single-model fit / predict


def _select_components(rule, model: PcaModel, X_kept: np.ndarray) -> int:
    if rule.rule == "fixed":
        m = rule.m
    elif rule.rule == "kaiser":
        m = max(kaiser_count(model), 1)
    elif rule.rule == "minka":
        Z = (X_kept - model.means) / model.scales
        m = minka_dimension(Z)
    else:  # cumulative
        m = next(
            mm
            for mm in range(1, model.n_components + 1)
            if cumulative_variance(model, mm) >= rule.target
        )
    return int(min(max(m, 1), model.n_components))


def _fit_pca_frontend(spec: ModelSpec, X: np.ndarray):
    try:
        model = pca_fit(X, standardize=True)
        m = _select_components(spec.pca, model, X[:, model.kept_columns])
    except PcaError as exc:
        raise FitError(f"PCA front-end failed: {exc}") from exc
    doc = {
        "means": model.means,
        "scales": model.scales,
        "components": model.components[:, :m],
        "kept_columns": model.kept_columns,
        "n_input_columns": model.n_input_columns,
        "m": m,
    }
    return doc, pca_transform(model, X, m)


def _apply_pca(doc: dict, X: np.ndarray) -> np.ndarray:
    kept = np.asarray(doc["kept_columns"], dtype=int)
    Z = (X[:, kept] - doc["means"]) / doc["scales"]
    return Z @ doc["components"]


def fit(
    spec: ModelSpec,
    X: np.ndarray,
    y_continuous: np.ndarray,
    labels: PovertyLabels,
    feature_names=None,
    n_jobs: int = 1,
) -> TrainedModel:
    """Train one model of the requested family.

    ``y_continuous`` is log expenditure (used by the regression families);
    classifier families train on the binary poverty labels.  Regression
    models classify poor iff the predicted log expenditure is at or below
    the log poverty line; probability models cut at 0.5.
    """
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim != 2:
        raise FitError("X must be 2-dimensional")
    y = np.asarray(labels.labels, dtype=float)
    y_continuous = np.asarray(y_continuous, dtype=float)
    n = len(X)
    if not (n == len(y) == len(y_continuous)):
        raise FitError("X, y and labels must have equal length")
    if not np.isfinite(X).all():
        raise FitError("non-finite feature value")
    if n < MIN_FIT_ROWS:
        raise InsufficientDataError(f"need at least {MIN_FIT_ROWS} rows, got {n}")
    if not spec.is_regression and len(np.unique(y)) < 2:
        raise SingleClassError("labels contain a single class")
    names = tuple(feature_names) if feature_names is not None else tuple(
        f"x{j}" for j in range(X.shape[1])
    )
    if len(names) != X.shape[1]:
        raise FitError("feature_names length does not match X")

    pca_doc = None
    if spec.pca is not None:
        pca_doc, X = _fit_pca_frontend(spec, X)

    scaler = None
    if spec.family in STANDARDIZED_FAMILIES:
        mean = X.mean(axis=0)
        sd = X.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        scaler = {"mean": mean, "sd": sd}
        X = (X - mean) / sd

    hp = spec.hyperparameters
    diagnostics: dict = {}
    if spec.family == "linear_regression":
        params = fit_linear_regression(X, y_continuous)
    elif spec.family == "elastic_net":
        params = fit_elastic_net(
            X, y_continuous, hp["penalty"], hp["l1_ratio"], hp["tol"], hp["max_iter"]
        )
        diagnostics["n_sweeps"] = params.pop("n_sweeps")
    elif spec.family == "logistic":
        params = fit_logistic(X, y, hp["l2_penalty"], hp["max_iter"], hp["tol"])
        diagnostics["loss_history"] = params.pop("loss_history")
    elif spec.family == "naive_bayes":
        params = fit_naive_bayes(X, y, hp["variance_floor"])
    elif spec.family == "gradient_boosting":
        params = fit_gradient_boosting(
            X, y, hp["n_trees"], hp["max_depth"], hp["learning_rate"], hp["min_samples_leaf"]
        )
        diagnostics["loss_history"] = params.pop("loss_history")
    elif spec.family == "random_forest":
        params = fit_random_forest(
            X, y, hp["n_trees"], hp["min_samples_leaf"], hp["max_depth"], spec.seed, n_jobs
        )
    elif spec.family == "stochastic_gradient":
        params = fit_stochastic_gradient(X, y, hp["learning_rate"], hp["epochs"], spec.seed)
        diagnostics["loss_history"] = params.pop("loss_history")
    else:  # neural_network
        params = fit_neural_network(
            X, y, hp["hidden_units"], hp["batch_size"], hp["epochs"], hp["learning_rate"], spec.seed
        )
        diagnostics["loss_history"] = params.pop("loss_history")

    is_reg = spec.family in REGRESSION_FAMILIES
    return TrainedModel(
        family=spec.family,
        output_kind="expenditure_score" if is_reg else "poor_probability",
        params=params,
        feature_names=names,
        hyperparameters=dict(hp),
        seed=spec.seed,
        threshold_value=float(labels.threshold_value) if is_reg else None,
        scaler=scaler,
        pca=pca_doc,
        diagnostics=diagnostics,
    )


_SCORERS = {
    "linear_regression": predict_linear,
    "elastic_net": predict_linear,
    "logistic": predict_logistic,
    "naive_bayes": predict_naive_bayes,
    "gradient_boosting": predict_gradient_boosting,
    "random_forest": predict_random_forest,
    "stochastic_gradient": predict_logistic,
    "neural_network": predict_neural_network,
}


def predict(model: TrainedModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(binary labels, scores) for a feature matrix in training layout."""
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(model.feature_names):
        got = X.shape[1] if X.ndim == 2 else "?"
        raise ValueError(f"feature mismatch: model expects {len(model.feature_names)} columns, got {got}")
    if len(X) == 0:
        return np.empty(0, dtype=np.int8), np.empty(0)
    if model.pca is not None:
        X = _apply_pca(model.pca, X)
    if model.scaler is not None:
        X = (X - model.scaler["mean"]) / model.scaler["sd"]
    scores = _SCORERS[model.family](model.params, X)
    if model.output_kind == "expenditure_score":
        labels = (scores <= math.log(model.threshold_value)).astype(np.int8)
    else:
        labels = (scores >= 0.5).astype(np.int8)
    return labels, scores


# ---------------------------------------------------------------------------
# per-cluster training


def region_feature_means(
    ds: Dataset, columns, region_ids
) -> pd.DataFrame:
    """Region means of household features, indexed in ``region_ids`` order.

    Regions absent from the dataset get the overall column means so that
    the lag operator stays defined everywhere.
    """
    frame = ds.frame[["region_id", *columns]]
    means = frame.groupby("region_id")[list(columns)].mean()
    means = means.reindex(list(region_ids))
    means = means.fillna(means.mean())
    return means


def build_matrix(
    ds: Dataset, columns, lag_table: pd.DataFrame | None = None
) -> tuple[np.ndarray, tuple[str, ...]]:
    """Household design matrix, optionally with per-region lag columns.

    Always row-contiguous so BLAS sums in the same order whether a model
    later sees the full matrix or a row-masked copy of it.
    """
    X = np.ascontiguousarray(ds.frame[list(columns)].to_numpy(dtype=float))
    names = tuple(columns)
    if lag_table is not None:
        rids = ds.frame["region_id"].to_numpy()
        missing = set(rids) - set(lag_table.index)
        if missing:
            raise ValueError(f"region {sorted(missing)[0]!r} has no lagged features")
        lag = lag_table.reindex(rids).to_numpy(dtype=float)
        X = np.column_stack([X, lag])
        names = names + tuple(lag_table.columns)
    return X, names


def _slice_labels(labels: PovertyLabels, mask: np.ndarray) -> PovertyLabels:
    return PovertyLabels(
        household_ids=labels.household_ids[mask],
        labels=labels.labels[mask],
        threshold_value=labels.threshold_value,
        threshold_quantile=labels.threshold_quantile,
    )


def fit_per_cluster(
    spec: ModelSpec,
    train: Dataset,
    labels: PovertyLabels,
    assignment: ClusterAssignment,
    Wrs: RowStandardizedWeights | None = None,
    feature_columns=None,
    n_jobs: int = 1,
) -> ClusterModelSet:
    """Fit one model per spatial cluster plus the global fallback.

    Clusters whose rows cannot support a fit (single class, too few rows)
    are mapped to the fallback and recorded in ``fallback_clusters``.
    """
    columns = list(feature_columns) if feature_columns is not None else train.feature_names
    if len(labels.labels) != len(train):
        raise FitError("labels are not aligned with the training data")

    lag_table = None
    if spec.use_lagged_features:
        if Wrs is None:
            raise FitError("lagged features requested but no spatial weights given")
        means = region_feature_means(train, columns, Wrs.region_ids)
        lagged = Wrs.matrix @ means.to_numpy(dtype=float)
        lag_table = pd.DataFrame(
            lagged, index=list(Wrs.region_ids), columns=[f"lag_{c}" for c in columns]
        )

    X_all, names = build_matrix(train, columns, lag_table)
    y_all = log_pce(train)
    cluster_of = assignment.labels
    region_col = train.frame["region_id"].to_numpy()
    unassigned = set(region_col) - set(cluster_of)
    if unassigned:
        raise FitError(f"train region {sorted(unassigned)[0]!r} has no cluster label")
    row_cluster = np.array([cluster_of[r] for r in region_col])

    fallback = fit(spec, X_all, y_all, labels, names, n_jobs=n_jobs)
    models: dict[int, TrainedModel] = {}
    fell_back: list[int] = []
    for lbl in range(1, assignment.k + 1):
        mask = row_cluster == lbl
        if mask.all():
            models[lbl] = fallback  # k = 1: identical data, reuse the fit
            continue
        if not mask.any():
            fell_back.append(lbl)
            models[lbl] = fallback
            continue
        try:
            models[lbl] = fit(
                spec, X_all[mask], y_all[mask], _slice_labels(labels, mask), names, n_jobs=n_jobs
            )
        except FitError:
            fell_back.append(lbl)
            models[lbl] = fallback
    return ClusterModelSet(
        spec=spec,
        assignment=assignment,
        models=models,
        fallback=fallback,
        feature_names=names,
        lag_table=lag_table,
        fallback_clusters=tuple(fell_back),
    )


def cluster_of_rows(model_set: ClusterModelSet, ds: Dataset) -> np.ndarray:
    cluster_of = model_set.assignment.labels
    rids = ds.frame["region_id"].to_numpy()
    unknown = set(rids) - set(cluster_of)
    if unknown:
        raise ValueError(f"region {sorted(unknown)[0]!r} has no cluster label")
    return np.array([cluster_of[r] for r in rids])


def predict_union(
    model_set: ClusterModelSet, test: Dataset
) -> tuple[np.ndarray, np.ndarray]:
    """Each test row predicted exactly once, by its own cluster's model."""
    if model_set.lag_table is not None:
        # lag columns were appended after the base columns at fit time
        n_base = len(model_set.feature_names) - len(model_set.lag_table.columns)
        columns = list(model_set.feature_names[:n_base])
    else:
        columns = list(model_set.feature_names)
    X, names = build_matrix(test, columns, model_set.lag_table)
    if names != model_set.feature_names:
        raise ValueError("test feature layout does not match training layout")
    row_cluster = cluster_of_rows(model_set, test)
    out_labels = np.zeros(len(test), dtype=np.int8)
    out_scores = np.zeros(len(test))
    for lbl in sorted(set(row_cluster.tolist())):
        mask = row_cluster == lbl
        labels, scores = predict(model_set.models[lbl], X[mask])
        out_labels[mask] = labels
        out_scores[mask] = scores
    return out_labels, out_scores
