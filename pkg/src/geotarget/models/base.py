"""Model specifications, trained-model container and serialization.

Eight families share one contract: regression families score predicted log
expenditure and classify poor when the score falls at or below the log
poverty line; probability families score P(poor) and classify at 0.5.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

FAMILIES = (
    "linear_regression",
    "elastic_net",
    "logistic",
    "naive_bayes",
    "gradient_boosting",
    "random_forest",
    "stochastic_gradient",
    "neural_network",
)

REGRESSION_FAMILIES = ("linear_regression", "elastic_net")

# Families whose optimizers want zero-mean unit-variance inputs.
STANDARDIZED_FAMILIES = (
    "elastic_net",
    "logistic",
    "stochastic_gradient",
    "neural_network",
)

DEFAULT_HYPERPARAMETERS: dict[str, dict] = {
    "linear_regression": {},
    "elastic_net": {"l1_ratio": 0.5, "penalty": 1e-3, "tol": 1e-6, "max_iter": 1000},
    "logistic": {"l2_penalty": 1e-6, "max_iter": 500, "tol": 1e-8},
    "naive_bayes": {"variance_floor": 1e-9},
    "gradient_boosting": {
        "n_trees": 100,
        "max_depth": 3,
        "learning_rate": 0.1,
        "min_samples_leaf": 1,
    },
    "random_forest": {"n_trees": 100, "min_samples_leaf": 5, "max_depth": 64},
    "stochastic_gradient": {"learning_rate": 0.01, "epochs": 10},
    "neural_network": {
        "hidden_units": 32,
        "batch_size": 128,
        "epochs": 30,
        "learning_rate": 0.01,
    },
}

MIN_FIT_ROWS = 30

MODEL_JSON_VERSION = 1


class FitError(ValueError):
    """Training preconditions not met for this data."""


class SingleClassError(FitError):
    """All labels identical; a classifier cannot be fit."""


class InsufficientDataError(FitError):
    """Too few rows to fit."""


@dataclass(frozen=True)
class PcaRule:
    """How to choose the number of retained components.

    rule: fixed | kaiser | minka | cumulative; ``m`` is required for fixed,
    ``target`` (a variance fraction) for cumulative.
    """

    rule: str = "minka"
    m: int | None = None
    target: float | None = None

    def __post_init__(self):
        if self.rule not in ("fixed", "kaiser", "minka", "cumulative"):
            raise ValueError(f"unknown PCA rule {self.rule!r}")
        if self.rule == "fixed" and (self.m is None or self.m < 1):
            raise ValueError("fixed PCA rule needs m >= 1")
        if self.rule == "cumulative" and not (self.target and 0 < self.target <= 1):
            raise ValueError("cumulative PCA rule needs target in (0,1]")


@dataclass(frozen=True)
class ModelSpec:
    """Family, hyperparameters (merged over defaults), seed and front-ends."""

    family: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0
    use_lagged_features: bool = False
    pca: PcaRule | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}")
        merged = dict(DEFAULT_HYPERPARAMETERS[self.family])
        unknown = set(self.hyperparameters) - set(merged)
        if unknown:
            raise ValueError(
                f"{self.family}: unknown hyperparameter {sorted(unknown)[0]!r}"
            )
        merged.update(self.hyperparameters)
        object.__setattr__(self, "hyperparameters", merged)

    @property
    def is_regression(self) -> bool:
        return self.family in REGRESSION_FAMILIES


@dataclass(frozen=True)
class TrainedModel:
    """Learned parameters plus everything needed to reproduce predictions."""

    family: str
    output_kind: str  # expenditure_score | poor_probability
    params: dict
    feature_names: tuple[str, ...]
    hyperparameters: dict
    seed: int
    threshold_value: float | None = None  # raw poverty line (regression only)
    scaler: dict | None = None  # {"mean": [...], "sd": [...]}
    pca: dict | None = None  # serialized PcaModel + chosen m
    diagnostics: dict = field(default_factory=dict)


def _encode(obj):
    if isinstance(obj, np.ndarray):
        return {"__nd__": obj.tolist(), "dtype": str(obj.dtype)}
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def _decode(obj):
    if isinstance(obj, dict):
        if "__nd__" in obj:
            return np.asarray(obj["__nd__"], dtype=obj["dtype"])
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def model_to_json(model: TrainedModel) -> str:
    doc = {
        "version": MODEL_JSON_VERSION,
        "family": model.family,
        "output_kind": model.output_kind,
        "threshold_value": model.threshold_value,
        "feature_names": list(model.feature_names),
        "hyperparameters": _encode(model.hyperparameters),
        "seed": model.seed,
        "params": _encode(model.params),
        "scaler": _encode(model.scaler),
        "pca": _encode(model.pca),
        "diagnostics": _encode(model.diagnostics),
    }
    return json.dumps(doc, sort_keys=True)


def model_from_json(text: str) -> TrainedModel:
    doc = json.loads(text)
    if doc.get("version") != MODEL_JSON_VERSION:
        raise ValueError(f"unsupported model document version {doc.get('version')!r}")
    return TrainedModel(
        family=doc["family"],
        output_kind=doc["output_kind"],
        params=_decode(doc["params"]),
        feature_names=tuple(doc["feature_names"]),
        hyperparameters=_decode(doc["hyperparameters"]),
        seed=doc["seed"],
        threshold_value=doc["threshold_value"],
        scaler=_decode(doc["scaler"]),
        pca=_decode(doc["pca"]),
        diagnostics=_decode(doc["diagnostics"]),
    )
