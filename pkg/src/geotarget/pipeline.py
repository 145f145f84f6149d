"""Config-driven pipeline: ingest -> weights -> stats -> cluster -> pca ->
train -> evaluate, with every stage a pure function of the artifacts the
previous stage wrote.

The master seed in the config fans out to per-stage seeds via
:func:`geotarget.rng.stage_seed`, so a stage run standalone reproduces its
slice of a full run byte-for-byte.  Artifact writes are atomic
(temp-then-rename).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .clustering import (
    ClusterAssignment,
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
    impute_region_mean,
    load_households,
    load_regions,
    log_pce,
    one_hot_encode,
    split_train_test,
    winsorize_recode,
)
from .evaluation import aggregate_report, comparison_grid, grid_to_csv
from .models import (
    FAMILIES,
    ModelSpec,
    PcaRule,
    build_matrix,
    cluster_of_rows,
    fit,
    fit_per_cluster,
    model_to_json,
    predict,
    predict_union,
)
from .models.base import REGRESSION_FAMILIES, _encode
from .pca import cumulative_variance, kaiser_count, minka_dimension, pca_fit
from .rng import stage_seed
from .stats import StatsError, getis_ord, moran_permutation_test, moran_subset
from .synthetic import SyntheticSpec, gen_households, gen_regions, two_regime_map
from .weights import (
    contiguity_from_json,
    contiguity_to_edge_csv,
    contiguity_to_json,
    delaunay_neighbors,
    row_standardize,
)

THREADS_ENV = "GEOTARGET_THREADS"

STAGES = ("synth", "ingest", "weights", "stats", "cluster", "pca", "train", "evaluate")


class ConfigError(ValueError):
    """Malformed or inconsistent pipeline configuration."""


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class PipelineConfig:
    master_seed: int
    output_dir: str
    households_path: str | None
    regions_path: str | None
    synthetic: dict | None
    variables: list[dict]
    one_hot: list[str]
    recodes: list[dict]
    impute: dict | None
    train_fraction: float
    poverty_quantile: float
    n_permutations: int
    stat_subsets: list[dict]
    k_values: list[int]
    cluster_features: list[str] | None
    families: list[str]
    hyperparameters: dict
    pca_rule: PcaRule
    lag_arms: list[bool]
    raw: dict = field(repr=False, default_factory=dict)


def load_config(path) -> PipelineConfig:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}")

    inputs = doc.get("inputs", {})
    synthetic = doc.get("synthetic")
    if synthetic is None and not inputs.get("households"):
        raise ConfigError("config needs [inputs] paths or a [synthetic] section")

    split = doc.get("split", {})
    poverty = doc.get("poverty", {})
    stats = doc.get("stats", {})
    clustering = doc.get("clustering", {})
    models = doc.get("models", {})

    quantile = float(poverty.get("quantile", 0.4))
    if not 0 < quantile < 1:
        raise ConfigError(f"poverty quantile must be in (0,1), got {quantile}")
    k_values = [int(k) for k in clustering.get("k", [4, 6, 12])]
    if not k_values:
        raise ConfigError("clustering.k must be non-empty")
    families = list(models.get("families", FAMILIES))
    unknown = set(families) - set(FAMILIES)
    if unknown:
        raise ConfigError(f"unknown model family {sorted(unknown)[0]!r}")

    rule_name = models.get("pca_rule", "minka")
    pca_rule = PcaRule(
        rule=rule_name,
        m=models.get("pca_m"),
        target=models.get("pca_target"),
    )
    lagged = models.get("lagged", False)
    lag_arms = sorted({bool(v) for v in (lagged if isinstance(lagged, list) else [lagged])})

    preprocess = doc.get("preprocess", {})
    base = Path(path).resolve().parent

    def _resolve(p):
        if p is None:
            return None
        p = Path(p)
        return str(p if p.is_absolute() else base / p)

    return PipelineConfig(
        master_seed=int(doc.get("master_seed", 0)),
        output_dir=_resolve(doc.get("output_dir", "out")),
        households_path=_resolve(inputs.get("households")),
        regions_path=_resolve(inputs.get("regions")),
        synthetic=synthetic,
        variables=doc.get("variables", []),
        one_hot=list(preprocess.get("one_hot", [])),
        recodes=list(preprocess.get("recode", [])),
        impute=preprocess.get("impute"),
        train_fraction=float(split.get("train_fraction", 0.2)),
        poverty_quantile=quantile,
        n_permutations=int(stats.get("n_permutations", 999)),
        stat_subsets=list(stats.get("subset", [])),
        k_values=k_values,
        cluster_features=clustering.get("features"),
        families=families,
        hyperparameters=models.get("hyperparameters", {}),
        pca_rule=pca_rule,
        lag_arms=lag_arms,
        raw=doc,
    )


def n_jobs_from_env() -> int:
    value = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(value))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {value!r}")


# ---------------------------------------------------------------------------
# artifact helpers


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_frame(path: Path, frame: pd.DataFrame) -> None:
    _atomic_write_text(path, frame.to_csv(index=False))


def _schema_doc(ds: Dataset) -> str:
    return json.dumps(
        [{"name": s.name, "kind": s.kind} for s in ds.schema], indent=2
    )


def _schema_from_doc(text: str) -> tuple[VariableSpec, ...]:
    return tuple(VariableSpec(d["name"], d["kind"]) for d in json.loads(text))


def _load_stage_dataset(out: Path, name: str) -> Dataset:
    schema_path = out / "data" / "schema.json"
    csv_path = out / "data" / f"{name}.csv"
    for p in (schema_path, csv_path):
        if not p.exists():
            raise DataError(f"missing upstream artifact: {p}")
    return load_households(csv_path, _schema_from_doc(schema_path.read_text()))


def _load_stage_regions(out: Path) -> RegionTable:
    path = out / "data" / "regions.csv"
    if not path.exists():
        raise DataError(f"missing upstream artifact: {path}")
    return load_regions(path)


def _load_stage_weights(out: Path):
    path = out / "weights" / "adjacency.json"
    if not path.exists():
        raise DataError(f"missing upstream artifact: {path}")
    W = contiguity_from_json(path.read_text())
    return W, row_standardize(W)


def _load_threshold(out: Path) -> dict:
    path = out / "data" / "threshold.json"
    if not path.exists():
        raise DataError(f"missing upstream artifact: {path}")
    return json.loads(path.read_text())


def _labels_from_threshold(ds: Dataset, doc: dict) -> PovertyLabels:
    pce = ds.frame["pce"].to_numpy(dtype=float)
    return PovertyLabels(
        household_ids=ds.frame["household_id"].to_numpy(),
        labels=(pce <= doc["threshold_value"]).astype(np.int8),
        threshold_value=float(doc["threshold_value"]),
        threshold_quantile=float(doc["quantile"]),
    )


def _load_assignment(out: Path, k: int) -> ClusterAssignment:
    path = out / "cluster" / f"assignment_k{k}.csv"
    if not path.exists():
        raise DataError(f"missing upstream artifact: {path}")
    frame = pd.read_csv(path, dtype={"region_id": str})
    return ClusterAssignment(
        labels=dict(zip(frame["region_id"], frame["cluster"].astype(int))), k=int(k)
    )


def _cell_tag(family: str, k: int | None, pca: bool, lagged: bool) -> str:
    if k is None:
        return f"{family}_benchmark"
    tag = f"{family}_k{k}_pca{int(pca)}"
    if lagged:
        tag += "_lag"
    return tag


# ---------------------------------------------------------------------------
# stages


def stage_synth(config: PipelineConfig, out: Path) -> None:
    """Generate household/region CSVs in the same format core-data consumes."""
    if config.synthetic is None:
        return
    syn = config.synthetic
    seed = int(syn.get("seed", stage_seed(config.master_seed, "synthetic")))
    spec = SyntheticSpec(
        rows=syn.get("rows"),
        cols=syn.get("cols"),
        n_points=syn.get("n_points"),
        min_separation=float(syn.get("min_separation", 1e-3)),
        rho=float(syn.get("rho", 0.5)),
        households_per_region=int(syn.get("households_per_region", 50)),
        noise_sd=float(syn.get("noise_sd", 0.5)),
        sar_sd=float(syn.get("sar_sd", 1.0)),
        seed=seed,
        province_blocks=int(syn.get("province_blocks", 4)),
    )
    regions = gen_regions(spec)
    Wrs = row_standardize(delaunay_neighbors(regions))
    beta_a = np.asarray(syn.get("beta_a", [1.0, 0.6, -0.4, 0.3]), dtype=float)
    if int(syn.get("regimes", 1)) == 2:
        beta_b = np.asarray(syn.get("beta_b", (-beta_a).tolist()), dtype=float)
        regime_map = two_regime_map(regions, beta_a, beta_b)
    else:
        regime_map = {rid: beta_a for rid in regions.region_ids}
    ds, _ = gen_households(regions, Wrs, spec, regime_map)
    _write_frame(out / "data" / "households.csv", ds.frame)
    _write_frame(out / "data" / "regions.csv", regions.frame)


def stage_ingest(config: PipelineConfig, out: Path) -> None:
    """Load, preprocess, split and compute the poverty threshold."""
    if config.synthetic is not None:
        households_path = out / "data" / "households.csv"
        regions_path = out / "data" / "regions.csv"
        if not households_path.exists():
            raise DataError(f"missing upstream artifact: {households_path}")
    else:
        households_path = Path(config.households_path)
        regions_path = Path(config.regions_path)
        if not households_path.exists():
            raise DataError(f"household file not found: {households_path}")
        if not regions_path.exists():
            raise DataError(f"region file not found: {regions_path}")

    regions = load_regions(regions_path)
    schema = _infer_schema(households_path, config.variables)
    ds = load_households(households_path, schema)

    for rec in config.recodes:
        rule = RecodeRule(rec["op"], float(rec["threshold"]), float(rec["value"]))
        ds, _ = winsorize_recode(ds, rec["var"], rule)
    for var in config.one_hot:
        ds = one_hot_encode(ds, var)
    if config.impute:
        for var in config.impute.get("vars", []):
            ds = impute_region_mean(ds, var, int(config.impute["target_year"]), regions)

    _write_frame(out / "data" / "clean.csv", ds.frame)
    _atomic_write_text(out / "data" / "schema.json", _schema_doc(ds))
    if config.synthetic is None:
        _write_frame(out / "data" / "regions.csv", regions.frame)

    train, test = split_train_test(
        ds, config.train_fraction, stage_seed(config.master_seed, "split")
    )
    labels = binarize_target(train, config.poverty_quantile, reference=train)
    _write_frame(out / "data" / "train.csv", train.frame)
    _write_frame(out / "data" / "test.csv", test.frame)
    _atomic_write_text(
        out / "data" / "threshold.json",
        json.dumps(
            {
                "quantile": config.poverty_quantile,
                "threshold_value": labels.threshold_value,
            },
            indent=2,
        ),
    )


def _infer_schema(path, declared: list[dict]) -> tuple[VariableSpec, ...]:
    if declared:
        return tuple(
            VariableSpec(
                d["name"],
                d["kind"],
                categories=tuple(d["categories"]) if d.get("categories") else None,
            )
            for d in declared
        )
    header = pd.read_csv(path, nrows=0).columns.tolist()
    extra = [c for c in header if c not in ("household_id", "region_id", "year", "pce")]
    return tuple(VariableSpec(name, "continuous") for name in extra)


def stage_weights(config: PipelineConfig, out: Path) -> None:
    regions = _load_stage_regions(out)
    W = delaunay_neighbors(regions)
    (out / "weights").mkdir(parents=True, exist_ok=True)
    contiguity_to_edge_csv(W, out / "weights" / "edges.csv.tmp")
    os.replace(out / "weights" / "edges.csv.tmp", out / "weights" / "edges.csv")
    _atomic_write_text(out / "weights" / "adjacency.json", contiguity_to_json(W))


def _region_mean_pce(ds: Dataset, region_ids) -> pd.Series:
    means = ds.frame.groupby("region_id")["pce"].mean()
    missing = [r for r in region_ids if r not in means.index]
    if missing:
        raise DataError(f"region {missing[0]!r} has no households")
    return means.loc[list(region_ids)]


def stage_stats(config: PipelineConfig, out: Path) -> None:
    """Moran's I (global and subsets) and Getis-Ord on region mean pce."""
    ds = _load_stage_dataset(out, "clean")
    W, Wrs = _load_stage_weights(out)
    values = _region_mean_pce(ds, Wrs.region_ids).to_numpy()
    seed = stage_seed(config.master_seed, "stats")
    n_jobs = n_jobs_from_env()

    result = moran_permutation_test(
        values, Wrs, config.n_permutations, seed=seed, n_jobs=n_jobs
    )
    moran_frame = pd.DataFrame(
        [
            {
                "statistic": result.statistic,
                "expected_under_null": result.expected_under_null,
                "p_value": result.p_value,
                "n_permutations": result.n_permutations,
                "seed": result.seed,
            }
        ]
    )
    _write_frame(out / "stats" / "moran.csv", moran_frame)

    subset_rows = []
    ranks = pd.Series(values, index=list(Wrs.region_ids)).rank(pct=True, method="average")
    for sub in config.stat_subsets:
        lo = float(sub.get("lower_quantile", 0.0))
        hi = float(sub.get("upper_quantile", 1.0))
        members = [rid for rid in Wrs.region_ids if lo < ranks[rid] <= hi]
        row = {"name": sub["name"], "lower_quantile": lo, "upper_quantile": hi,
               "n_regions": len(members)}
        try:
            row["statistic"] = moran_subset(values, Wrs, members)
            row["error"] = ""
        except (StatsError, ValueError) as exc:
            row["statistic"] = ""
            row["error"] = str(exc)
        subset_rows.append(row)
    _write_frame(
        out / "stats" / "moran_subsets.csv",
        pd.DataFrame(
            subset_rows,
            columns=["name", "lower_quantile", "upper_quantile", "n_regions", "statistic", "error"],
        ),
    )

    local = getis_ord(values, W)
    _write_frame(out / "stats" / "getis_ord.csv", pd.DataFrame(local.to_records()))


def _cluster_feature_frame(config: PipelineConfig, train: Dataset, region_ids) -> np.ndarray:
    cols = config.cluster_features or train.feature_names
    frame = train.frame[["region_id", *cols]].copy()
    frame["log_pce_mean"] = log_pce(train)
    means = frame.groupby("region_id").mean(numeric_only=True)
    missing = [r for r in region_ids if r not in means.index]
    if missing:
        raise DataError(f"region {missing[0]!r} has no training households")
    return standardize_columns(means.loc[list(region_ids)].to_numpy(dtype=float))


def stage_cluster(config: PipelineConfig, out: Path) -> None:
    train = _load_stage_dataset(out, "train")
    W, _ = _load_stage_weights(out)
    feats = _cluster_feature_frame(config, train, W.region_ids)
    k_max = max(config.k_values)
    if k_max > W.n:
        raise ConfigError(f"k={k_max} exceeds the {W.n} regions")
    dendro = constrained_divisive_cluster(feats, W, k_max)
    _atomic_write_text(out / "cluster" / "dendrogram.json", dendro.to_json())
    for k in config.k_values:
        assignment = cut_dendrogram(dendro, k)
        frame = pd.DataFrame(
            {
                "region_id": list(W.region_ids),
                "cluster": [assignment.labels[r] for r in W.region_ids],
            }
        )
        _write_frame(out / "cluster" / f"assignment_k{k}.csv", frame)


def stage_pca(config: PipelineConfig, out: Path) -> None:
    """Scree/cumulative-variance table and the three selection rules."""
    train = _load_stage_dataset(out, "train")
    X = train.frame[train.feature_names].to_numpy(dtype=float)
    model = pca_fit(X, standardize=True)
    rows = []
    for m in range(1, model.n_components + 1):
        rows.append(
            {
                "component": m,
                "eigenvalue": model.eigenvalues[m - 1],
                "cumulative_fraction": cumulative_variance(model, m),
            }
        )
    _write_frame(out / "pca" / "scree.csv", pd.DataFrame(rows))
    Z = (X[:, model.kept_columns] - model.means) / model.scales
    selection = {
        "kaiser": kaiser_count(model),
        "minka": minka_dimension(Z),
        "cumulative_90": next(
            m for m in range(1, model.n_components + 1) if cumulative_variance(model, m) >= 0.9
        ),
        "n_columns": int(model.n_components),
    }
    _atomic_write_text(out / "pca" / "selection.json", json.dumps(selection, indent=2))


def _cells(config: PipelineConfig):
    """(family, k, pca, lagged) for the whole experiment grid."""
    for family in config.families:
        yield family, None, False, False
        for lagged in config.lag_arms:
            for pca in (False, True):
                for k in config.k_values:
                    yield family, k, pca, lagged


def stage_train(config: PipelineConfig, out: Path) -> None:
    """Fit the full grid and write model documents plus test predictions."""
    train = _load_stage_dataset(out, "train")
    test = _load_stage_dataset(out, "test")
    threshold = _load_threshold(out)
    train_labels = _labels_from_threshold(train, threshold)
    test_labels = _labels_from_threshold(test, threshold)
    _, Wrs = _load_stage_weights(out)
    assignments = {k: _load_assignment(out, k) for k in config.k_values}
    model_seed = stage_seed(config.master_seed, "models")
    n_jobs = n_jobs_from_env()

    columns = train.feature_names
    X_train, _ = build_matrix(train, columns)
    X_test, _ = build_matrix(test, columns)
    y_train = log_pce(train)

    for family, k, pca, lagged in _cells(config):
        spec = ModelSpec(
            family=family,
            hyperparameters=dict(config.hyperparameters.get(family, {})),
            seed=model_seed,
            use_lagged_features=lagged,
            pca=config.pca_rule if pca else None,
        )
        tag = _cell_tag(family, k, pca, lagged)
        if k is None:
            model = fit(spec, X_train, y_train, train_labels, columns, n_jobs=n_jobs)
            labels, scores = predict(model, X_test)
            clusters = np.zeros(len(test), dtype=int)
            doc = model_to_json(model)
        else:
            model_set = fit_per_cluster(
                spec, train, train_labels, assignments[k], Wrs, columns, n_jobs=n_jobs
            )
            labels, scores = predict_union(model_set, test)
            clusters = cluster_of_rows(model_set, test)
            doc = _cluster_set_json(model_set)
        _atomic_write_text(out / "models" / f"model_{tag}.json", doc)
        pred = pd.DataFrame(
            {
                "household_id": test.frame["household_id"],
                "truth": test_labels.labels,
                "label": labels.astype(int),
                "score": scores,
                "cluster": clusters,
            }
        )
        _write_frame(out / "models" / f"pred_{tag}.csv", pred)


def _cluster_set_json(model_set) -> str:
    doc = {
        "version": 1,
        "kind": "cluster_model_set",
        "family": model_set.spec.family,
        "k": model_set.assignment.k,
        "fallback_clusters": list(model_set.fallback_clusters),
        "assignment": {r: int(l) for r, l in sorted(model_set.assignment.labels.items())},
        "fallback": json.loads(model_to_json(model_set.fallback)),
        "models": {
            str(lbl): json.loads(model_to_json(m))
            for lbl, m in sorted(model_set.models.items())
        },
        "lag_table": None
        if model_set.lag_table is None
        else {
            "index": list(model_set.lag_table.index),
            "columns": list(model_set.lag_table.columns),
            "values": _encode(model_set.lag_table.to_numpy()),
        },
    }
    return json.dumps(doc, sort_keys=True)


def stage_evaluate(config: PipelineConfig, out: Path) -> None:
    """Per-cell targeting reports, the comparison grid and GeoJSON exports."""
    test = _load_stage_dataset(out, "test")
    regions = _load_stage_regions(out)
    assignments = {k: _load_assignment(out, k) for k in config.k_values}

    all_reports = []
    national = {}
    for family, k, pca, lagged in _cells(config):
        tag = _cell_tag(family, k, pca, lagged)
        path = out / "models" / f"pred_{tag}.csv"
        if not path.exists():
            raise DataError(f"missing upstream artifact: {path}")
        pred = pd.read_csv(path, dtype={"household_id": str})
        scores = pred["score"].to_numpy() if family in REGRESSION_FAMILIES else None
        reports = aggregate_report(
            pred["truth"].to_numpy(),
            pred["label"].to_numpy(),
            scores,
            test,
            regions,
            assignments[k] if k is not None else None,
        )
        reports = [
            dataclasses.replace(r, family=family, k=k, pca=pca, lagged=lagged)
            for r in reports
        ]
        all_reports.extend(reports)
        national[(family, k, pca, lagged)] = next(
            r for r in reports if r.scope_kind == "national"
        )

    rows = []
    for r in all_reports:
        rows.append(
            {
                "family": r.family,
                "k": "" if r.k is None else r.k,
                "pca": int(bool(r.pca)),
                "lagged": int(bool(r.lagged)),
                "scope_kind": r.scope_kind,
                "scope_id": r.scope_id,
                "tp": r.counts.tp,
                "tn": r.counts.tn,
                "fp": r.counts.fp,
                "fn": r.counts.fn,
                "ee": "" if r.ee is None else r.ee,
                "ie": "" if r.ie is None else r.ie,
                "sensitivity": "" if r.sensitivity is None else r.sensitivity,
                "specificity": "" if r.specificity is None else r.specificity,
                "r2": "" if r.r2 is None else r.r2,
            }
        )
    _write_frame(out / "evaluate" / "results_long.csv", pd.DataFrame(rows))

    best_cells: dict = {}
    for lagged in config.lag_arms:
        benchmark = [national[(f, None, False, False)] for f in config.families]
        sml = [
            national[(f, k, pca, lagged)]
            for f in config.families
            for pca in (False, True)
            for k in config.k_values
        ]
        grid = comparison_grid(benchmark, sml, config.families, config.k_values)
        name = "grid_lagged.csv" if lagged else "grid.csv"
        _atomic_write_text(out / "evaluate" / name, grid_to_csv(grid))
        sml_key, sml_ee = grid.best_cell("ee", spatial_only=True)
        bench_key, bench_ee = grid.best_cell("ee", spatial_only=False)
        best_cells["lagged" if lagged else "plain"] = {
            "best_sml": None
            if sml_key is None
            else {"family": sml_key[0], "k": sml_key[1], "pca": sml_key[2], "ee": sml_ee},
            "best_overall": None
            if bench_key is None
            else {"family": bench_key[0], "k": bench_key[1], "pca": bench_key[2], "ee": bench_ee},
            "best_benchmark_ee": grid.column_minimum(None, None, "ee"),
        }
    _atomic_write_text(
        out / "evaluate" / "best_cells.json", json.dumps(best_cells, indent=2)
    )

    _write_geojson(config, out, test, regions, all_reports, national)


def _write_geojson(config, out: Path, test, regions, all_reports, national) -> None:
    """Region points with stats/cluster properties; province metrics from the
    best spatial cell and the best benchmark."""
    getis = pd.read_csv(out / "stats" / "getis_ord.csv", dtype={"region_id": str})
    getis = getis.set_index("region_id")
    mean_pce = _region_mean_pce(_load_stage_dataset(out, "clean"), regions.region_ids)
    assignments = {k: _load_assignment(out, k) for k in config.k_values}

    features = []
    for _, row in regions.frame.iterrows():
        rid = row["region_id"]
        props = {
            "region_id": rid,
            "name": row["name"],
            "province_id": row["province_id"],
            "urban_flag": bool(row["urban_flag"]),
            "mean_pce": float(mean_pce[rid]),
            "g_star_z": float(getis.loc[rid, "g_star_z"]),
            "g_star_p": float(getis.loc[rid, "p_value"]),
            "hotspot_class": getis.loc[rid, "hotspot_class"],
        }
        for k in config.k_values:
            props[f"cluster_k{k}"] = int(assignments[k].labels[rid])
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "Point",
                    "coordinates": [float(row["centroid_x"]), float(row["centroid_y"])],
                },
                "properties": props,
            }
        )
    doc = {"type": "FeatureCollection", "features": features}
    _atomic_write_text(out / "evaluate" / "regions.geojson", json.dumps(doc, indent=2))

    lag0 = {key: rep for key, rep in national.items() if not key[3]}
    bench_best = min(
        (rep for key, rep in lag0.items() if key[1] is None and rep.ee is not None),
        key=lambda r: r.ee,
        default=None,
    )
    sml_best = min(
        (rep for key, rep in lag0.items() if key[1] is not None and rep.ee is not None),
        key=lambda r: r.ee,
        default=None,
    )

    def _prov_metrics(selected):
        if selected is None:
            return {}
        rows = [
            r
            for r in all_reports
            if r.family == selected.family
            and r.k == selected.k
            and bool(r.pca) == bool(selected.pca)
            and not r.lagged
            and r.scope_kind == "province"
        ]
        return {r.scope_id: r for r in rows}

    bench_prov = _prov_metrics(bench_best)
    sml_prov = _prov_metrics(sml_best)
    features = []
    for _, row in regions.frame.iterrows():
        prov = row["province_id"]
        props = {
            "region_id": row["region_id"],
            "province_id": prov,
            "urban_flag": bool(row["urban_flag"]),
        }
        for label, table, rep in (
            ("benchmark", bench_prov, bench_best),
            ("sml", sml_prov, sml_best),
        ):
            pr = table.get(prov)
            props[f"{label}_family"] = None if rep is None else rep.family
            props[f"{label}_ee"] = None if pr is None or pr.ee is None else pr.ee
            props[f"{label}_ie"] = None if pr is None or pr.ie is None else pr.ie
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "Point",
                    "coordinates": [float(row["centroid_x"]), float(row["centroid_y"])],
                },
                "properties": props,
            }
        )
    doc = {"type": "FeatureCollection", "features": features}
    _atomic_write_text(out / "evaluate" / "provinces.geojson", json.dumps(doc, indent=2))


# ---------------------------------------------------------------------------
# orchestration


_STAGE_FUNCS = {
    "synth": stage_synth,
    "ingest": stage_ingest,
    "weights": stage_weights,
    "stats": stage_stats,
    "cluster": stage_cluster,
    "pca": stage_pca,
    "train": stage_train,
    "evaluate": stage_evaluate,
}


def _manifest(config: PipelineConfig, config_path, stages: dict) -> str:
    sha = hashlib.sha256(Path(config_path).read_bytes()).hexdigest()
    doc = {
        "config_path": str(config_path),
        "config_sha256": sha,
        "master_seed": config.master_seed,
        "stage_seeds": {s: stage_seed(config.master_seed, s) for s in ("synthetic", "split", "stats", "models")},
        "versions": {
            "geotarget": __version__,
            "numpy": np.__version__,
            "pandas": pd.__version__,
            "python": sys.version.split()[0],
        },
        "benchmark_definition": (
            "plain global model without spatial clustering, lags or PCA"
        ),
        "stages": stages,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
    }
    return json.dumps(doc, indent=2)


def run_stage(name: str, config: PipelineConfig, out_dir=None) -> None:
    if name not in _STAGE_FUNCS:
        raise ConfigError(f"unknown stage {name!r}")
    out = Path(out_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _STAGE_FUNCS[name](config, out)


def run_pipeline(config_path, out_dir=None, k_values=None) -> Path:
    """Run every stage in order; artifacts land under the output directory.

    ``k_values`` overrides the config's cluster-count list (the CLI's
    repeatable ``--k`` flag).  On a stage failure the exception propagates
    after the manifest records which stage failed; earlier artifacts are
    retained.
    """
    config = load_config(config_path)
    if k_values:
        config = dataclasses.replace(config, k_values=[int(k) for k in k_values])
    out = Path(out_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stages: dict = {}
    t_total = time.time()
    for name in STAGES:
        t0 = time.time()
        try:
            run_stage(name, config, out)
        except Exception as exc:
            stages[name] = {"status": "failed", "error": str(exc)}
            _atomic_write_text(out / "manifest.json", _manifest(config, config_path, stages))
            raise
        stages[name] = {"status": "ok", "seconds": round(time.time() - t0, 3)}
    stages["total_seconds"] = round(time.time() - t_total, 3)
    _atomic_write_text(out / "manifest.json", _manifest(config, config_path, stages))
    return out
