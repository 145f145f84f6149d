"""Household survey ingestion, preprocessing and train/test splitting.

The dataset model is deliberately small: a pandas frame with four fixed
columns (``household_id``, ``region_id``, ``year``, ``pce``) plus one column
per declared survey variable.  All operations are pure: they return new
``Dataset`` objects and never mutate their inputs.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .rng import generator

REQUIRED_COLUMNS = ("household_id", "region_id", "year", "pce")

_OPS = {
    ">": np.greater,
    "<": np.less,
    ">=": np.greater_equal,
    "<=": np.less_equal,
    "==": np.equal,
}


class DataError(ValueError):
    """Malformed input data or violated dataset invariant."""


@dataclass(frozen=True)
class RecodeRule:
    """Replace values matching ``op threshold`` with ``replacement``.

    Example: ``RecodeRule(">", 60, 60)`` caps a variable at 60; a value of
    exactly 60 is untouched because the predicate is strict.
    """

    op: str
    threshold: float
    replacement: float

    def __post_init__(self):
        if self.op not in _OPS:
            raise DataError(f"unknown recode operator {self.op!r}")

    def matches(self, values: np.ndarray) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            out = _OPS[self.op](values, self.threshold)
        return np.asarray(out, dtype=bool) & np.isfinite(values)


@dataclass(frozen=True)
class VariableSpec:
    """Declared survey variable: name, measurement kind, optional recodes."""

    name: str
    kind: str  # continuous | categorical | binary
    recode_rules: tuple[RecodeRule, ...] = ()
    categories: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("continuous", "categorical", "binary"):
            raise DataError(f"variable {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            if self.categories is None or len(self.categories) < 2:
                raise DataError(
                    f"categorical variable {self.name!r} needs at least 2 categories"
                )
        # Overlapping recode predicates would make the result order-dependent.
        # The predicates are rays or points, so probing each threshold and a
        # small neighbourhood around it (plus far sentinels) decides overlap.
        for a_idx in range(len(self.recode_rules)):
            for b_idx in range(a_idx + 1, len(self.recode_rules)):
                a, b = self.recode_rules[a_idx], self.recode_rules[b_idx]
                span = max(1.0, abs(a.threshold), abs(b.threshold))
                probe = []
                for t in (a.threshold, b.threshold):
                    probe.extend([t - 1e-6 * span, t, t + 1e-6 * span])
                probe.extend([-1e30, 1e30])
                probe = np.array(probe, dtype=float)
                if (a.matches(probe) & b.matches(probe)).any():
                    raise DataError(
                        f"variable {self.name!r}: overlapping recode rules "
                        f"({a.op} {a.threshold}) and ({b.op} {b.threshold})"
                    )


@dataclass(frozen=True)
class Dataset:
    """Immutable household table plus the schema of its feature columns."""

    frame: pd.DataFrame
    schema: tuple[VariableSpec, ...]
    provenance: str = ""

    def __post_init__(self):
        for col in REQUIRED_COLUMNS:
            if col not in self.frame.columns:
                raise DataError(f"dataset missing required column {col!r}")
        for spec in self.schema:
            if spec.name not in self.frame.columns:
                raise DataError(f"schema variable {spec.name!r} missing from frame")
        pce = self.frame["pce"].to_numpy(dtype=float)
        bad = np.flatnonzero(np.isfinite(pce) & (pce <= 0))
        if bad.size:
            raise DataError(f"non-positive expenditure in row {bad[0]}")
        dup = self.frame.duplicated(subset=["household_id", "year"])
        if dup.any():
            hid = self.frame.loc[dup, "household_id"].iloc[0]
            raise DataError(f"duplicate household_id {hid!r} within a year")

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def feature_names(self) -> list[str]:
        return [spec.name for spec in self.schema]

    def variable(self, name: str) -> VariableSpec:
        for spec in self.schema:
            if spec.name == name:
                return spec
        raise DataError(f"unknown variable {name!r}")

    def with_frame(self, frame: pd.DataFrame, schema=None) -> "Dataset":
        return Dataset(
            frame.reset_index(drop=True),
            tuple(schema) if schema is not None else self.schema,
            self.provenance,
        )


@dataclass(frozen=True)
class RegionTable:
    """Regions with planar centroids, province membership and urban flag."""

    frame: pd.DataFrame

    COLUMNS = ("region_id", "name", "province_id", "urban_flag", "centroid_x", "centroid_y")

    def __post_init__(self):
        for col in self.COLUMNS:
            if col not in self.frame.columns:
                raise DataError(f"region table missing column {col!r}")
        ids = self.frame["region_id"]
        if ids.duplicated().any():
            raise DataError(f"duplicate region_id {ids[ids.duplicated()].iloc[0]!r}")
        xy = self.frame[["centroid_x", "centroid_y"]].to_numpy(dtype=float)
        if not np.isfinite(xy).all():
            raise DataError("non-finite centroid coordinate")

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def region_ids(self) -> list[str]:
        return self.frame["region_id"].tolist()

    def centroids(self) -> np.ndarray:
        return self.frame[["centroid_x", "centroid_y"]].to_numpy(dtype=float)

    def province_of(self) -> dict[str, str]:
        return dict(zip(self.frame["region_id"], self.frame["province_id"]))

    def urban_of(self) -> dict[str, bool]:
        return dict(zip(self.frame["region_id"], self.frame["urban_flag"].astype(bool)))


@dataclass(frozen=True)
class PovertyLabels:
    """Binary poor/non-poor labels and the expenditure threshold behind them.

    ``labels[i]`` corresponds to ``household_ids[i]`` in the dataset the
    labels were computed for; ``label == 1`` iff ``pce <= threshold_value``.
    """

    household_ids: np.ndarray
    labels: np.ndarray
    threshold_value: float
    threshold_quantile: float

    def as_mapping(self) -> dict[str, int]:
        ids = self.household_ids
        if len(set(ids)) != len(ids):
            raise DataError("household ids are not unique; use positional labels")
        return {h: int(v) for h, v in zip(ids, self.labels)}

    @property
    def poor_fraction(self) -> float:
        return float(np.mean(self.labels))


# ---------------------------------------------------------------------------
# loading


def _parse_cell(text: str, line_no: int, column: str) -> float:
    if text == "":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise DataError(f"line {line_no}: malformed value {text!r} in column {column!r}")


def load_households(path, schema) -> Dataset:
    """Read a household CSV against a declared schema.

    Empty cells become missing values (NaN), never zero.  Any column in the
    file that is neither required nor declared in the schema is an error, as
    is a declared column missing from the header.
    """
    schema = tuple(schema)
    declared = [spec.name for spec in schema]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file")
        for col in REQUIRED_COLUMNS:
            if col not in header:
                raise DataError(f"{path}: missing required column {col!r}")
        for col in declared:
            if col not in header:
                raise DataError(f"{path}: schema column {col!r} not in header")
        known = set(REQUIRED_COLUMNS) | set(declared)
        unknown = [c for c in header if c not in known]
        if unknown:
            raise DataError(f"{path}: unknown column {unknown[0]!r}")

        idx = {c: header.index(c) for c in header}
        cat_names = {s.name for s in schema if s.kind == "categorical"}
        records = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(
                    f"line {line_no}: expected {len(header)} fields, got {len(row)}"
                )
            rec = {
                "household_id": row[idx["household_id"]],
                "region_id": row[idx["region_id"]],
            }
            try:
                rec["year"] = int(row[idx["year"]])
            except ValueError:
                raise DataError(f"line {line_no}: malformed year {row[idx['year']]!r}")
            pce = _parse_cell(row[idx["pce"]], line_no, "pce")
            if np.isfinite(pce) and pce <= 0:
                raise DataError(f"line {line_no}: non-positive expenditure {pce}")
            rec["pce"] = pce
            for name in declared:
                raw = row[idx[name]]
                if name in cat_names:
                    rec[name] = raw if raw != "" else None
                else:
                    rec[name] = _parse_cell(raw, line_no, name)
            records.append(rec)

    frame = pd.DataFrame.from_records(
        records, columns=list(REQUIRED_COLUMNS) + declared
    )
    if not len(frame):
        raise DataError(f"{path}: no data rows")
    return Dataset(frame, schema, provenance=str(path))


def load_regions(path) -> RegionTable:
    """Read a region table from CSV or from a GeoJSON point collection."""
    text = open(path).read()
    if str(path).endswith((".json", ".geojson")) or text.lstrip().startswith("{"):
        doc = json.loads(text)
        if doc.get("type") != "FeatureCollection":
            raise DataError(f"{path}: expected a GeoJSON FeatureCollection")
        rows = []
        for feat in doc["features"]:
            geom = feat.get("geometry") or {}
            if geom.get("type") != "Point":
                raise DataError(f"{path}: every feature must be a Point")
            props = feat.get("properties") or {}
            rows.append(
                {
                    "region_id": props["region_id"],
                    "name": props.get("name", props["region_id"]),
                    "province_id": props["province_id"],
                    "urban_flag": bool(props["urban_flag"]),
                    "centroid_x": float(geom["coordinates"][0]),
                    "centroid_y": float(geom["coordinates"][1]),
                }
            )
        return RegionTable(pd.DataFrame(rows))
    frame = pd.read_csv(path, dtype={"region_id": str, "province_id": str, "name": str})
    frame["urban_flag"] = frame["urban_flag"].astype(bool)
    return RegionTable(frame)


# ---------------------------------------------------------------------------
# preprocessing


def one_hot_encode(ds: Dataset, var: str, collapse_binary: bool = False) -> Dataset:
    """Expand a categorical variable into one 0/1 column per category.

    Column names are ``var=category``.  With ``collapse_binary`` a
    two-category variable becomes a single indicator for its second category
    (e.g. gender {male, female} -> one column ``gender=female``).
    Rows with a missing category get NaN in every generated column.
    """
    spec = ds.variable(var)
    if spec.kind != "categorical":
        raise DataError(f"variable {var!r} is not categorical")
    cats = spec.categories
    values = ds.frame[var]
    observed = set(values.dropna().unique())
    extra = observed - set(cats)
    if extra:
        raise DataError(f"variable {var!r}: value {sorted(extra)[0]!r} not in categories")

    frame = ds.frame.drop(columns=[var])
    missing = values.isna().to_numpy()
    if collapse_binary:
        if len(cats) != 2:
            raise DataError(f"collapse_binary needs exactly 2 categories, got {len(cats)}")
        new_cols = [f"{var}={cats[1]}"]
        col = (values == cats[1]).to_numpy(dtype=float)
        col[missing] = np.nan
        frame[new_cols[0]] = col
    else:
        new_cols = [f"{var}={c}" for c in cats]
        for cat, name in zip(cats, new_cols):
            col = (values == cat).to_numpy(dtype=float)
            col[missing] = np.nan
            frame[name] = col

    schema = [s for s in ds.schema if s.name != var]
    schema.extend(VariableSpec(name, "binary") for name in new_cols)
    return ds.with_frame(frame, schema)


def winsorize_recode(ds: Dataset, var: str, rule: RecodeRule) -> tuple[Dataset, int]:
    """Apply one extreme-value recode rule; returns (dataset, rows recoded)."""
    spec = ds.variable(var)
    if spec.kind == "categorical":
        raise DataError(f"cannot recode categorical variable {var!r}")
    values = ds.frame[var].to_numpy(dtype=float)
    mask = rule.matches(values)
    n_recoded = int(mask.sum())
    if n_recoded:
        values = values.copy()
        values[mask] = rule.replacement
        frame = ds.frame.copy()
        frame[var] = values
        return ds.with_frame(frame), n_recoded
    return ds, 0


def impute_region_mean(
    ds: Dataset, var: str, target_year: int, regions: RegionTable | None = None
) -> Dataset:
    """Fill missing values of ``var`` in ``target_year`` with district means.

    Donor values are the non-missing observations of the same region in years
    strictly before ``target_year``.  Regions without donors fall back to the
    province mean (when a region table is given), then to the national mean.
    Rows outside the target year are untouched.
    """
    ds.variable(var)
    frame = ds.frame
    years = frame["year"].to_numpy()
    if target_year not in years:
        raise DataError(f"target year {target_year} not present in data")
    values = frame[var].to_numpy(dtype=float)
    donors = (years < target_year) & np.isfinite(values)
    if not donors.any():
        raise DataError(f"no donor values for {var!r} before {target_year}")
    national_mean = float(values[donors].mean())

    donor_frame = pd.DataFrame(
        {"region_id": frame.loc[donors, "region_id"].to_numpy(), "v": values[donors]}
    )
    region_means = donor_frame.groupby("region_id")["v"].mean()
    province_means = None
    province_of = None
    if regions is not None:
        province_of = regions.province_of()
        donor_frame["province_id"] = donor_frame["region_id"].map(province_of)
        province_means = donor_frame.groupby("province_id")["v"].mean()

    fill = (years == target_year) & ~np.isfinite(values)
    if not fill.any():
        return ds
    out = values.copy()
    for i in np.flatnonzero(fill):
        rid = frame["region_id"].iat[i]
        if rid in region_means.index:
            out[i] = region_means[rid]
        elif province_means is not None and province_of.get(rid) in province_means.index:
            out[i] = province_means[province_of[rid]]
        else:
            out[i] = national_mean
    new_frame = frame.copy()
    new_frame[var] = out
    return ds.with_frame(new_frame)


# ---------------------------------------------------------------------------
# target and split


def nearest_rank_quantile(values: np.ndarray, q: float) -> float:
    """k-th order statistic with k = ceil(q * n) (nearest-rank convention)."""
    values = np.sort(np.asarray(values, dtype=float))
    n = len(values)
    if n == 0:
        raise DataError("empty reference sample")
    k = int(math.ceil(q * n))
    k = min(max(k, 1), n)
    return float(values[k - 1])


def binarize_target(ds: Dataset, quantile: float, reference: Dataset) -> PovertyLabels:
    """Label households poor iff pce <= the reference nearest-rank quantile.

    The threshold comes from ``reference`` (normally the training split) so
    that test labels use the training poverty line.
    """
    if not 0 < quantile < 1:
        raise DataError(f"quantile must be in (0,1), got {quantile}")
    if len(reference) == 0:
        raise DataError("empty reference dataset")
    if len(ds) == 0:
        raise DataError("empty dataset")
    ref_pce = reference.frame["pce"].to_numpy(dtype=float)
    if not np.isfinite(ref_pce).all():
        raise DataError("reference contains missing expenditure")
    threshold = nearest_rank_quantile(ref_pce, quantile)
    pce = ds.frame["pce"].to_numpy(dtype=float)
    if not np.isfinite(pce).all():
        raise DataError("dataset contains missing expenditure")
    labels = (pce <= threshold).astype(np.int8)
    return PovertyLabels(
        household_ids=ds.frame["household_id"].to_numpy(),
        labels=labels,
        threshold_value=threshold,
        threshold_quantile=float(quantile),
    )


def split_train_test(
    ds: Dataset, train_fraction: float, seed: int
) -> tuple[Dataset, Dataset]:
    """Region-stratified deterministic split into (train, test).

    Each region's rows are split independently with floor(n_r * fraction)
    rows going to train, so every region with at least 2 rows appears in both
    splits.  A single-row region goes entirely to test with a warning.
    """
    if not 0 < train_fraction < 1:
        raise DataError(f"train fraction must be in (0,1), got {train_fraction}")
    rng = generator(seed, "split")
    frame = ds.frame
    train_idx: list[np.ndarray] = []
    region_order = sorted(frame["region_id"].unique())
    grouped = frame.groupby("region_id").indices
    for rid in region_order:
        rows = np.sort(grouped[rid])
        n_r = len(rows)
        n_train = int(math.floor(n_r * train_fraction))
        if n_r == 1:
            warnings.warn(f"region {rid!r} has a single row; sent to test")
        if n_train == 0:
            continue
        perm = rng.permutation(n_r)
        train_idx.append(rows[perm[:n_train]])
    if train_idx:
        train_rows = np.sort(np.concatenate(train_idx))
    else:
        train_rows = np.array([], dtype=int)
    mask = np.zeros(len(frame), dtype=bool)
    mask[train_rows] = True
    train = ds.with_frame(frame[mask])
    test = ds.with_frame(frame[~mask])
    return train, test


def design_matrix(ds: Dataset, columns: list[str] | None = None) -> tuple[np.ndarray, list[str]]:
    """Feature matrix (float64) for modeling, plus the column order used."""
    cols = list(columns) if columns is not None else ds.feature_names
    for c in cols:
        if c not in ds.frame.columns:
            raise DataError(f"missing feature column {c!r}")
    X = ds.frame[cols].to_numpy(dtype=float)
    return X, cols


def log_pce(ds: Dataset) -> np.ndarray:
    """Log per-capita expenditure, the regression target."""
    pce = ds.frame["pce"].to_numpy(dtype=float)
    if not np.isfinite(pce).all():
        raise DataError("missing expenditure; impute before modeling")
    return np.log(pce)
