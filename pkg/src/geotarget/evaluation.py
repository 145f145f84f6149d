"""Targeting error metrics and the benchmark-vs-spatial comparison grid.

Exclusion error is the share of truly poor households the model misses
(fn / (tp + fn)); inclusion error is the share of predicted-poor that are
not poor (fp / (tp + fp)).  Strata where a ratio is undefined carry an
explicit None marker, never a silent zero.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .clustering import ClusterAssignment
from .data import Dataset, RegionTable, log_pce


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise EvaluationError("negative confusion count")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn
        )


@dataclass(frozen=True)
class TargetingReport:
    """Metrics for one scope (national / cluster / province / stratum)."""

    scope_kind: str  # national | cluster | province | province_urban
    scope_id: str
    counts: ConfusionCounts
    ee: float | None
    ie: float | None
    sensitivity: float | None
    specificity: float | None
    r2: float | None
    family: str | None = None
    k: int | None = None
    pca: bool | None = None
    lagged: bool | None = None


def confusion(truth, pred) -> ConfusionCounts:
    truth = np.asarray(truth).astype(int)
    pred = np.asarray(pred).astype(int)
    if truth.shape != pred.shape:
        raise EvaluationError(f"length mismatch: {truth.shape} vs {pred.shape}")
    if truth.size == 0:
        raise EvaluationError("empty vectors")
    for name, arr in (("truth", truth), ("pred", pred)):
        if not np.isin(arr, (0, 1)).all():
            raise EvaluationError(f"{name} vector is not binary")
    tp = int(np.sum((truth == 1) & (pred == 1)))
    tn = int(np.sum((truth == 0) & (pred == 0)))
    fp = int(np.sum((truth == 0) & (pred == 1)))
    fn = int(np.sum((truth == 1) & (pred == 0)))
    return ConfusionCounts(tp, tn, fp, fn)


def exclusion_error(c: ConfusionCounts) -> float:
    """fn / (tp + fn): poor households wrongly left out."""
    if c.tp + c.fn == 0:
        raise EvaluationError("exclusion error undefined: no poor in truth")
    return c.fn / (c.tp + c.fn)


def inclusion_error(c: ConfusionCounts) -> float:
    """fp / (tp + fp): program slots leaking to the non-poor."""
    if c.tp + c.fp == 0:
        raise EvaluationError("inclusion error undefined: no predicted poor")
    return c.fp / (c.tp + c.fp)


def secondary_metrics(
    c: ConfusionCounts, truth_scores=None, pred_scores=None
) -> tuple[float | None, float | None, float | None]:
    """(sensitivity, specificity, r2); r2 only when score vectors are given.

    r2 compares model scores against observed log expenditure, so it is
    meaningful for the regression families and omitted (None) for pure
    classifiers.
    """
    sensitivity = c.tp / (c.tp + c.fn) if c.tp + c.fn else None
    specificity = c.tn / (c.tn + c.fp) if c.tn + c.fp else None
    r2 = None
    if truth_scores is not None and pred_scores is not None:
        t = np.asarray(truth_scores, dtype=float)
        p = np.asarray(pred_scores, dtype=float)
        if t.shape != p.shape:
            raise EvaluationError("score vectors are not aligned")
        ss_tot = float(np.sum((t - t.mean()) ** 2))
        if ss_tot == 0:
            raise EvaluationError("R^2 undefined: zero variance in truth scores")
        r2 = 1.0 - float(np.sum((t - p) ** 2)) / ss_tot
    return sensitivity, specificity, r2


def _metrics_for(mask, truth, pred, truth_scores, pred_scores, kind, scope_id):
    c = confusion(truth[mask], pred[mask])
    try:
        ee = exclusion_error(c)
    except EvaluationError:
        ee = None
    try:
        ie = inclusion_error(c)
    except EvaluationError:
        ie = None
    ts = truth_scores[mask] if truth_scores is not None else None
    ps = pred_scores[mask] if pred_scores is not None else None
    try:
        sens, spec, r2 = secondary_metrics(c, ts, ps)
    except EvaluationError:
        sens, spec, _ = secondary_metrics(c)
        r2 = None
    return TargetingReport(kind, scope_id, c, ee, ie, sens, spec, r2)


def aggregate_report(
    truth,
    pred,
    scores,
    ds: Dataset,
    regions: RegionTable,
    assignment: ClusterAssignment | None = None,
) -> list[TargetingReport]:
    """Reports at national, cluster, province and province-by-urban scope.

    ``scores`` may be None (classifier families); when given they are the
    predicted log expenditures and r2 is computed against observed log
    expenditure per scope.
    """
    truth = np.asarray(truth).astype(int)
    pred = np.asarray(pred).astype(int)
    n = len(ds)
    if not (len(truth) == len(pred) == n):
        raise EvaluationError("vectors are not aligned with the dataset")
    pred_scores = np.asarray(scores, dtype=float) if scores is not None else None
    truth_scores = log_pce(ds) if pred_scores is not None else None

    province_of = regions.province_of()
    urban_of = regions.urban_of()
    rids = ds.frame["region_id"].to_numpy()
    missing = set(rids) - set(province_of)
    if missing:
        raise EvaluationError(f"region {sorted(missing)[0]!r} not in region table")
    provinces = np.array([province_of[r] for r in rids])
    urban = np.array([urban_of[r] for r in rids])

    everything = np.ones(n, dtype=bool)
    reports = [
        _metrics_for(everything, truth, pred, truth_scores, pred_scores, "national", "national")
    ]
    if assignment is not None:
        cluster_rows = np.array([assignment.labels[r] for r in rids])
        for lbl in range(1, assignment.k + 1):
            mask = cluster_rows == lbl
            if mask.any():
                reports.append(
                    _metrics_for(mask, truth, pred, truth_scores, pred_scores, "cluster", str(lbl))
                )
    for prov in sorted(set(provinces.tolist())):
        mask = provinces == prov
        reports.append(
            _metrics_for(mask, truth, pred, truth_scores, pred_scores, "province", prov)
        )
        for flag, tag in ((True, "urban"), (False, "rural")):
            sub = mask & (urban == flag)
            if sub.any():
                reports.append(
                    _metrics_for(
                        sub, truth, pred, truth_scores, pred_scores, "province_urban", f"{prov}/{tag}"
                    )
                )
    return reports


# ---------------------------------------------------------------------------
# comparison grid


@dataclass(frozen=True)
class ComparisonGrid:
    """Wide results layout: one row per family, one column per arm."""

    families: tuple[str, ...]
    k_values: tuple[int, ...]
    cells: dict  # (family, k or None, pca or None) -> TargetingReport

    def columns(self) -> list[tuple[int | None, bool | None]]:
        cols: list[tuple[int | None, bool | None]] = [(None, None)]
        for pca in (False, True):
            for k in self.k_values:
                cols.append((k, pca))
        return cols

    @staticmethod
    def column_name(k, pca) -> str:
        if k is None:
            return "benchmark"
        return f"{'pca' if pca else 'nopca'}_k{k}"

    def metric(self, family, k, pca, which: str) -> float | None:
        report = self.cells[(family, k, pca)]
        return getattr(report, which)

    def column_minimum(self, k, pca, which: str) -> float | None:
        values = [
            self.metric(f, k, pca, which)
            for f in self.families
            if self.metric(f, k, pca, which) is not None
        ]
        return min(values) if values else None

    def best_cell(self, which: str = "ee", spatial_only: bool = True):
        """((family, k, pca), value) with the smallest defined metric."""
        best_key, best_val = None, None
        for key, report in sorted(self.cells.items(), key=lambda kv: _cell_order(kv[0])):
            if spatial_only and key[1] is None:
                continue
            val = getattr(report, which)
            if val is not None and (best_val is None or val < best_val):
                best_key, best_val = key, val
        return best_key, best_val


def _cell_order(key):
    family, k, pca = key
    return (family, -1 if k is None else k, -1 if pca is None else int(pca))


def comparison_grid(
    benchmark_reports: list[TargetingReport],
    sml_reports: list[TargetingReport],
    families,
    k_values,
) -> ComparisonGrid:
    """Assemble national-scope reports into the full experiment grid.

    Every (family) benchmark cell and every (family, k, pca) spatial cell
    must be present exactly once; a missing cell is an error naming it.
    """
    families = tuple(families)
    k_values = tuple(k_values)
    cells: dict = {}
    for rep in benchmark_reports:
        cells[(rep.family, None, None)] = rep
    for rep in sml_reports:
        cells[(rep.family, rep.k, bool(rep.pca))] = rep
    for fam in families:
        if (fam, None, None) not in cells:
            raise EvaluationError(f"missing benchmark cell for family {fam!r}")
        for pca in (False, True):
            for k in k_values:
                if (fam, k, pca) not in cells:
                    raise EvaluationError(
                        f"missing grid cell family={fam!r} k={k} pca={pca}"
                    )
    return ComparisonGrid(families, k_values, cells)


def _fmt_pct(value: float | None) -> str:
    return "NA" if value is None else f"{100.0 * value:.2f}"


def grid_to_csv(grid: ComparisonGrid) -> str:
    """Wide CSV: EE block, IE block, and per-column minima rows."""
    cols = grid.columns()
    header = ["metric", "family"] + [grid.column_name(k, p) for k, p in cols]
    out = io.StringIO()
    out.write(",".join(header) + "\n")
    for which, label in (("ee", "exclusion_error"), ("ie", "inclusion_error")):
        for fam in grid.families:
            row = [label, fam] + [_fmt_pct(grid.metric(fam, k, p, which)) for k, p in cols]
            out.write(",".join(row) + "\n")
    for which, label in (("ee", "min_exclusion_error"), ("ie", "min_inclusion_error")):
        row = [label, "minimum"] + [_fmt_pct(grid.column_minimum(k, p, which)) for k, p in cols]
        out.write(",".join(row) + "\n")
    return out.getvalue()
