import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import geotarget as gt
from geotarget import (
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

from conftest import make_dataset, make_regions


def test_confusion_enumeration():
    c = confusion([1, 1, 1, 0, 0], [1, 0, 1, 0, 1])
    assert (c.tp, c.fn, c.tn, c.fp) == (2, 1, 1, 1)
    assert c.total == 5


def test_confusion_identity():
    truth = np.array([1, 0, 1, 1, 0, 0])
    c = confusion(truth, truth)
    assert c.fp == 0 and c.fn == 0


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=200))
@settings(max_examples=60, deadline=None)
def test_confusion_matches_loop_oracle(pairs):
    truth = [t for t, _ in pairs]
    pred = [p for _, p in pairs]
    c = confusion(truth, pred)
    tp = tn = fp = fn = 0
    for t, p in pairs:
        if t == 1 and p == 1:
            tp += 1
        elif t == 0 and p == 0:
            tn += 1
        elif t == 0 and p == 1:
            fp += 1
        else:
            fn += 1
    assert (c.tp, c.tn, c.fp, c.fn) == (tp, tn, fp, fn)


def test_confusion_errors():
    with pytest.raises(EvaluationError, match="length"):
        confusion([1, 0], [1])
    with pytest.raises(EvaluationError, match="empty"):
        confusion([], [])
    with pytest.raises(EvaluationError, match="binary"):
        confusion([2, 0], [1, 0])


def test_error_rates_arithmetic():
    assert exclusion_error(ConfusionCounts(tp=3, tn=0, fp=0, fn=1)) == 0.25
    assert inclusion_error(ConfusionCounts(tp=8, tn=0, fp=2, fn=0)) == 0.20
    perfect = ConfusionCounts(tp=5, tn=5, fp=0, fn=0)
    assert exclusion_error(perfect) == 0.0
    assert inclusion_error(perfect) == 0.0


def test_error_rates_undefined():
    with pytest.raises(EvaluationError, match="no poor in truth"):
        exclusion_error(ConfusionCounts(tp=0, tn=4, fp=1, fn=0))
    with pytest.raises(EvaluationError, match="no predicted poor"):
        inclusion_error(ConfusionCounts(tp=0, tn=4, fp=0, fn=2))


@given(st.integers(1, 500), st.integers(0, 500), st.integers(0, 500), st.integers(0, 500))
@settings(max_examples=60, deadline=None)
def test_sensitivity_is_one_minus_ee(tp, tn, fp, fn):
    c = ConfusionCounts(tp=tp, tn=tn, fp=fp, fn=fn)
    sens, spec, _ = secondary_metrics(c)
    assert sens == pytest.approx(1.0 - exclusion_error(c), abs=1e-12)
    if c.tp + c.fp > 0:
        precision = c.tp / (c.tp + c.fp)
        assert inclusion_error(c) == pytest.approx(1.0 - precision, abs=1e-12)


def test_r2_identities():
    c = ConfusionCounts(1, 1, 1, 1)
    t = np.array([1.0, 2.0, 3.0, 4.0])
    assert secondary_metrics(c, t, t)[2] == pytest.approx(1.0)
    constant = np.full(4, t.mean())
    assert secondary_metrics(c, t, constant)[2] == pytest.approx(0.0)
    with pytest.raises(EvaluationError, match="zero variance"):
        secondary_metrics(c, np.ones(4), np.ones(4))


# ---------------------------------------------------------------------------
# aggregation


def _report_fixture(provinces, urban, truth, pred, regions=None):
    n = len(truth)
    region_ids = [f"R{i:03d}" for i in range(n)]
    table = make_regions(
        [(i, 0.5) for i in range(n)], province=provinces, urban=urban
    )
    ds = make_dataset([float(i + 1) for i in range(n)], region_ids=region_ids)
    return ds, table


def test_single_province_reduces_to_national():
    truth = [1, 1, 0, 0, 1]
    pred = [1, 0, 0, 1, 1]
    ds, regions = _report_fixture(["P1"] * 5, [True] * 5, truth, pred)
    reports = aggregate_report(truth, pred, None, ds, regions)
    national = next(r for r in reports if r.scope_kind == "national")
    province = next(r for r in reports if r.scope_kind == "province")
    assert national.counts == province.counts
    assert national.ee == province.ee


def test_national_counts_sum_over_provinces():
    rng = np.random.default_rng(0)
    n = 60
    truth = rng.integers(0, 2, n)
    pred = rng.integers(0, 2, n)
    provinces = rng.choice(["P1", "P2", "P3"], size=n).tolist()
    ds, regions = _report_fixture(provinces, [True] * n, truth, pred)
    reports = aggregate_report(truth, pred, None, ds, regions)
    national = next(r for r in reports if r.scope_kind == "national")
    prov = [r for r in reports if r.scope_kind == "province"]
    total = prov[0].counts
    for r in prov[1:]:
        total = total + r.counts
    assert total == national.counts
    strata = [r for r in reports if r.scope_kind == "province_urban"]
    total2 = strata[0].counts
    for r in strata[1:]:
        total2 = total2 + r.counts
    assert total2 == national.counts


def test_planted_urban_rural_ordering():
    # urban: 1 miss in 10 poor; rural: 5 misses in 10 poor
    truth = [1] * 10 + [1] * 10
    pred = [1] * 9 + [0] + [1] * 5 + [0] * 5
    urban = [True] * 10 + [False] * 10
    ds, regions = _report_fixture(["P1"] * 20, urban, truth, pred)
    reports = aggregate_report(truth, pred, None, ds, regions)
    by_id = {r.scope_id: r for r in reports if r.scope_kind == "province_urban"}
    assert by_id["P1/urban"].ee < by_id["P1/rural"].ee


def test_undefined_stratum_marked_none():
    truth = [0, 0, 1, 1]
    pred = [0, 0, 1, 1]
    ds, regions = _report_fixture(["P1", "P1", "P2", "P2"], [True] * 4, truth, pred)
    reports = aggregate_report(truth, pred, None, ds, regions)
    p1 = next(r for r in reports if r.scope_kind == "province" and r.scope_id == "P1")
    assert p1.ee is None and p1.ie is None  # no poor and no predicted poor in P1
    assert p1.counts.tn == 2


def test_cluster_scope_reports():
    truth = [1, 0, 1, 0]
    pred = [1, 0, 0, 0]
    ds, regions = _report_fixture(["P1"] * 4, [True] * 4, truth, pred)
    assignment = gt.ClusterAssignment(
        labels={"R000": 1, "R001": 1, "R002": 2, "R003": 2}, k=2
    )
    reports = aggregate_report(truth, pred, None, ds, regions, assignment)
    clusters = {r.scope_id: r for r in reports if r.scope_kind == "cluster"}
    assert clusters["1"].ee == 0.0
    assert clusters["2"].ee == 1.0


# ---------------------------------------------------------------------------
# comparison grid


def _make_report(family, k, pca, ee, ie):
    return TargetingReport(
        scope_kind="national",
        scope_id="national",
        counts=ConfusionCounts(10, 10, 2, 2),
        ee=ee,
        ie=ie,
        sensitivity=1 - ee if ee is not None else None,
        specificity=0.8,
        r2=None,
        family=family,
        k=k,
        pca=pca,
    )


def test_grid_reduction_single_family():
    bench = [_make_report("logistic", None, None, 0.25, 0.30)]
    sml = [
        _make_report("logistic", 1, pca, 0.25, 0.30) for pca in (False, True)
    ]
    grid = comparison_grid(bench, sml, ["logistic"], [1])
    for pca in (False, True):
        assert grid.metric("logistic", 1, pca, "ee") == grid.metric("logistic", None, None, "ee")


def test_grid_missing_cell_error():
    bench = [_make_report("logistic", None, None, 0.25, 0.30)]
    with pytest.raises(EvaluationError, match="k=4"):
        comparison_grid(bench, [], ["logistic"], [4])
    with pytest.raises(EvaluationError, match="benchmark.*naive_bayes"):
        comparison_grid(bench, [], ["naive_bayes"], [])


def test_grid_minima_match_brute_force():
    rng = np.random.default_rng(1)
    families = ["logistic", "naive_bayes", "elastic_net"]
    ks = [4, 6]
    bench, sml = [], []
    values = {}
    for f in families:
        ee, ie = rng.uniform(0.1, 0.9, 2)
        bench.append(_make_report(f, None, None, ee, ie))
        values[(f, None, None)] = ee
        for pca in (False, True):
            for k in ks:
                ee, ie = rng.uniform(0.1, 0.9, 2)
                sml.append(_make_report(f, k, pca, ee, ie))
                values[(f, k, pca)] = ee
    grid = comparison_grid(bench, sml, families, ks)
    for k, pca in grid.columns():
        brute = min(values[(f, k, pca)] for f in families)
        assert grid.column_minimum(k, pca, "ee") == pytest.approx(brute)
    key, val = grid.best_cell("ee")
    brute_key = min((v, k) for k, v in values.items() if k[1] is not None)
    assert val == pytest.approx(brute_key[0])
    assert key == brute_key[1]


def test_grid_csv_layout():
    bench = [_make_report("logistic", None, None, 0.25, 0.30)]
    sml = [
        _make_report("logistic", k, pca, 0.20 + 0.01 * k, None)
        for pca in (False, True)
        for k in (2, 3)
    ]
    text = grid_to_csv(comparison_grid(bench, sml, ["logistic"], [2, 3]))
    lines = text.strip().splitlines()
    assert lines[0] == "metric,family,benchmark,nopca_k2,nopca_k3,pca_k2,pca_k3"
    assert lines[1].startswith("exclusion_error,logistic,25.00,22.00,23.00")
    assert "NA" in lines[2]  # undefined IE cells stay explicit
    assert len(lines) == 1 + 2 + 2  # header, EE+IE rows, two minima rows
