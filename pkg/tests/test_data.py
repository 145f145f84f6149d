import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geotarget import (
    DataError,
    Dataset,
    RecodeRule,
    VariableSpec,
    binarize_target,
    impute_region_mean,
    load_households,
    one_hot_encode,
    split_train_test,
    winsorize_recode,
)
from geotarget.data import nearest_rank_quantile

from conftest import make_dataset, make_regions


# ---------------------------------------------------------------------------
# loading


def _write_csv(tmp_path, text, name="households.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_households_basic(tmp_path):
    path = _write_csv(
        tmp_path,
        "household_id,region_id,year,pce,hhsize\n"
        "H1,R1,2020,100.5,3\n"
        "H2,R1,2020,80,2\n"
        "H3,R2,2020,120,4\n",
    )
    ds = load_households(path, [VariableSpec("hhsize", "continuous")])
    assert len(ds) == 3
    assert ds.frame["pce"].tolist() == [100.5, 80.0, 120.0]


def test_load_households_missing_cell_is_nan_not_zero(tmp_path):
    path = _write_csv(
        tmp_path,
        "household_id,region_id,year,pce,hhsize\nH1,R1,2020,100,\n",
    )
    ds = load_households(path, [VariableSpec("hhsize", "continuous")])
    assert len(ds) == 1
    assert math.isnan(ds.frame["hhsize"].iloc[0])


def test_load_households_nonpositive_pce(tmp_path):
    path = _write_csv(
        tmp_path,
        "household_id,region_id,year,pce,hhsize\nH1,R1,2020,-5,3\n",
    )
    with pytest.raises(DataError, match="non-positive expenditure"):
        load_households(path, [VariableSpec("hhsize", "continuous")])


def test_load_households_unknown_column(tmp_path):
    path = _write_csv(
        tmp_path, "household_id,region_id,year,pce,mystery\nH1,R1,2020,5,1\n"
    )
    with pytest.raises(DataError, match="unknown column"):
        load_households(path, [])


def test_load_households_malformed_row_reports_line(tmp_path):
    path = _write_csv(
        tmp_path,
        "household_id,region_id,year,pce,hhsize\n"
        "H1,R1,2020,100,3\n"
        "H2,R1,2020,abc,2\n",
    )
    with pytest.raises(DataError, match="line 3"):
        load_households(path, [VariableSpec("hhsize", "continuous")])


# ---------------------------------------------------------------------------
# one-hot encoding


def _sector_dataset(values):
    schema = (
        VariableSpec(
            "sector", "categorical", categories=("agriculture", "industry", "services")
        ),
    )
    return make_dataset(
        [10.0] * len(values), features={"sector": values}, schema=schema
    )


def test_one_hot_sector():
    ds = one_hot_encode(_sector_dataset(["industry", "agriculture", "services"]), "sector")
    assert ds.feature_names == [
        "sector=agriculture",
        "sector=industry",
        "sector=services",
    ]
    row = ds.frame.iloc[0]
    assert (
        row["sector=agriculture"],
        row["sector=industry"],
        row["sector=services"],
    ) == (0.0, 1.0, 0.0)


def test_one_hot_rows_sum_to_one():
    rng = np.random.default_rng(1)
    values = rng.choice(["agriculture", "industry", "services"], size=40).tolist()
    ds = one_hot_encode(_sector_dataset(values), "sector")
    sums = ds.frame[ds.feature_names].sum(axis=1)
    assert (sums == 1.0).all()


def test_one_hot_binary_collapse():
    schema = (VariableSpec("gender", "categorical", categories=("male", "female")),)
    ds = make_dataset([1.0, 2.0], features={"gender": ["female", "male"]}, schema=schema)
    out = one_hot_encode(ds, "gender", collapse_binary=True)
    assert out.feature_names == ["gender=female"]
    assert out.frame["gender=female"].tolist() == [1.0, 0.0]


def test_one_hot_single_category_is_error():
    with pytest.raises(DataError):
        VariableSpec("broken", "categorical", categories=("only",))


def test_one_hot_non_categorical_is_error():
    ds = make_dataset([1.0], features={"x": [1.0]})
    with pytest.raises(DataError, match="not categorical"):
        one_hot_encode(ds, "x")


# ---------------------------------------------------------------------------
# winsorizing recodes


def test_recode_caps_village_difficulty():
    ds = make_dataset([1.0, 2.0], features={"ikg": [75.0, 41.0]})
    out, n = winsorize_recode(ds, "ikg", RecodeRule(">", 60, 60))
    assert n == 1
    assert out.frame["ikg"].tolist() == [60.0, 41.0]


def test_recode_working_age_bounds():
    ds = make_dataset([1.0, 2.0, 3.0], features={"nage": [0.0, 6.0, 3.0]})
    out, _ = winsorize_recode(ds, "nage", RecodeRule("<", 1, 1))
    out, _ = winsorize_recode(out, "nage", RecodeRule(">", 4, 4))
    assert out.frame["nage"].tolist() == [1.0, 4.0, 3.0]


def test_recode_strict_inequality_leaves_boundary():
    ds = make_dataset([1.0], features={"ikg": [60.0]})
    out, n = winsorize_recode(ds, "ikg", RecodeRule(">", 60, 60))
    assert n == 0
    assert out.frame["ikg"].tolist() == [60.0]


@given(
    st.lists(st.floats(-100, 200), min_size=1, max_size=30),
    st.floats(-50, 150),
)
@settings(max_examples=50, deadline=None)
def test_recode_idempotent(values, cap):
    ds = make_dataset([1.0] * len(values), features={"v": values})
    rule = RecodeRule(">", cap, cap)
    once, _ = winsorize_recode(ds, "v", rule)
    twice, n = winsorize_recode(once, "v", rule)
    assert n == 0
    assert twice.frame["v"].tolist() == once.frame["v"].tolist()


def test_overlapping_recode_rules_rejected():
    with pytest.raises(DataError, match="overlapping"):
        VariableSpec(
            "v",
            "continuous",
            recode_rules=(RecodeRule(">", 10, 10), RecodeRule(">", 20, 20)),
        )


# ---------------------------------------------------------------------------
# imputation


def _impute_regions():
    from geotarget import RegionTable

    base = make_regions([(0, 0), (1, 0), (2, 0), (3, 0)])
    return RegionTable(
        base.frame.assign(
            region_id=["A", "E", "B", "C"], province_id=["P1", "P1", "P1", "P2"]
        )
    )


def _impute_dataset():
    # donors before 2021: A {2, 4}; E {9}; B none; C {5}.
    return make_dataset(
        [10.0] * 7,
        region_ids=["A", "A", "A", "E", "B", "B", "C"],
        years=[2016, 2020, 2021, 2019, 2021, 2021, 2018],
        features={"v": [2.0, 4.0, np.nan, 9.0, np.nan, 7.0, 5.0]},
    )


def test_impute_region_mean_basic():
    out = impute_region_mean(_impute_dataset(), "v", 2021, _impute_regions())
    v = out.frame["v"].tolist()
    assert v[2] == 3.0  # mean of region A donors {2, 4}
    assert v[4] == 5.0  # region B empty -> province P1 mean over {2, 4, 9}
    assert v[5] == 7.0  # observed value untouched


def test_impute_untouched_cells_identical():
    ds = _impute_dataset()
    out = impute_region_mean(ds, "v", 2021, _impute_regions())
    before = ds.frame["v"].to_numpy()
    after = out.frame["v"].to_numpy()
    touched = np.isnan(before) & (ds.frame["year"].to_numpy() == 2021)
    assert np.array_equal(before[~touched], after[~touched], equal_nan=True)


def test_impute_national_fallback_and_error():
    ds = make_dataset(
        [10.0, 10.0],
        region_ids=["A", "B"],
        years=[2020, 2021],
        features={"v": [6.0, np.nan]},
    )
    out = impute_region_mean(ds, "v", 2021)
    assert out.frame["v"].tolist() == [6.0, 6.0]

    empty = make_dataset(
        [10.0, 10.0],
        region_ids=["A", "B"],
        years=[2020, 2021],
        features={"v": [np.nan, np.nan]},
    )
    with pytest.raises(DataError, match="no donor"):
        impute_region_mean(empty, "v", 2021)


# ---------------------------------------------------------------------------
# target binarization


def test_binarize_nearest_rank_oracle():
    ds = make_dataset([float(i) for i in range(1, 11)])
    labels = binarize_target(ds, 0.40, reference=ds)
    # independent nearest-rank oracle: k = ceil(0.4 * 10) = 4th order statistic
    ordered = sorted(ds.frame["pce"])
    assert labels.threshold_value == ordered[math.ceil(0.4 * 10) - 1] == 4.0
    poor = {h for h, l in zip(labels.household_ids, labels.labels) if l == 1}
    assert poor == {"H0000", "H0001", "H0002", "H0003"}


def test_binarize_constant_expenditure_everyone_poor():
    ds = make_dataset([5.0] * 7)
    labels = binarize_target(ds, 0.40, reference=ds)
    assert labels.poor_fraction == 1.0


def test_binarize_test_uses_train_threshold():
    train = make_dataset([float(i) for i in range(1, 11)])
    test = make_dataset([100.0, 2.0, 3.5])
    labels = binarize_target(test, 0.40, reference=train)
    assert labels.threshold_value == 4.0
    assert labels.labels.tolist() == [0, 1, 1]


@given(st.integers(5, 200), st.floats(0.05, 0.95))
@settings(max_examples=60, deadline=None)
def test_binarize_reference_fraction_exact(n, q):
    rng = np.random.default_rng(n)
    pce = rng.permutation(np.arange(1, n + 1)).astype(float)  # distinct values
    ds = make_dataset(pce)
    labels = binarize_target(ds, q, reference=ds)
    assert labels.poor_fraction == pytest.approx(math.ceil(q * n) / n, abs=1e-12)


def test_nearest_rank_quantile_empty_errors():
    with pytest.raises(DataError):
        nearest_rank_quantile(np.array([]), 0.4)


# ---------------------------------------------------------------------------
# train/test split


def test_split_sizes_single_region():
    ds = make_dataset([float(i + 1) for i in range(10)])
    train, test = split_train_test(ds, 0.2, seed=5)
    assert len(train) == 2 and len(test) == 8


def test_split_deterministic():
    ds = make_dataset([float(i + 1) for i in range(50)])
    a1, b1 = split_train_test(ds, 0.3, seed=9)
    a2, b2 = split_train_test(ds, 0.3, seed=9)
    assert a1.frame["household_id"].tolist() == a2.frame["household_id"].tolist()
    assert b1.frame["household_id"].tolist() == b2.frame["household_id"].tolist()


def test_split_stratified_by_region():
    ds = make_dataset(
        [float(i + 1) for i in range(10)],
        region_ids=["A"] * 5 + ["B"] * 5,
    )
    train, _ = split_train_test(ds, 0.2, seed=0)
    counts = train.frame["region_id"].value_counts()
    assert counts["A"] == 1 and counts["B"] == 1


def test_split_partition_property():
    rng = np.random.default_rng(3)
    ds = make_dataset(
        rng.uniform(1, 10, size=37),
        region_ids=rng.choice(["A", "B", "C"], size=37).tolist(),
    )
    train, test = split_train_test(ds, 0.4, seed=11)
    all_ids = set(ds.frame["household_id"])
    train_ids = set(train.frame["household_id"])
    test_ids = set(test.frame["household_id"])
    assert train_ids | test_ids == all_ids
    assert train_ids & test_ids == set()


def test_split_single_row_region_goes_to_test():
    ds = make_dataset([1.0, 2.0, 3.0, 4.0, 5.0], region_ids=["A", "A", "A", "A", "B"])
    with pytest.warns(UserWarning, match="single row"):
        train, test = split_train_test(ds, 0.5, seed=2)
    assert "B" not in set(train.frame["region_id"])
    assert "B" in set(test.frame["region_id"])


def test_load_regions_geojson_matches_csv(tmp_path):
    from geotarget import load_regions

    regions = make_regions([(0.0, 0.5), (1.5, 2.0), (3.0, 1.0)])
    csv_path = tmp_path / "regions.csv"
    regions.frame.to_csv(csv_path, index=False)
    features = [
        {
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [row.centroid_x, row.centroid_y]},
            "properties": {
                "region_id": row.region_id,
                "name": row.name,
                "province_id": row.province_id,
                "urban_flag": bool(row.urban_flag),
            },
        }
        for row in regions.frame.itertuples()
    ]
    import json

    geo_path = tmp_path / "regions.geojson"
    geo_path.write_text(json.dumps({"type": "FeatureCollection", "features": features}))
    from_csv = load_regions(csv_path)
    from_geo = load_regions(geo_path)
    assert from_geo.region_ids == from_csv.region_ids
    assert np.allclose(from_geo.centroids(), from_csv.centroids())
    assert from_geo.province_of() == from_csv.province_of()


def test_dataset_duplicate_household_rejected():
    frame = pd.DataFrame(
        {
            "household_id": ["H1", "H1"],
            "region_id": ["A", "A"],
            "year": [2020, 2020],
            "pce": [1.0, 2.0],
        }
    )
    with pytest.raises(DataError, match="duplicate household_id"):
        Dataset(frame, ())
