import numpy as np
import pytest

import geotarget as gt
from geotarget import SyntheticError, SyntheticSpec, gen_households, gen_regions, gen_sar_field
from geotarget.models import ModelSpec, build_matrix, fit, fit_per_cluster
from geotarget.rng import generator


def test_lattice_regions():
    spec = SyntheticSpec(rows=3, cols=3, seed=0)
    regions = gen_regions(spec)
    assert len(regions) == 9
    xy = regions.centroids()
    assert set(map(tuple, xy)) == {(float(x), float(y)) for x in range(3) for y in range(3)}
    assert regions.frame["province_id"].nunique() >= 2


def test_regions_deterministic():
    spec = SyntheticSpec(n_points=30, min_separation=0.05, seed=42)
    a = gen_regions(spec)
    b = gen_regions(spec)
    assert a.frame.equals(b.frame)


def test_random_points_min_separation():
    spec = SyntheticSpec(n_points=200, min_separation=0.01, seed=1)
    xy = gen_regions(spec).centroids()
    d2 = ((xy[:, None, :] - xy[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    assert np.sqrt(d2.min()) >= 0.01


def test_infeasible_separation_errors():
    with pytest.raises(SyntheticError, match="cannot place"):
        gen_regions(SyntheticSpec(n_points=500, min_separation=5.0, seed=0))


def test_spec_validation():
    with pytest.raises(SyntheticError):
        SyntheticSpec(rows=3, cols=3, n_points=9)
    with pytest.raises(SyntheticError):
        SyntheticSpec(rows=1, cols=5)
    with pytest.raises(SyntheticError):
        SyntheticSpec(rows=3, cols=3, rho=1.0)


def _lattice_weights(rows, cols, seed=0):
    regions = gen_regions(SyntheticSpec(rows=rows, cols=cols, seed=seed))
    return regions, gt.row_standardize(gt.delaunay_neighbors(regions))


def test_sar_rho_zero_is_identity():
    _, Wrs = _lattice_weights(4, 4)
    field = gen_sar_field(Wrs, 0.0, seed=9)
    eps = generator(9, "sar").standard_normal(16)
    assert np.array_equal(field, eps)


def test_sar_positive_rho_is_autocorrelated():
    _, Wrs = _lattice_weights(10, 10)
    hits = 0
    for seed in range(10):
        field = gen_sar_field(Wrs, 0.7, seed=seed)
        hits += gt.moran_i(field, Wrs) > 0.3
    assert hits >= 8


def test_sar_negative_rho_is_negatively_autocorrelated():
    _, Wrs = _lattice_weights(10, 10)
    hits = 0
    for seed in range(10):
        field = gen_sar_field(Wrs, -0.7, seed=seed)
        hits += gt.moran_i(field, Wrs) < 0
    assert hits >= 8


def test_moran_monotone_in_rho_on_average():
    _, Wrs = _lattice_weights(8, 8)
    means = []
    for rho in (0.0, 0.4, 0.8):
        values = [gt.moran_i(gen_sar_field(Wrs, rho, seed=s), Wrs) for s in range(50)]
        means.append(np.mean(values))
    assert means[0] < means[1] < means[2]
    assert abs(np.mean([gen_sar_field(Wrs, 0.5, seed=s).mean() for s in range(50)])) < 0.5


def test_households_shape_and_determinism():
    spec = SyntheticSpec(rows=3, cols=4, households_per_region=7, seed=5)
    regions = gen_regions(spec)
    Wrs = gt.row_standardize(gt.delaunay_neighbors(regions))
    beta = {r: np.array([1.0, -1.0]) for r in regions.region_ids}
    ds1, coef1 = gen_households(regions, Wrs, spec, beta)
    ds2, _ = gen_households(regions, Wrs, spec, beta)
    assert len(ds1) == 12 * 7
    assert ds1.frame.equals(ds2.frame)
    assert set(coef1) == set(regions.region_ids)


def test_single_regime_exact_recovery():
    spec = SyntheticSpec(rows=3, cols=4, households_per_region=60, rho=0.0, noise_sd=0.0, seed=2)
    regions = gen_regions(spec)
    Wrs = gt.row_standardize(gt.delaunay_neighbors(regions))
    beta = np.array([0.8, -0.3, 1.1])
    ds, _ = gen_households(regions, Wrs, spec, {r: beta for r in regions.region_ids})
    # pull out one region: within a region log pce = const + x beta exactly
    sub = ds.frame[ds.frame["region_id"] == regions.region_ids[0]]
    X = sub[["x1", "x2", "x3"]].to_numpy()
    y = np.log(sub["pce"].to_numpy())
    coef, *_ = np.linalg.lstsq(np.column_stack([np.ones(len(X)), X]), y, rcond=None)
    assert np.max(np.abs(coef[1:] - beta)) < 1e-6


def test_two_regime_pooled_r2_near_zero():
    spec = SyntheticSpec(
        rows=2, cols=6, households_per_region=150, rho=0.0, noise_sd=0.1, sar_sd=0.1, seed=3
    )
    regions = gen_regions(spec)
    Wrs = gt.row_standardize(gt.delaunay_neighbors(regions))
    beta = np.array([1.0, 0.7])
    regime = gt.two_regime_map(regions, beta, -beta)
    ds, _ = gen_households(regions, Wrs, spec, regime)
    labels = gt.binarize_target(ds, 0.4, reference=ds)
    y = gt.log_pce(ds)
    X, cols = build_matrix(ds, ds.feature_names)

    pooled = fit(ModelSpec("linear_regression", seed=0), X, y, labels, cols)
    from geotarget.models import predict

    _, pooled_scores = predict(pooled, X)
    ss_tot = np.sum((y - y.mean()) ** 2)
    pooled_r2 = 1 - np.sum((y - pooled_scores) ** 2) / ss_tot
    assert pooled_r2 < 0.2

    left = {r for r, b in regime.items() if b[0] > 0}
    assignment = gt.ClusterAssignment(
        labels={r: 1 if r in left else 2 for r in regions.region_ids}, k=2
    )
    model_set = fit_per_cluster(ModelSpec("linear_regression", seed=0), ds, labels, assignment)
    from geotarget.models import predict_union

    _, scores = predict_union(model_set, ds)
    per_cluster_r2 = 1 - np.sum((y - scores) ** 2) / ss_tot
    assert per_cluster_r2 > 0.8


def test_regime_map_must_cover_regions():
    spec = SyntheticSpec(rows=2, cols=2, seed=0)
    regions = gen_regions(spec)
    Wrs = gt.row_standardize(gt.delaunay_neighbors(regions))
    with pytest.raises(SyntheticError, match="missing region"):
        gen_households(regions, Wrs, spec, {regions.region_ids[0]: np.array([1.0])})
