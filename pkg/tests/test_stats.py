import numpy as np
import pytest

from geotarget import (
    ContiguityMatrix,
    StatsError,
    gen_sar_field,
    getis_ord,
    moran_i,
    moran_permutation_test,
    moran_subset,
    row_standardize,
)

from conftest import rook_lattice


def dense_moran(values, Wrs):
    """O(n^2) reference implementation with explicit loops."""
    z = np.asarray(values, dtype=float) - np.mean(values)
    W = Wrs.matrix.toarray()
    n = len(z)
    s0 = W.sum()
    num = 0.0
    for i in range(n):
        for j in range(n):
            num += W[i, j] * z[i] * z[j]
    return (n / s0) * num / float(z @ z)


def dense_getis_z(values, W):
    """Reference Gi* (self included, binary weights), explicit loops."""
    x = np.asarray(values, dtype=float)
    n = len(x)
    A = W.to_sparse().toarray() + np.eye(n)
    xbar = x.mean()
    s = np.sqrt((x**2).mean() - xbar**2)
    out = np.zeros(n)
    for i in range(n):
        wi = A[i].sum()
        s1 = (A[i] ** 2).sum()
        denom = s * np.sqrt((n * s1 - wi**2) / (n - 1))
        if denom > 0:
            out[i] = (A[i] @ x - xbar * wi) / denom
    return out


def random_connected_graph(rng, n):
    """Random spanning tree plus extra edges; independent of Delaunay."""
    edges = set()
    order = rng.permutation(n)
    for a, b in zip(order[:-1], order[1:]):
        edges.add((min(a, b), max(a, b)))
    for _ in range(n):
        i, j = rng.integers(0, n, 2)
        if i != j:
            edges.add((min(i, j), max(i, j)))
    ids = tuple(f"R{i:03d}" for i in range(n))
    return ContiguityMatrix(ids, np.array(sorted(edges), dtype=int))


# ---------------------------------------------------------------------------
# global Moran's I


def test_moran_two_regions_antithetic():
    W = ContiguityMatrix(("A", "B"), np.array([[0, 1]]))
    Wrs = row_standardize(W)
    assert moran_i(np.array([1.0, -1.0]), Wrs) == pytest.approx(-1.0, abs=1e-15)


def test_moran_checkerboard_is_minus_one():
    W = rook_lattice(10, 10)
    Wrs = row_standardize(W)
    values = np.array([1.0 if (i // 10 + i % 10) % 2 == 0 else -1.0 for i in range(100)])
    assert moran_i(values, Wrs) == pytest.approx(-1.0, abs=1e-12)
    assert dense_moran(values, Wrs) == pytest.approx(-1.0, abs=1e-12)


def test_moran_constant_errors():
    Wrs = row_standardize(rook_lattice(3, 3))
    with pytest.raises(StatsError, match="zero variance"):
        moran_i(np.ones(9), Wrs)


@pytest.mark.parametrize("seed", range(6))
def test_moran_matches_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 50))
    Wrs = row_standardize(random_connected_graph(rng, n))
    values = rng.standard_normal(n)
    assert abs(moran_i(values, Wrs) - dense_moran(values, Wrs)) < 1e-12


def test_moran_affine_invariance():
    rng = np.random.default_rng(42)
    Wrs = row_standardize(rook_lattice(6, 6))
    x = rng.standard_normal(36)
    base = moran_i(x, Wrs)
    for a, b in ((2.0, 0.0), (-3.0, 10.0), (0.25, -7.0)):
        assert abs(moran_i(a * x + b, Wrs) - base) < 1e-12


# ---------------------------------------------------------------------------
# permutation inference


def test_permutation_deterministic_and_floor():
    Wrs = row_standardize(rook_lattice(5, 5))
    values = gen_sar_field(Wrs, 0.6, seed=4)
    r1 = moran_permutation_test(values, Wrs, 999, seed=3)
    r2 = moran_permutation_test(values, Wrs, 999, seed=3)
    assert r1.p_value == r2.p_value
    assert r1.statistic == r2.statistic
    assert r1.p_value >= 1.0 / (999 + 1)
    assert r1.expected_under_null == pytest.approx(-1 / 24)


def test_permutation_sar_field_is_significant():
    Wrs = row_standardize(rook_lattice(15, 15))
    values = gen_sar_field(Wrs, 0.7, seed=0)
    res = moran_permutation_test(values, Wrs, 999, seed=0)
    assert res.statistic > 0.3
    assert res.p_value == pytest.approx(0.001)


def test_permutation_null_calibration_small():
    Wrs = row_standardize(rook_lattice(8, 8))
    hits = 0
    for seed in range(20):
        values = np.random.default_rng(seed).standard_normal(64)
        res = moran_permutation_test(values, Wrs, 199, seed=seed)
        hits += res.p_value > 0.05
    assert hits >= 16  # i.i.d. fields are rarely "significant"


def test_permutation_parallel_equals_serial():
    Wrs = row_standardize(rook_lattice(9, 9))
    values = gen_sar_field(Wrs, 0.5, seed=2)
    serial = moran_permutation_test(values, Wrs, 499, seed=5, n_jobs=1)
    parallel = moran_permutation_test(values, Wrs, 499, seed=5, n_jobs=4)
    assert serial.p_value == parallel.p_value


def test_permutation_rejects_too_few():
    Wrs = row_standardize(rook_lattice(3, 3))
    with pytest.raises(StatsError, match="permutations"):
        moran_permutation_test(np.arange(9.0), Wrs, 10, seed=0)


# ---------------------------------------------------------------------------
# subset Moran


def test_subset_all_regions_identity():
    Wrs = row_standardize(rook_lattice(5, 5))
    values = gen_sar_field(Wrs, 0.4, seed=1)
    assert moran_subset(values, Wrs, set(Wrs.region_ids)) == pytest.approx(
        moran_i(values, Wrs), abs=1e-15
    )


def test_subset_two_regime_smoothness():
    # top half: smooth gradient; bottom half: alternating noise-like values.
    W = rook_lattice(8, 8)
    Wrs = row_standardize(W)
    values = np.zeros(64)
    for i in range(64):
        r, c = divmod(i, 8)
        if r < 4:
            values[i] = 3.0 if (r + c) % 2 == 0 else -3.0  # rough regime
        else:
            values[i] = r + 0.4 * c  # smooth regime
    rough = [f"R{i:03d}" for i in range(32)]
    smooth = [f"R{i:03d}" for i in range(32, 64)]
    i_smooth = moran_subset(values, Wrs, smooth)
    i_rough = moran_subset(values, Wrs, rough)
    assert i_smooth > i_rough
    assert i_smooth > 0 > i_rough


def test_subset_disconnected_errors():
    Wrs = row_standardize(rook_lattice(5, 5))
    values = gen_sar_field(Wrs, 0.4, seed=3)
    # three pairwise non-adjacent cells: all isolated in the induced graph
    corners = ["R000", "R004", "R024"]
    with pytest.warns(UserWarning, match="isolated"):
        with pytest.raises(StatsError, match="usable regions"):
            moran_subset(values, Wrs, corners)


def test_subset_restandardizes_weights():
    Wrs = row_standardize(rook_lattice(4, 4))
    values = np.arange(16.0)
    subset = [f"R{i:03d}" for i in (0, 1, 2, 4, 5, 6)]
    got = moran_subset(values, Wrs, subset)
    # independent check: build the induced graph from scratch
    keep = [0, 1, 2, 4, 5, 6]
    pos = {v: k for k, v in enumerate(keep)}
    edges = []
    for i, j in rook_lattice(4, 4).edges:
        if int(i) in pos and int(j) in pos:
            edges.append((pos[int(i)], pos[int(j)]))
    sub = ContiguityMatrix(tuple(str(k) for k in keep), np.array(sorted(edges)))
    want = moran_i(values[keep], row_standardize(sub))
    assert got == pytest.approx(want, abs=1e-15)


# ---------------------------------------------------------------------------
# Getis-Ord Gi*


def test_getis_constant_field_guarded():
    res = getis_ord(np.full(9, 3.3), rook_lattice(3, 3))
    assert np.allclose(res.g_star_z, 0.0)
    assert set(res.hotspot_class) == {"none"}


def test_getis_center_blob_is_hot():
    W = rook_lattice(9, 9)
    values = np.zeros(81)
    for i in range(81):
        r, c = divmod(i, 9)
        if 3 <= r <= 5 and 3 <= c <= 5:
            values[i] = 5.0
    res = getis_ord(values, W)
    center = 4 * 9 + 4
    assert res.hotspot_class[center] == "hot"
    assert res.p_value[center] < 0.05
    # direct-computation oracle
    assert np.max(np.abs(res.g_star_z - dense_getis_z(values, W))) < 1e-12


def test_getis_negation_antisymmetry():
    rng = np.random.default_rng(8)
    W = rook_lattice(6, 6)
    values = rng.standard_normal(36)
    plus = getis_ord(values, W)
    minus = getis_ord(-values, W)
    assert np.allclose(plus.g_star_z, -minus.g_star_z, atol=1e-12)
    swap = {"hot": "cold", "cold": "hot", "none": "none"}
    assert tuple(swap[c] for c in plus.hotspot_class) == minus.hotspot_class


def test_getis_z_mean_near_zero():
    rng = np.random.default_rng(10)
    W = rook_lattice(10, 10)
    for _ in range(5):
        res = getis_ord(rng.standard_normal(100), W)
        assert abs(res.g_star_z.mean()) < 0.1


@pytest.mark.parametrize("seed", range(4))
def test_getis_matches_dense_oracle_random(seed):
    rng = np.random.default_rng(200 + seed)
    n = int(rng.integers(6, 50))
    W = random_connected_graph(rng, n)
    values = rng.standard_normal(n)
    res = getis_ord(values, W)
    assert np.max(np.abs(res.g_star_z - dense_getis_z(values, W))) < 1e-12
