"""Global and local spatial autocorrelation statistics.

Moran's I is the cross-product of a variable with its spatial lag, in
deviations from the mean; inference is by random permutation of the values
over the regions.  The local statistic is the self-inclusive Getis-Ord Gi*
z-score with binary weights, classified into hot/cold spots at the 5% level.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .rng import generator
from .weights import ContiguityMatrix, RowStandardizedWeights, row_standardize


class StatsError(ValueError):
    """Degenerate input for a spatial statistic."""


@dataclass(frozen=True)
class MoranResult:
    statistic: float
    expected_under_null: float
    p_value: float
    n_permutations: int
    seed: int
    alternative: str = "greater"


@dataclass(frozen=True)
class LocalStatResult:
    """Per-region Gi* z-scores with two-sided normal p-values."""

    region_ids: tuple[str, ...]
    g_star_z: np.ndarray
    p_value: np.ndarray
    hotspot_class: tuple[str, ...]  # hot | cold | none

    def to_records(self) -> list[dict]:
        return [
            {
                "region_id": rid,
                "g_star_z": float(z),
                "p_value": float(p),
                "hotspot_class": cls,
            }
            for rid, z, p, cls in zip(
                self.region_ids, self.g_star_z, self.p_value, self.hotspot_class
            )
        ]


def _check_values(values, n: int, minimum: int = 2) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.shape[0] != n:
        raise StatsError(f"expected {n} values, got {arr.shape[0]}")
    if n < minimum:
        raise StatsError(f"need at least {minimum} regions, got {n}")
    if not np.isfinite(arr).all():
        raise StatsError("non-finite value")
    if np.ptp(arr) == 0:
        raise StatsError("zero variance: values are constant")
    return arr


def moran_i(values, Wrs: RowStandardizedWeights) -> float:
    """Global Moran's I under the given (row-standardized) weights.

    I = (n / S0) * (z' W z) / (z' z) with z the centered values and S0 the
    total weight; with row-standardized weights S0 = n.
    """
    z = _check_values(values, Wrs.n)
    z = z - z.mean()
    s0 = Wrs.matrix.sum()
    num = float(z @ (Wrs.matrix @ z))
    return (Wrs.n / s0) * num / float(z @ z)


def _permuted_stats(z, rows, cols, w, n_perm, seed, n_jobs=1):
    """Moran cross-products for seeded permutations, indexed by permutation.

    Each permutation draws from its own (seed, index) stream so chunked
    parallel evaluation returns exactly the serial result.
    """
    n = len(z)

    def one_chunk(lo, hi):
        out = np.empty(hi - lo)
        for k in range(lo, hi):
            perm = generator(seed, "permutation", k).permutation(n)
            zp = z[perm]
            out[k - lo] = (zp[rows] * zp[cols]) @ w
        return out

    if n_jobs <= 1:
        return one_chunk(0, n_perm)
    bounds = np.linspace(0, n_perm, n_jobs + 1).astype(int)
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        parts = pool.map(lambda b: one_chunk(*b), zip(bounds[:-1], bounds[1:]))
    return np.concatenate(list(parts))


def moran_permutation_test(
    values,
    Wrs: RowStandardizedWeights,
    n_perm: int = 999,
    seed: int = 0,
    alternative: str = "greater",
    n_jobs: int = 1,
) -> MoranResult:
    """Permutation test for Moran's I.

    p = (1 + #{permuted I as extreme as observed}) / (1 + n_perm); the
    default alternative is one-sided upper (positive autocorrelation).
    """
    if n_perm < 99:
        raise StatsError(f"need at least 99 permutations, got {n_perm}")
    if alternative not in ("greater", "two-sided"):
        raise StatsError(f"unknown alternative {alternative!r}")
    z = _check_values(values, Wrs.n, minimum=3)
    z = z - z.mean()
    denom = float(z @ z)
    s0 = Wrs.matrix.sum()
    scale = Wrs.n / s0 / denom
    rows, cols, w = Wrs.coo()
    observed = scale * float((z[rows] * z[cols]) @ w)
    sims = scale * _permuted_stats(z, rows, cols, w, n_perm, seed, n_jobs)
    if alternative == "greater":
        extreme = int(np.sum(sims >= observed))
    else:
        center = -1.0 / (Wrs.n - 1)
        extreme = int(np.sum(np.abs(sims - center) >= abs(observed - center)))
    p = (1 + extreme) / (1 + n_perm)
    return MoranResult(
        statistic=observed,
        expected_under_null=-1.0 / (Wrs.n - 1),
        p_value=p,
        n_permutations=n_perm,
        seed=seed,
        alternative=alternative,
    )


def moran_subset(values, Wrs: RowStandardizedWeights, subset) -> float:
    """Moran's I on a region subset with the induced, re-standardized weights.

    Regions isolated inside the subset are dropped with a warning; fewer
    than 3 usable regions is an error.
    """
    subset = set(subset)
    unknown = subset - set(Wrs.region_ids)
    if unknown:
        raise StatsError(f"unknown region {sorted(unknown)[0]!r} in subset")
    arr = np.asarray(values, dtype=float).ravel()
    if arr.shape[0] != Wrs.n:
        raise StatsError(f"expected {Wrs.n} values, got {arr.shape[0]}")

    keep = np.array([rid in subset for rid in Wrs.region_ids])
    idx = np.flatnonzero(keep)
    source = Wrs.source
    pos = {int(i): k for k, i in enumerate(idx)}
    sub_edges = [
        (pos[int(i)], pos[int(j)])
        for i, j in source.edges
        if keep[i] and keep[j]
    ]
    deg = np.zeros(len(idx), dtype=int)
    for i, j in sub_edges:
        deg[i] += 1
        deg[j] += 1
    isolated = np.flatnonzero(deg == 0)
    if isolated.size:
        dropped = [Wrs.region_ids[idx[k]] for k in isolated]
        warnings.warn(f"dropping isolated subset regions: {dropped}")
        keep_local = deg > 0
        idx = idx[keep_local]
        pos = {int(i): k for k, i in enumerate(idx)}
        sub_edges = [
            (pos[int(i)], pos[int(j)])
            for i, j in source.edges
            if int(i) in pos and int(j) in pos
        ]
    if len(idx) < 3:
        raise StatsError(f"subset has {len(idx)} usable regions; need at least 3")
    sub_ids = tuple(Wrs.region_ids[k] for k in idx)
    sub_W = ContiguityMatrix(sub_ids, np.array(sorted(set(sub_edges)), dtype=int))
    return moran_i(arr[idx], row_standardize(sub_W))


def getis_ord(values, W: ContiguityMatrix, alpha: float = 0.05) -> LocalStatResult:
    """Self-inclusive Getis-Ord Gi* hotspot statistic with binary weights.

    z_i compares the neighbourhood sum (region i included) to its
    expectation under spatial randomness; a constant field has no
    information and is guarded to z = 0 everywhere rather than erroring.
    """
    n = W.n
    arr = np.asarray(values, dtype=float).ravel()
    if arr.shape[0] != n:
        raise StatsError(f"expected {n} values, got {arr.shape[0]}")
    if n < 3:
        raise StatsError(f"need at least 3 regions, got {n}")
    if not np.isfinite(arr).all():
        raise StatsError("non-finite value")

    xbar = arr.mean()
    s = math.sqrt(max((arr**2).mean() - xbar**2, 0.0))
    # Neighbourhood sums including self: w*_ii = 1, binary weights.
    sums = W.to_sparse() @ arr + arr
    wi = W.degrees() + 1.0  # sum of w*_ij, and also sum of squares (binary)
    z = np.zeros(n)
    with np.errstate(invalid="ignore", divide="ignore"):
        denom = s * np.sqrt(np.maximum(n * wi - wi**2, 0.0) / (n - 1))
        valid = denom > 0
        z[valid] = (sums[valid] - xbar * wi[valid]) / denom[valid]
    p = 2.0 * norm.sf(np.abs(z))
    classes = tuple(
        "hot" if (zz > 0 and pp < alpha) else "cold" if (zz < 0 and pp < alpha) else "none"
        for zz, pp in zip(z, p)
    )
    return LocalStatResult(tuple(W.region_ids), z, p, classes)
