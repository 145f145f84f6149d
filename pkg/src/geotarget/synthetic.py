"""Synthetic region geometries and spatially autocorrelated households.

The spatial signal is a simultaneous-autoregressive (SAR) field over the
region graph: y = (I - rho*W)^(-1) eps with row-standardized W and standard
normal innovations.  Household log expenditure adds region-regime
coefficients times i.i.d. features plus noise, so ground truth (the
coefficients, the autocorrelation and the regime map) is known exactly.

All draws come from the Philox counter-based generator keyed by
``(seed, stream)`` (see :mod:`geotarget.rng`), so any seed reproduces
bit-identically across platforms and process layouts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .data import Dataset, RegionTable, VariableSpec
from .rng import generator
from .weights import RowStandardizedWeights


class SyntheticError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticSpec:
    """Geometry, autocorrelation and household-generation parameters."""

    rows: int | None = None
    cols: int | None = None
    n_points: int | None = None
    min_separation: float = 1e-3
    rho: float = 0.5
    households_per_region: int = 50
    noise_sd: float = 0.5
    sar_sd: float = 1.0  # scale of the region-level SAR innovations
    seed: int = 0
    year: int = 2020
    province_blocks: int = 4
    urban_rule: str = "checkerboard"  # checkerboard | none | all

    def __post_init__(self):
        lattice = self.rows is not None and self.cols is not None
        if lattice == (self.n_points is not None):
            raise SyntheticError("give either lattice dims or a point count")
        if lattice and (self.rows < 2 or self.cols < 2):
            raise SyntheticError("lattice must be at least 2x2")
        if not lattice and self.n_points < 4:
            raise SyntheticError("need at least 4 random points")
        if not -1 < self.rho < 1:
            raise SyntheticError(f"rho must be in (-1,1), got {self.rho}")
        if self.noise_sd < 0 or self.sar_sd < 0:
            raise SyntheticError("noise_sd and sar_sd must be non-negative")

    @property
    def n_regions(self) -> int:
        if self.n_points is not None:
            return self.n_points
        return self.rows * self.cols


def _urban_flags(spec: SyntheticSpec, xs, ys) -> np.ndarray:
    if spec.urban_rule == "checkerboard":
        return (np.floor(xs) + np.floor(ys)).astype(int) % 2 == 0
    if spec.urban_rule == "all":
        return np.ones(len(xs), dtype=bool)
    return np.zeros(len(xs), dtype=bool)


def gen_regions(spec: SyntheticSpec) -> RegionTable:
    """Lattice centroids at integer coordinates, or separated random points.

    Province ids tile the plane in ``province_blocks`` spatial blocks per
    axis-span so provinces are contiguous; the urban flag follows the
    configured rule.
    """
    if spec.n_points is None:
        ys, xs = np.divmod(np.arange(spec.n_regions), spec.cols)
        xs = xs.astype(float)
        ys = ys.astype(float)
    else:
        rng = generator(spec.seed, "regions")
        pts: list[tuple[float, float]] = []
        attempts = 0
        side = max(1.0, np.sqrt(spec.n_points))
        while len(pts) < spec.n_points:
            attempts += 1
            if attempts > 200 * spec.n_points:
                raise SyntheticError(
                    f"cannot place {spec.n_points} points with separation "
                    f"{spec.min_separation}"
                )
            x, y = rng.uniform(0.0, side, size=2)
            if all((x - a) ** 2 + (y - b) ** 2 >= spec.min_separation**2 for a, b in pts):
                pts.append((float(x), float(y)))
        xs = np.array([p[0] for p in pts])
        ys = np.array([p[1] for p in pts])

    n = len(xs)
    width = max(int(np.ceil(np.sqrt(spec.province_blocks))), 1)
    span_x = max(xs.max() - xs.min(), 1e-9)
    span_y = max(ys.max() - ys.min(), 1e-9)
    bx = np.minimum(((xs - xs.min()) / span_x * width).astype(int), width - 1)
    by = np.minimum(((ys - ys.min()) / span_y * width).astype(int), width - 1)
    province = by * width + bx

    digits = max(3, len(str(n - 1)))
    frame = pd.DataFrame(
        {
            "region_id": [f"R{i:0{digits}d}" for i in range(n)],
            "name": [f"region {i}" for i in range(n)],
            "province_id": [f"P{p:02d}" for p in province],
            "urban_flag": _urban_flags(spec, xs, ys),
            "centroid_x": xs,
            "centroid_y": ys,
        }
    )
    return RegionTable(frame)


def gen_sar_field(Wrs: RowStandardizedWeights, rho: float, seed: int) -> np.ndarray:
    """Draw one SAR field by solving (I - rho*W) y = eps directly."""
    if not -1 < rho < 1:
        raise SyntheticError(f"rho must be in (-1,1), got {rho}")
    n = Wrs.n
    eps = generator(seed, "sar").standard_normal(n)
    if rho == 0:
        return eps
    system = np.eye(n) - rho * Wrs.matrix.toarray()
    try:
        return np.linalg.solve(system, eps)
    except np.linalg.LinAlgError as exc:
        raise SyntheticError(f"SAR system is singular: {exc}") from exc


def two_regime_map(
    regions: RegionTable, beta_a, beta_b, axis: str = "x"
) -> dict[str, np.ndarray]:
    """Assign beta_a to the low-coordinate half of regions, beta_b to the rest."""
    coord = regions.frame["centroid_x" if axis == "x" else "centroid_y"].to_numpy()
    cut = np.median(coord)
    return {
        rid: (np.asarray(beta_a, dtype=float) if c < cut else np.asarray(beta_b, dtype=float))
        for rid, c in zip(regions.region_ids, coord)
    }


def gen_households(
    regions: RegionTable,
    Wrs: RowStandardizedWeights,
    spec: SyntheticSpec,
    regime_map: dict[str, np.ndarray],
) -> tuple[Dataset, dict[str, np.ndarray]]:
    """Household features and expenditures with known coefficients.

    log pce = SAR(region) + x . beta(region regime) + noise.  Returns the
    dataset and a copy of the generating coefficients for recovery tests.
    """
    missing = set(regions.region_ids) - set(regime_map)
    if missing:
        raise SyntheticError(f"regime map missing region {sorted(missing)[0]!r}")
    betas = {rid: np.asarray(b, dtype=float) for rid, b in regime_map.items()}
    p = len(next(iter(betas.values())))
    if any(len(b) != p for b in betas.values()):
        raise SyntheticError("regime coefficient vectors have unequal length")

    sar = spec.sar_sd * gen_sar_field(Wrs, spec.rho, spec.seed)
    sar_of = dict(zip(Wrs.region_ids, sar))
    m = spec.households_per_region
    n = len(regions) * m

    features = generator(spec.seed, "features").standard_normal((n, p))
    noise = spec.noise_sd * generator(spec.seed, "noise").standard_normal(n)

    region_ids = np.repeat(np.array(regions.region_ids, dtype=object), m)
    beta_rows = np.stack([betas[r] for r in region_ids])
    log_y = (
        np.array([sar_of[r] for r in region_ids])
        + np.einsum("ij,ij->i", features, beta_rows)
        + noise
    )

    frame = pd.DataFrame(
        {
            "household_id": [f"H{i:07d}" for i in range(n)],
            "region_id": region_ids,
            "year": spec.year,
            "pce": np.exp(log_y),
        }
    )
    names = [f"x{j + 1}" for j in range(p)]
    for j, name in enumerate(names):
        frame[name] = features[:, j]
    schema = tuple(VariableSpec(name, "continuous") for name in names)
    ds = Dataset(frame, schema, provenance=f"synthetic seed={spec.seed}")
    return ds, {rid: b.copy() for rid, b in betas.items()}
