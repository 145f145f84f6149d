"""Contiguity matrices from Delaunay triangulation, and spatial lags.

The contiguity matrix is the binary region-by-region adjacency of the
Delaunay triangulation of region centroids: two regions are neighbours iff
the triangulation contains the segment between their centroids.  Row
standardization (w_ij = 1/deg(i)) turns it into an averaging operator used
for Moran's I and for spatially lagged features.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.spatial import Delaunay, QhullError

from .data import DataError, Dataset, RegionTable


class WeightsError(ValueError):
    """Invalid geometry or mismatched region index."""


@dataclass(frozen=True)
class ContiguityMatrix:
    """Symmetric binary adjacency over an ordered list of regions.

    ``edges`` holds each unordered neighbour pair once as (i, j) index pairs
    with i < j, sorted lexicographically.
    """

    region_ids: tuple[str, ...]
    edges: np.ndarray  # (m, 2) int, i < j, lexicographically sorted

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=int).reshape(-1, 2)
        n = len(self.region_ids)
        if edges.size:
            if (edges[:, 0] >= edges[:, 1]).any():
                raise WeightsError("edges must be stored as (i, j) with i < j")
            if edges.min() < 0 or edges.max() >= n:
                raise WeightsError("edge index out of range")
        object.__setattr__(self, "edges", edges)
        deg = self.degrees()
        if n and (deg == 0).any():
            rid = self.region_ids[int(np.argmin(deg))]
            raise WeightsError(f"region {rid!r} has no neighbour")

    @property
    def n(self) -> int:
        return len(self.region_ids)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        if self.edges.size:
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def neighbor_lists(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            out[i].append(j)
            out[j].append(i)
        return [sorted(v) for v in out]

    def to_sparse(self) -> sp.csr_matrix:
        """Symmetric 0/1 CSR matrix with empty diagonal."""
        m = len(self.edges)
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        cols = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        data = np.ones(2 * m)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def is_connected(self) -> bool:
        if self.n == 0:
            return True
        seen = np.zeros(self.n, dtype=bool)
        nbrs = self.neighbor_lists()
        stack = [0]
        seen[0] = True
        while stack:
            u = stack.pop()
            for v in nbrs[u]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        return bool(seen.all())

    def index_of(self, region_ids) -> np.ndarray:
        lookup = {rid: k for k, rid in enumerate(self.region_ids)}
        try:
            return np.array([lookup[r] for r in region_ids], dtype=int)
        except KeyError as exc:
            raise WeightsError(f"region {exc.args[0]!r} not in contiguity matrix")


@dataclass(frozen=True)
class RowStandardizedWeights:
    """Row-standardized view of a contiguity matrix: w_ij = 1/deg(i)."""

    region_ids: tuple[str, ...]
    matrix: sp.csr_matrix = field(repr=False)
    source: ContiguityMatrix = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.region_ids)

    def coo(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        m = self.matrix.tocoo()
        return m.row, m.col, m.data


# ---------------------------------------------------------------------------
# Delaunay contiguity


def _incircle(points: np.ndarray, a: int, b: int, c: int, d: int) -> float:
    """Signed in-circle determinant of d against triangle (a, b, c).

    Positive when d is inside the circumcircle of a counter-clockwise
    triangle; zero when the four points are cocircular.
    """
    rows = []
    for p in (a, b, c):
        dx, dy = points[p] - points[d]
        rows.append([dx, dy, dx * dx + dy * dy])
    mat = np.array(rows)
    orient = mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0]
    det = np.linalg.det(mat)
    return det if orient > 0 else -det


def _cocircular(points, a, b, c, d) -> bool:
    det = _incircle(points, a, b, c, d)
    scale = max(1.0, float(np.abs(points[[a, b, c, d]]).max()) ** 4)
    return abs(det) <= 1e-9 * scale


def _canonical_tie_break(points: np.ndarray, triangles: set[frozenset]) -> set[frozenset]:
    """Resolve cocircular Delaunay ties toward the lexicographically
    smallest diagonal.

    For every quad of cocircular points both diagonals are valid Delaunay
    edges; repeatedly flip shared edges to the smaller (i, j) pair so the
    output triangulation is unique regardless of how qhull broke the tie.
    """
    changed = True
    while changed:
        changed = False
        edge_tris: dict[tuple[int, int], list[frozenset]] = {}
        for tri in triangles:
            t = sorted(tri)
            for e in ((t[0], t[1]), (t[0], t[2]), (t[1], t[2])):
                edge_tris.setdefault(e, []).append(tri)
        for (i, j), tris in edge_tris.items():
            if len(tris) != 2:
                continue
            t1, t2 = tris
            c = next(iter(t1 - {i, j}))
            d = next(iter(t2 - {i, j}))
            alt = (min(c, d), max(c, d))
            if alt < (i, j) and _cocircular(points, i, c, j, d):
                triangles.discard(t1)
                triangles.discard(t2)
                triangles.add(frozenset((i, c, d)))
                triangles.add(frozenset((j, c, d)))
                changed = True
                break
    return triangles


def delaunay_neighbors(regions: RegionTable) -> ContiguityMatrix:
    """Contiguity from the Delaunay triangulation of region centroids.

    Every region gets at least one neighbour and the resulting graph is
    connected, which is the point of using the triangulation on island
    geographies.  Exactly cocircular point sets (e.g. lattice cells) are
    resolved deterministically toward the lexicographically smallest
    diagonal.
    """
    points = regions.centroids()
    n = len(points)
    if n < 3:
        raise WeightsError(f"need at least 3 centroids, got {n}")

    rounded = [tuple(p) for p in points]
    seen: dict[tuple, int] = {}
    for k, p in enumerate(rounded):
        if p in seen:
            raise WeightsError(
                f"duplicate centroids: {regions.region_ids[seen[p]]!r} and "
                f"{regions.region_ids[k]!r}"
            )
        seen[p] = k

    spread = points - points.mean(axis=0)
    if abs(np.linalg.det(spread.T @ spread)) <= 1e-12 * max(
        1.0, float((spread**2).sum()) ** 2
    ):
        raise WeightsError("centroids are collinear; triangulation undefined")

    try:
        tri = Delaunay(points)
    except QhullError as exc:
        raise WeightsError(f"triangulation failed: {exc}") from exc

    triangles = {frozenset(map(int, simplex)) for simplex in tri.simplices}
    triangles = {t for t in triangles if len(t) == 3}
    triangles = _canonical_tie_break(points, triangles)

    edge_set = set()
    for t in triangles:
        a, b, c = sorted(t)
        edge_set.update([(a, b), (a, c), (b, c)])
    edges = np.array(sorted(edge_set), dtype=int).reshape(-1, 2)
    W = ContiguityMatrix(tuple(regions.region_ids), edges)
    if not W.is_connected():
        raise WeightsError("triangulation produced a disconnected graph")
    return W


# ---------------------------------------------------------------------------
# standardization and lags


def row_standardize(W: ContiguityMatrix) -> RowStandardizedWeights:
    """Weights w_ij = 1/deg(i) on the adjacency support; rows sum to one."""
    deg = W.degrees()
    if (deg == 0).any():
        rid = W.region_ids[int(np.argmin(deg))]
        raise WeightsError(f"region {rid!r} is isolated; cannot standardize")
    adj = W.to_sparse().tocsr().astype(float)
    inv = sp.diags(1.0 / deg)
    return RowStandardizedWeights(W.region_ids, (inv @ adj).tocsr(), W)


def _align_values(Wrs: RowStandardizedWeights, values):
    """Coerce region-indexed values to an array in region order."""
    if isinstance(values, (pd.Series, pd.DataFrame)):
        missing = [r for r in Wrs.region_ids if r not in values.index]
        if missing:
            raise WeightsError(f"values missing region {missing[0]!r}")
        if len(values.index) != Wrs.n:
            raise WeightsError("value index does not match region set")
        values = values.loc[list(Wrs.region_ids)]
        arr = values.to_numpy(dtype=float)
    else:
        arr = np.asarray(values, dtype=float)
        if arr.shape[0] != Wrs.n:
            raise WeightsError(
                f"expected {Wrs.n} region values, got {arr.shape[0]}"
            )
    if not np.isfinite(arr).all():
        raise WeightsError("missing value in region-indexed input")
    return arr


def spatial_lag(Wrs: RowStandardizedWeights, values):
    """Neighbour average of a region-indexed vector or matrix: (W x)_i."""
    arr = _align_values(Wrs, values)
    return Wrs.matrix @ arr


def lag_features_to_households(
    Wrs: RowStandardizedWeights, region_features: pd.DataFrame, ds: Dataset
) -> Dataset:
    """Append each region's lagged feature vector to its households.

    ``region_features`` has one row per region (region means of household
    features); the lag of those means is broadcast to every household in the
    region as new ``lag_<feature>`` columns.
    """
    lagged = spatial_lag(Wrs, region_features)
    lag_frame = pd.DataFrame(
        lagged,
        index=list(Wrs.region_ids),
        columns=[f"lag_{c}" for c in region_features.columns],
    )
    rids = ds.frame["region_id"]
    unknown = set(rids.unique()) - set(Wrs.region_ids)
    if unknown:
        raise WeightsError(f"household region {sorted(unknown)[0]!r} absent from weights")
    joined = lag_frame.reindex(rids.to_numpy()).reset_index(drop=True)
    frame = pd.concat([ds.frame.reset_index(drop=True), joined], axis=1)
    from .data import VariableSpec  # local import to avoid cycle at module load

    schema = list(ds.schema) + [VariableSpec(c, "continuous") for c in lag_frame.columns]
    return ds.with_frame(frame, schema)


# ---------------------------------------------------------------------------
# export / import


def contiguity_to_edge_csv(W: ContiguityMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["region_i", "region_j"])
        for i, j in W.edges:
            writer.writerow([W.region_ids[i], W.region_ids[j]])


def contiguity_from_edge_csv(path, region_ids) -> ContiguityMatrix:
    region_ids = tuple(region_ids)
    lookup = {rid: k for k, rid in enumerate(region_ids)}
    edges = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["region_i", "region_j"]:
            raise DataError(f"{path}: bad edge CSV header {header}")
        for row in reader:
            try:
                i, j = lookup[row[0]], lookup[row[1]]
            except KeyError as exc:
                raise DataError(f"{path}: unknown region {exc.args[0]!r}")
            edges.append((min(i, j), max(i, j)))
    return ContiguityMatrix(region_ids, np.array(sorted(set(edges)), dtype=int))


def contiguity_to_json(W: ContiguityMatrix) -> str:
    nbrs = W.neighbor_lists()
    doc = {
        "region_ids": list(W.region_ids),
        "neighbors": {
            rid: [W.region_ids[j] for j in nbrs[i]]
            for i, rid in enumerate(W.region_ids)
        },
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def contiguity_from_json(text: str) -> ContiguityMatrix:
    doc = json.loads(text)
    region_ids = tuple(doc["region_ids"])
    lookup = {rid: k for k, rid in enumerate(region_ids)}
    edges = set()
    for rid, nbrs in doc["neighbors"].items():
        i = lookup[rid]
        for other in nbrs:
            j = lookup[other]
            edges.add((min(i, j), max(i, j)))
    return ContiguityMatrix(region_ids, np.array(sorted(edges), dtype=int))
