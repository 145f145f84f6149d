"""Build a contiguity matrix from region centroids and compute spatial lags.

Delaunay triangulation connects every centroid to its natural neighbours,
so even an island gets at least one neighbour; row-standardizing the
adjacency turns it into an averaging operator.
"""

import numpy as np

from geotarget import (
    SyntheticSpec,
    contiguity_to_json,
    delaunay_neighbors,
    gen_regions,
    row_standardize,
    spatial_lag,
)

# A 4x5 lattice of regions plus one far-away "island" region.
regions = gen_regions(SyntheticSpec(rows=4, cols=5, seed=0))
island = regions.frame.copy()
island.loc[len(island)] = ["R999", "island", "P99", False, 40.0, 40.0]
from geotarget import RegionTable  # noqa: E402

regions = RegionTable(island)

W = delaunay_neighbors(regions)
print(f"{W.n} regions, {len(W.edges)} neighbour pairs, connected: {W.is_connected()}")
print("degree range:", W.degrees().min(), "to", W.degrees().max())
print("the island still has neighbours:", W.neighbor_lists()[W.n - 1])

# Row-standardized weights average over neighbours: a constant stays put.
Wrs = row_standardize(W)
constant = np.full(W.n, 3.5)
print("lag of a constant field:", np.unique(spatial_lag(Wrs, constant)))

# A linear-in-x field: each region's lag is the mean x of its neighbours.
x = regions.frame["centroid_x"].to_numpy()
lag_x = spatial_lag(Wrs, x)
print("first five (x, neighbour-mean x):")
for xi, li in list(zip(x, lag_x))[:5]:
    print(f"  {xi:5.1f}  ->  {li:6.3f}")

print("\nadjacency document (first 200 chars):")
print(contiguity_to_json(W)[:200], "...")
