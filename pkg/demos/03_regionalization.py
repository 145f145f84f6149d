"""Contiguity-constrained divisive clustering of regions.

The algorithm removes spanning-tree edges of the contiguity graph, always
taking the cut that most reduces within-cluster feature variance, so every
cluster stays geographically connected no matter where the dendrogram is
cut.
"""

import numpy as np

from geotarget import (
    SyntheticSpec,
    assert_connected,
    constrained_divisive_cluster,
    cut_dendrogram,
    delaunay_neighbors,
    gen_regions,
    gen_sar_field,
    row_standardize,
    standardize_columns,
)

regions = gen_regions(SyntheticSpec(rows=8, cols=10, seed=0))
W = delaunay_neighbors(regions)
Wrs = row_standardize(W)

# Cluster on a smooth spatial field plus coordinates, standardized.
field = gen_sar_field(Wrs, rho=0.6, seed=3)
features = standardize_columns(
    np.column_stack([field, regions.frame["centroid_x"], regions.frame["centroid_y"]])
)

dendro = constrained_divisive_cluster(features, W, k_max=12)
print("first five splits (parent -> children, objective decrease, cut edge):")
for split in dendro.splits[:5]:
    print(
        f"  {split.parent} -> {split.children}, reduction {split.reduction:7.3f}, "
        f"cut {split.cut_edge[0]}-{split.cut_edge[1]}"
    )

for k in (4, 6, 12):
    assignment = cut_dendrogram(dendro, k)
    sizes = sorted(
        sum(1 for lbl in assignment.labels.values() if lbl == c) for c in range(1, k + 1)
    )
    print(
        f"k = {k:2d}: cluster sizes {sizes}, all connected: "
        f"{assert_connected(assignment, W)}"
    )

# The hierarchy nests: every k=12 cluster sits inside one k=4 cluster.
a4 = cut_dendrogram(dendro, 4)
a12 = cut_dendrogram(dendro, 12)
nested = all(
    len({a4.labels[r] for r in a12.members(c)}) == 1 for c in range(1, 13)
)
print("k=12 refines k=4:", nested)
