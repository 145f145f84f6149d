import numpy as np
import pandas as pd
import pytest

from geotarget import ContiguityMatrix, Dataset, RegionTable, VariableSpec


def make_regions(points, province="P0", urban=None):
    """RegionTable from a list of (x, y) centroids, ids R000, R001, ..."""
    n = len(points)
    urban = urban if urban is not None else [True] * n
    frame = pd.DataFrame(
        {
            "region_id": [f"R{i:03d}" for i in range(n)],
            "name": [f"region {i}" for i in range(n)],
            "province_id": [province] * n if isinstance(province, str) else province,
            "urban_flag": urban,
            "centroid_x": [float(p[0]) for p in points],
            "centroid_y": [float(p[1]) for p in points],
        }
    )
    return RegionTable(frame)


def rook_lattice(rows, cols):
    """Rook-adjacency ContiguityMatrix on a rows x cols grid, row-major ids."""
    n = rows * cols
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.append((i, i + 1))
            if r + 1 < rows:
                edges.append((i, i + cols))
    ids = tuple(f"R{i:03d}" for i in range(n))
    return ContiguityMatrix(ids, np.array(sorted(edges), dtype=int))


def make_dataset(pce, region_ids=None, years=None, features=None, schema=None):
    """Small Dataset helper; features is {name: values}."""
    n = len(pce)
    frame = pd.DataFrame(
        {
            "household_id": [f"H{i:04d}" for i in range(n)],
            "region_id": region_ids if region_ids is not None else ["R000"] * n,
            "year": years if years is not None else [2020] * n,
            "pce": pce,
        }
    )
    features = features or {}
    for name, values in features.items():
        frame[name] = values
    if schema is None:
        schema = tuple(VariableSpec(name, "continuous") for name in features)
    return Dataset(frame, schema)


@pytest.fixture
def toy_regions():
    return make_regions([(0, 0), (1, 0), (0, 1), (1, 1)])
