"""PCA with three ways to choose how many components to keep.

Data is built with ten planted factors (three indicator variables each),
so the Kaiser rule should find exactly ten eigenvalues above one, while the
evidence-based rule responds to the actual signal-to-noise structure.
"""

import math

import numpy as np

from geotarget import cumulative_variance, kaiser_count, minka_dimension, pca_fit, pca_transform

rng = np.random.default_rng(0)
n, n_factors, per_factor, load = 4000, 10, 3, 0.85
factors = rng.standard_normal((n, n_factors))
columns = [
    load * factors[:, f] + math.sqrt(1 - load**2) * rng.standard_normal(n)
    for f in range(n_factors)
    for _ in range(per_factor)
]
X = np.column_stack(columns)

model = pca_fit(X, standardize=True)
print("scree (component, eigenvalue, cumulative variance):")
for m in range(1, 13):
    print(
        f"  {m:2d}  {model.eigenvalues[m - 1]:7.3f}  "
        f"{cumulative_variance(model, m):6.1%}"
    )

print(f"\nKaiser rule (eigenvalues > 1):      {kaiser_count(model)} components")
print(f"evidence maximization (Laplace):    {minka_dimension(X)} components")
target = 0.9
smallest = next(m for m in range(1, 31) if cumulative_variance(model, m) >= target)
print(f"smallest m with >= {target:.0%} variance:  {smallest} components")

# Projections are uncorrelated and carry the eigenvalue variances.
T = pca_transform(model, X, 10)
print("\nfirst three projection variances:", np.round(T.var(axis=0, ddof=1)[:3], 3))
off = np.corrcoef(T, rowvar=False) - np.eye(10)
print("largest off-diagonal projection correlation:", f"{np.abs(off).max():.2e}")
