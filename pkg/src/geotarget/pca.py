"""Principal component analysis with component-count selection rules.

Fitting eigendecomposes the correlation matrix (or covariance when
``standardize=False``); the count of retained components can then come from
a fixed number, the Kaiser eigenvalue-above-one rule, a cumulative-variance
target, or the Bayesian evidence maximization of the dimensionality
(Laplace approximation over candidate ranks).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln


class PcaError(ValueError):
    pass


@dataclass(frozen=True)
class PcaModel:
    means: np.ndarray
    scales: np.ndarray  # ones when fitted on the covariance matrix
    components: np.ndarray  # (p, p_kept) orthonormal columns
    eigenvalues: np.ndarray  # non-increasing, >= 0
    standardized: bool
    kept_columns: np.ndarray  # indices into the original column layout
    n_input_columns: int

    @property
    def n_components(self) -> int:
        return self.components.shape[1]


def pca_fit(X: np.ndarray, standardize: bool = True) -> PcaModel:
    """Eigendecomposition of the correlation or covariance matrix.

    Zero-variance columns are dropped with a warning when standardizing.
    Component signs are fixed so the largest-magnitude loading of each
    component is positive.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise PcaError("X must be 2-dimensional")
    n, p = X.shape
    if n < 2:
        raise PcaError(f"need at least 2 rows, got {n}")
    if not np.isfinite(X).all():
        raise PcaError("non-finite value in X")

    means = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    kept = np.arange(p)
    if standardize:
        zero = sd == 0
        if zero.any():
            warnings.warn(f"dropping {int(zero.sum())} zero-variance column(s)")
            kept = np.flatnonzero(~zero)
        scales = sd[kept]
    else:
        scales = np.ones(len(kept))
    if len(kept) < 2:
        raise PcaError(f"need at least 2 usable columns, got {len(kept)}")

    Z = (X[:, kept] - means[kept]) / scales
    C = (Z.T @ Z) / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(C)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.maximum(eigvals[order], 0.0)
    eigvecs = eigvecs[:, order]
    # Deterministic sign: flip each component so its dominant loading is +.
    flips = np.sign(eigvecs[np.argmax(np.abs(eigvecs), axis=0), np.arange(eigvecs.shape[1])])
    flips[flips == 0] = 1.0
    eigvecs = eigvecs * flips

    return PcaModel(
        means=means[kept],
        scales=scales,
        components=eigvecs,
        eigenvalues=eigvals,
        standardized=standardize,
        kept_columns=kept,
        n_input_columns=p,
    )


def pca_transform(model: PcaModel, X: np.ndarray, m: int) -> np.ndarray:
    """Project onto the first m components after centering/scaling."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_input_columns:
        raise PcaError(
            f"X has {X.shape[1] if X.ndim == 2 else '?'} columns, "
            f"model expects {model.n_input_columns}"
        )
    if not 1 <= m <= model.n_components:
        raise PcaError(f"m must be in 1..{model.n_components}, got {m}")
    Z = (X[:, model.kept_columns] - model.means) / model.scales
    return Z @ model.components[:, :m]


def pca_inverse_transform(model: PcaModel, T: np.ndarray) -> np.ndarray:
    """Map component scores back to the original (kept) columns."""
    T = np.asarray(T, dtype=float)
    m = T.shape[1]
    Z = T @ model.components[:, :m].T
    return Z * model.scales + model.means


def kaiser_count(model: PcaModel) -> int:
    """Number of eigenvalues strictly greater than one (correlation PCA)."""
    if not model.standardized:
        raise PcaError("Kaiser rule is defined for correlation-matrix PCA")
    return int(np.sum(model.eigenvalues > 1.0))


def cumulative_variance(model: PcaModel, m: int) -> float:
    """Fraction of total variance carried by the first m components."""
    if not 1 <= m <= len(model.eigenvalues):
        raise PcaError(f"m must be in 1..{len(model.eigenvalues)}, got {m}")
    total = float(model.eigenvalues.sum())
    if total == 0:
        raise PcaError("degenerate model: zero total variance")
    return float(model.eigenvalues[:m].sum()) / total


def _log_evidence(spectrum: np.ndarray, m: int, n: int) -> float:
    """Laplace-approximated log evidence that the data has rank ``m``.

    ``spectrum`` holds the covariance eigenvalues in decreasing order.  The
    score combines the likelihood of the top-m subspace, an isotropic-noise
    fit of the remaining eigenvalues, the Stiefel-manifold prior volume and
    the Hessian volume of the Laplace approximation.
    """
    p = len(spectrum)
    if not 1 <= m <= p - 1:
        raise PcaError(f"candidate rank must be in 1..{p - 1}")
    eps = 1e-15
    if spectrum[m - 1] < eps:
        return -np.inf

    log_prior_u = -m * math.log(2.0)
    for i in range(1, m + 1):
        log_prior_u += gammaln((p - i + 1) / 2.0) - ((p - i + 1) / 2.0) * math.log(math.pi)

    log_lik = -0.5 * n * float(np.sum(np.log(spectrum[:m])))
    noise = max(float(np.sum(spectrum[m:])) / (p - m), eps)
    log_lik -= 0.5 * n * (p - m) * math.log(noise)

    n_params = p * m - m * (m + 1) / 2.0
    log_volume = 0.5 * (n_params + m) * math.log(2.0 * math.pi)

    filled = spectrum.copy()
    filled[m:] = noise
    log_hessian = 0.0
    for i in range(m):
        for j in range(i + 1, p):
            gap = (spectrum[i] - spectrum[j]) * (1.0 / filled[j] - 1.0 / filled[i])
            if gap <= 0:
                return -np.inf
            log_hessian += math.log(gap) + math.log(n)

    return log_prior_u + log_lik + log_volume - 0.5 * log_hessian - 0.5 * m * math.log(n)


def minka_dimension(X: np.ndarray) -> int:
    """Rank with maximal Laplace evidence over candidates 1..p-1.

    Deterministic: the eigendecomposition has no randomness and ties go to
    the smallest candidate.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if n <= 3:
        raise PcaError(f"need more than 3 rows, got {n}")
    if p < 2:
        raise PcaError("need at least 2 columns")
    Xc = X - X.mean(axis=0)
    spectrum = np.linalg.svd(Xc, compute_uv=False) ** 2 / n
    spectrum = np.sort(spectrum)[::-1]
    if p > n:
        spectrum = np.concatenate([spectrum, np.zeros(p - n)])
    if int(np.sum(spectrum > 1e-12 * max(spectrum[0], 1.0))) < 2:
        raise PcaError("matrix rank below 2; dimensionality selection undefined")

    scores = np.array([_log_evidence(spectrum, m, n) for m in range(1, p)])
    return int(np.argmax(scores)) + 1
