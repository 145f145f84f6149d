"""Gaussian naive Bayes with a variance floor."""

from __future__ import annotations

import numpy as np


def fit_naive_bayes(X: np.ndarray, y: np.ndarray, variance_floor: float) -> dict:
    classes = (0, 1)
    means, variances, priors = [], [], []
    for c in classes:
        rows = X[y == c]
        means.append(rows.mean(axis=0))
        variances.append(np.maximum(rows.var(axis=0), variance_floor))
        priors.append(len(rows) / len(X))
    return {
        "means": np.stack(means),
        "variances": np.stack(variances),
        "log_priors": np.log(np.array(priors)),
    }


def predict_naive_bayes(params: dict, X: np.ndarray) -> np.ndarray:
    """P(poor | x) from the two per-class Gaussian likelihoods."""
    log_post = np.empty((len(X), 2))
    for c in range(2):
        mu = params["means"][c]
        var = params["variances"][c]
        ll = -0.5 * (np.log(2 * np.pi * var) + (X - mu) ** 2 / var).sum(axis=1)
        log_post[:, c] = ll + params["log_priors"][c]
    log_post -= log_post.max(axis=1, keepdims=True)
    post = np.exp(log_post)
    return post[:, 1] / post.sum(axis=1)
