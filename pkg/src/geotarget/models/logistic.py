"""Logistic classifiers: full-batch descent with line search, and plain SGD."""

from __future__ import annotations

import numpy as np

from ..rng import generator


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_loss(y: np.ndarray, prob: np.ndarray) -> float:
    p = np.clip(prob, 1e-12, 1 - 1e-12)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def _objective(w, b, X, y, l2):
    prob = sigmoid(X @ w + b)
    return log_loss(y, prob) + 0.5 * l2 * float(w @ w), prob


def fit_logistic(
    X: np.ndarray, y: np.ndarray, l2_penalty: float, max_iter: int, tol: float
) -> dict:
    """Gradient descent with backtracking line search on the penalized
    cross-entropy.  The intercept is unpenalized."""
    n, p = X.shape
    w = np.zeros(p)
    b = 0.0
    loss, prob = _objective(w, b, X, y, l2_penalty)
    history = [loss]
    step = 1.0
    for _ in range(max_iter):
        err = prob - y
        grad_w = X.T @ err / n + l2_penalty * w
        grad_b = float(err.mean())
        gnorm = float(grad_w @ grad_w) + grad_b**2
        if gnorm < tol**2:
            break
        # Backtracking: halve until Armijo decrease, then try growing again.
        step = min(step * 2.0, 1e4)
        while step > 1e-12:
            new_loss, new_prob = _objective(
                w - step * grad_w, b - step * grad_b, X, y, l2_penalty
            )
            if new_loss <= loss - 0.5 * step * gnorm:
                break
            step *= 0.5
        if step <= 1e-12:
            break
        w = w - step * grad_w
        b = b - step * grad_b
        loss, prob = new_loss, new_prob
        history.append(loss)
    return {"coef": w, "intercept": b, "loss_history": history}


def fit_stochastic_gradient(
    X: np.ndarray, y: np.ndarray, learning_rate: float, epochs: int, seed: int
) -> dict:
    """One-sample-at-a-time SGD on the logistic loss.

    Rows are reshuffled each epoch from a (seed, epoch) stream, so training
    is reproducible regardless of where the data came from.
    """
    n, p = X.shape
    w = np.zeros(p)
    b = 0.0
    history = [log_loss(y, sigmoid(X @ w + b))]
    for epoch in range(epochs):
        order = generator(seed, "shuffle", epoch).permutation(n)
        for i in order:
            xi = X[i]
            err = sigmoid(np.array([xi @ w + b]))[0] - y[i]
            w -= learning_rate * err * xi
            b -= learning_rate * err
        history.append(log_loss(y, sigmoid(X @ w + b)))
    return {"coef": w, "intercept": b, "loss_history": history}


def predict_logistic(params: dict, X: np.ndarray) -> np.ndarray:
    return sigmoid(X @ params["coef"] + params["intercept"])
