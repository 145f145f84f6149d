"""Single-hidden-layer network: 32 rectified units, sigmoid output,
cross-entropy loss, mini-batch gradient descent.

The loss/gradient pair is exposed as a pure function of a flat parameter
vector so the analytic gradients can be checked against central finite
differences.
"""

from __future__ import annotations

import numpy as np

from ..rng import generator
from .logistic import log_loss, sigmoid


def init_params(n_features: int, hidden_units: int, seed: int) -> dict:
    rng = generator(seed, "init")
    return {
        "W1": rng.normal(0.0, np.sqrt(2.0 / n_features), size=(n_features, hidden_units)),
        "b1": np.zeros(hidden_units),
        "W2": rng.normal(0.0, np.sqrt(1.0 / hidden_units), size=hidden_units),
        "b2": 0.0,
    }


def flatten_params(params: dict) -> np.ndarray:
    return np.concatenate(
        [
            np.asarray(params["W1"], dtype=float).ravel(),
            np.asarray(params["b1"], dtype=float),
            np.asarray(params["W2"], dtype=float),
            np.atleast_1d(float(params["b2"])),
        ]
    )


def unflatten_params(theta: np.ndarray, n_features: int, hidden_units: int) -> dict:
    k = n_features * hidden_units
    return {
        "W1": theta[:k].reshape(n_features, hidden_units),
        "b1": theta[k : k + hidden_units],
        "W2": theta[k + hidden_units : k + 2 * hidden_units],
        "b2": float(theta[-1]),
    }


def forward(params: dict, X: np.ndarray) -> np.ndarray:
    hidden = np.maximum(X @ params["W1"] + params["b1"], 0.0)
    return sigmoid(hidden @ params["W2"] + params["b2"])


def loss_and_grad(params: dict, X: np.ndarray, y: np.ndarray) -> tuple[float, dict]:
    """Mean cross-entropy and its analytic gradient on one batch."""
    n = len(X)
    pre = X @ params["W1"] + params["b1"]
    hidden = np.maximum(pre, 0.0)
    prob = sigmoid(hidden @ params["W2"] + params["b2"])
    loss = log_loss(y, prob)

    d_logit = (prob - y) / n
    grad_W2 = hidden.T @ d_logit
    grad_b2 = float(d_logit.sum())
    d_hidden = np.outer(d_logit, params["W2"]) * (pre > 0)
    grad_W1 = X.T @ d_hidden
    grad_b1 = d_hidden.sum(axis=0)
    return loss, {"W1": grad_W1, "b1": grad_b1, "W2": grad_W2, "b2": grad_b2}


def fit_neural_network(
    X: np.ndarray,
    y: np.ndarray,
    hidden_units: int,
    batch_size: int,
    epochs: int,
    learning_rate: float,
    seed: int,
) -> dict:
    n, p = X.shape
    params = init_params(p, hidden_units, seed)
    history = [log_loss(y, forward(params, X))]
    for epoch in range(epochs):
        order = generator(seed, "shuffle", epoch).permutation(n)
        for start in range(0, n, batch_size):
            batch = order[start : start + batch_size]
            _, grads = loss_and_grad(params, X[batch], y[batch])
            params["W1"] = params["W1"] - learning_rate * grads["W1"]
            params["b1"] = params["b1"] - learning_rate * grads["b1"]
            params["W2"] = params["W2"] - learning_rate * grads["W2"]
            params["b2"] = params["b2"] - learning_rate * grads["b2"]
        history.append(log_loss(y, forward(params, X)))
    params["loss_history"] = history
    return params


def predict_neural_network(params: dict, X: np.ndarray) -> np.ndarray:
    return forward(params, X)
