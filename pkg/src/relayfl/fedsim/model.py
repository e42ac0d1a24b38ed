"""Multinomial logistic regression with an L2 ridge, trained by minibatch SGD.

The flat weight vector stores a ``(d + 1, K)`` matrix row-major; the last
row is the bias.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .data import Dataset


def model_dim(n_features: int, n_classes: int) -> int:
    return (n_features + 1) * n_classes


def zero_model(n_features: int, n_classes: int) -> np.ndarray:
    return np.zeros(model_dim(n_features, n_classes))


def _augment(x: np.ndarray) -> np.ndarray:
    return np.hstack([x, np.ones((len(x), 1))])


def _probs(w: np.ndarray, xa: np.ndarray, n_classes: int) -> np.ndarray:
    logits = xa @ w.reshape(-1, n_classes)
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    return p


def loss(w: np.ndarray, data: Dataset, n_classes: int, ridge: float) -> float:
    """Mean cross-entropy plus ``ridge/2 * ||w||^2``."""
    xa = _augment(data.x)
    logits = xa @ w.reshape(-1, n_classes)
    mx = logits.max(axis=1)
    lse = mx + np.log(np.exp(logits - mx[:, None]).sum(axis=1))
    ce = np.mean(lse - logits[np.arange(len(data.y)), data.y])
    return float(ce + 0.5 * ridge * w @ w)


def gradient(w: np.ndarray, data: Dataset, n_classes: int, ridge: float) -> np.ndarray:
    xa = _augment(data.x)
    p = _probs(w, xa, n_classes)
    p[np.arange(len(data.y)), data.y] -= 1.0
    return (xa.T @ p).ravel() / len(data.y) + ridge * w


def per_sample_gradients(w: np.ndarray, data: Dataset, n_classes: int, ridge: float) -> np.ndarray:
    """Stochastic gradients of single samples, shape ``(m, dim)``."""
    xa = _augment(data.x)
    p = _probs(w, xa, n_classes)
    p[np.arange(len(data.y)), data.y] -= 1.0
    return (xa[:, :, None] * p[:, None, :]).reshape(len(data.y), -1) + ridge * w


def accuracy(w: np.ndarray, data: Dataset, n_classes: int) -> float:
    logits = _augment(data.x) @ w.reshape(-1, n_classes)
    return float(np.mean(np.argmax(logits, axis=1) == data.y))


@njit(cache=True)
def _sgd(w, xa, y, order, lr, batch, ridge):
    n_classes = w.shape[1]
    m = order.shape[1]
    g = np.zeros_like(w)
    z = np.empty(n_classes)
    for ep in range(order.shape[0]):
        for start in range(0, m, batch):
            stop = min(start + batch, m)
            g[:, :] = 0.0
            for t in range(start, stop):
                i = order[ep, t]
                for k in range(n_classes):
                    s = 0.0
                    for j in range(xa.shape[1]):
                        s += xa[i, j] * w[j, k]
                    z[k] = s
                mx = z.max()
                tot = 0.0
                for k in range(n_classes):
                    z[k] = np.exp(z[k] - mx)
                    tot += z[k]
                for k in range(n_classes):
                    r = z[k] / tot - (1.0 if k == y[i] else 0.0)
                    for j in range(xa.shape[1]):
                        g[j, k] += xa[i, j] * r
            scale = 1.0 / (stop - start)
            for j in range(w.shape[0]):
                for k in range(n_classes):
                    w[j, k] -= lr * (g[j, k] * scale + ridge * w[j, k])
    return w


def local_train(model: np.ndarray, data: Dataset, epochs: int, lr: float, batch: int,
                rng: np.random.Generator, n_classes: int, ridge: float = 0.0) -> np.ndarray:
    """``epochs`` shuffled passes of minibatch SGD; returns a new vector."""
    if len(data) == 0:
        raise ValueError("local dataset is empty")
    if epochs < 1 or batch < 1:
        raise ValueError("epochs and batch must be >= 1")
    order = np.stack([rng.permutation(len(data)) for _ in range(epochs)]).astype(np.int64)
    w = model.reshape(-1, n_classes).copy()
    w = _sgd(w, _augment(data.x), data.y.astype(np.int64), order, float(lr), int(batch),
             float(ridge))
    return w.ravel()


def save_model(path, w: np.ndarray) -> None:
    """Little-endian dump: uint64 dimension followed by float64 weights."""
    w = np.asarray(w, dtype="<f8").ravel()
    with open(path, "wb") as fh:
        fh.write(np.array([w.size], dtype="<u8").tobytes())
        fh.write(w.tobytes())


def load_model(path) -> np.ndarray:
    raw = open(path, "rb").read()
    if len(raw) < 8:
        raise ValueError("model file too short for its header")
    dim = int(np.frombuffer(raw[:8], dtype="<u8")[0])
    if len(raw) != 8 + 8 * dim:
        raise ValueError(f"model file holds {(len(raw) - 8) / 8} values, header says {dim}")
    return np.frombuffer(raw[8:], dtype="<f8").astype(float)
