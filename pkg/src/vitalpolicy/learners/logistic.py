"""Weighted logistic regression trained by gradient descent with backtracking.

The backtracking line search keeps the training loss monotonically
non-increasing; a small ridge term keeps separable fits bounded.
"""
from __future__ import annotations

import numpy as np

from . import ClassifierBackendSpec, TrainedClassifier


def sigmoid(z: np.ndarray) -> np.ndarray:
    # exp may overflow for very negative z; 1/(1+inf) is exactly the 0 we want
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


def loss_and_grad(wb: np.ndarray, X: np.ndarray, y: np.ndarray,
                  sample_weight: np.ndarray, l2: float):
    """Weighted mean cross-entropy plus ridge on the weights (bias excluded).

    wb packs [w_0..w_{d-1}, b].  Returns (loss, gradient over wb).
    """
    w, b = wb[:-1], wb[-1]
    n = X.shape[0]
    z = X @ w + b
    # cross-entropy via log(1+e^z) - y*z, stable for large |z|
    loss = float(np.mean(sample_weight * (np.logaddexp(0.0, z) - y * z))) \
        + 0.5 * l2 * float(w @ w)
    dz = sample_weight * (sigmoid(z) - y) / n
    grad = np.empty_like(wb)
    grad[:-1] = X.T @ dz + l2 * w
    grad[-1] = dz.sum()
    return loss, grad


def _loss_only(wb, X, y, sample_weight, l2):
    w, b = wb[:-1], wb[-1]
    z = X @ w + b
    return float(np.mean(sample_weight * (np.logaddexp(0.0, z) - y * z))) \
        + 0.5 * l2 * float(w @ w)


class LogisticClassifier(TrainedClassifier):
    model_type = "logistic"

    def __init__(self, backend_kind, w, b, mu, sd, training_meta):
        super().__init__(backend_kind, len(w), training_meta)
        self.w = np.asarray(w, dtype=np.float64)
        self.b = float(b)
        self.mu = np.asarray(mu, dtype=np.float64)
        self.sd = np.asarray(sd, dtype=np.float64)

    def _proba(self, X):
        return sigmoid(((X - self.mu) / self.sd) @ self.w + self.b)

    def to_dict(self):
        return {
            "model": self.model_type,
            "backend_kind": self.backend_kind,
            "w": self.w.tolist(),
            "b": self.b,
            "mu": self.mu.tolist(),
            "sd": self.sd.tolist(),
            "training_meta": self.training_meta,
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(payload["backend_kind"], payload["w"], payload["b"],
                   payload["mu"], payload["sd"], payload.get("training_meta", {}))


def train(spec: ClassifierBackendSpec, X, y, sample_weight, meta) -> LogisticClassifier:
    hp = spec.resolved()
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0.0] = 1.0
    Xs = (X - mu) / sd
    y = y.astype(np.float64)

    wb = np.zeros(X.shape[1] + 1, dtype=np.float64)
    loss, grad = loss_and_grad(wb, Xs, y, sample_weight, hp["l2"])
    losses = [loss]
    step = 1.0
    for _ in range(int(hp["max_iter"])):
        g2 = float(grad @ grad)
        if g2 < 1e-18:
            break
        step = min(step * 2.0, 64.0)
        while step > 1e-14:
            cand = wb - step * grad
            cand_loss = _loss_only(cand, Xs, y, sample_weight, hp["l2"])
            if cand_loss <= loss - 1e-4 * step * g2:
                break
            step *= 0.5
        else:
            break
        wb = cand
        prev = loss
        loss, grad = loss_and_grad(wb, Xs, y, sample_weight, hp["l2"])
        losses.append(loss)
        if prev - loss < hp["tol"]:
            break
    meta = dict(meta)
    meta["iterations"] = len(losses) - 1
    meta["train_losses"] = losses
    return LogisticClassifier(spec.kind, wb[:-1], wb[-1], mu, sd, meta)
