"""Small fully connected network trained by mini-batch gradient descent.

Three rectified-linear hidden layers feed a logistic output unit.  Training
uses a fixed step size, inverse-frequency sample weights, and early stopping
on a seeded holdout slice of the training split.
"""
from __future__ import annotations

import numpy as np

from . import ClassifierBackendSpec, TrainedClassifier
from .logistic import sigmoid

_EARLY_STOP_TOL = 1e-6
_MIN_SAMPLES_FOR_HOLDOUT = 20


def init_params(layer_sizes: list[int], rng: np.random.Generator):
    """He-normal weights, zero biases."""
    params = []
    for fan_in, fan_out in zip(layer_sizes, layer_sizes[1:]):
        W = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        params.append((W, np.zeros(fan_out)))
    return params


def forward(params, X):
    """Returns (activations per layer, output logits)."""
    acts = [X]
    a = X
    for W, b in params[:-1]:
        a = np.maximum(a @ W + b, 0.0)
        acts.append(a)
    W, b = params[-1]
    logits = (a @ W + b).ravel()
    return acts, logits


def loss_and_grads(params, X, y, sample_weight, l2, need_loss: bool = True):
    """Weighted cross-entropy plus ridge on weight matrices (biases excluded).

    The training loop only consumes the gradients; pass need_loss=False to
    skip the loss reduction there.
    """
    n = X.shape[0]
    acts, z = forward(params, X)
    loss = None
    if need_loss:
        loss = float(np.mean(sample_weight * (np.logaddexp(0.0, z) - y * z)))
        if l2:
            loss += 0.5 * l2 * sum(float((W * W).sum()) for W, _ in params)
    delta = (sample_weight * (sigmoid(z) - y) / n)[:, None]
    grads = [None] * len(params)
    for i in range(len(params) - 1, -1, -1):
        W, _ = params[i]
        a_prev = acts[i]
        dW = a_prev.T @ delta
        if l2:
            dW += l2 * W
        grads[i] = (dW, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ W.T) * (acts[i] > 0.0)
    return loss, grads


def loss_only(params, X, y, sample_weight, l2):
    _, z = forward(params, X)
    loss = float(np.mean(sample_weight * (np.logaddexp(0.0, z) - y * z)))
    if l2:
        loss += 0.5 * l2 * sum(float((W * W).sum()) for W, _ in params)
    return loss


def flatten(params) -> np.ndarray:
    return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in params])


def unflatten(flat: np.ndarray, layer_sizes: list[int]):
    params = []
    pos = 0
    for fan_in, fan_out in zip(layer_sizes, layer_sizes[1:]):
        W = flat[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        b = flat[pos:pos + fan_out]
        pos += fan_out
        params.append((W, b))
    return params


class MlpClassifier(TrainedClassifier):
    model_type = "mlp"

    def __init__(self, backend_kind, params, mu, sd, training_meta):
        super().__init__(backend_kind, params[0][0].shape[0], training_meta)
        self.params = [(np.asarray(W, dtype=np.float64), np.asarray(b, dtype=np.float64))
                       for W, b in params]
        self.mu = np.asarray(mu, dtype=np.float64)
        self.sd = np.asarray(sd, dtype=np.float64)

    def _proba(self, X):
        _, z = forward(self.params, (X - self.mu) / self.sd)
        return sigmoid(z)

    def to_dict(self):
        return {
            "model": self.model_type,
            "backend_kind": self.backend_kind,
            "layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in self.params],
            "mu": self.mu.tolist(),
            "sd": self.sd.tolist(),
            "training_meta": self.training_meta,
        }

    @classmethod
    def from_dict(cls, payload):
        params = [(np.array(layer["W"], dtype=np.float64), np.array(layer["b"], dtype=np.float64))
                  for layer in payload["layers"]]
        return cls(payload["backend_kind"], params, payload["mu"], payload["sd"],
                   payload.get("training_meta", {}))


def train(spec: ClassifierBackendSpec, X, y, sample_weight, meta,
          track_train_loss: bool = False) -> MlpClassifier:
    # training runs in float32 (standard for this kind of net, and twice as
    # fast on one core); the final parameters are stored as float64 so the
    # in-memory model and a save/load round trip predict identically
    hp = spec.resolved()
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0.0] = 1.0
    Xs = ((X - mu) / sd).astype(np.float32)
    y = y.astype(np.float32)
    sample_weight = sample_weight.astype(np.float32)
    n = Xs.shape[0]

    layer_sizes = [Xs.shape[1]] + [int(hp["hidden_width"])] * int(hp["hidden_layers"]) + [1]
    params = [(W.astype(np.float32), b.astype(np.float32))
              for W, b in init_params(layer_sizes, rng)]

    if n >= _MIN_SAMPLES_FOR_HOLDOUT:
        perm = rng.permutation(n)
        n_val = max(1, int(round(hp["holdout_fraction"] * n)))
        val_idx, train_idx = perm[:n_val], perm[n_val:]
    else:
        rng.permutation(n)  # keep the rng stream identical either way
        val_idx, train_idx = np.empty(0, dtype=np.intp), np.arange(n)
    Xt, yt, wt = Xs[train_idx], y[train_idx], sample_weight[train_idx]
    Xv, yv, wv = Xs[val_idx], y[val_idx], sample_weight[val_idx]

    lr = float(hp["learning_rate"])
    l2 = float(hp["l2"])
    batch = int(hp["batch_size"])
    patience = int(hp["patience"])
    best_val = np.inf
    best_params = None
    stale = 0
    val_losses = []
    train_losses = []
    epochs_run = 0
    for _ in range(int(hp["epochs"])):
        order = rng.permutation(Xt.shape[0])
        for start in range(0, Xt.shape[0], batch):
            idx = order[start:start + batch]
            _, grads = loss_and_grads(params, Xt[idx], yt[idx], wt[idx], l2,
                                      need_loss=False)
            params = [(W - lr * dW, b - lr * db)
                      for (W, b), (dW, db) in zip(params, grads)]
        epochs_run += 1
        if track_train_loss:
            train_losses.append(loss_only(params, Xt, yt, wt, l2))
        if len(val_idx):
            vl = loss_only(params, Xv, yv, wv, l2)
            val_losses.append(vl)
            if vl < best_val - _EARLY_STOP_TOL:
                best_val = vl
                best_params = [(W.copy(), b.copy()) for W, b in params]
                stale = 0
            else:
                stale += 1
                if stale >= patience:
                    break
    if best_params is not None:
        params = best_params
    params = [(W.astype(np.float64), b.astype(np.float64)) for W, b in params]
    meta = dict(meta)
    meta["epochs_run"] = epochs_run
    meta["holdout_size"] = int(len(val_idx))
    if val_losses:
        meta["best_val_loss"] = float(min(val_losses))
    if track_train_loss:
        meta["train_losses"] = train_losses
    return MlpClassifier(spec.kind, params, mu, sd, meta)
