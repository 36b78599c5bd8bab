"""Finite-difference validation of the gradient-trained backends.

Checks the analytic gradient of the actual training loss (inverse-frequency
weights included) against central differences at a seeded random parameter
point.  For the rectified-linear network the point is redrawn until every
hidden pre-activation sits well away from the activation kink, where finite
differences are not meaningful.
"""
from __future__ import annotations

import numpy as np

from . import ClassifierBackendSpec, inverse_frequency_weights
from . import logistic, mlp

_DENOM_FLOOR = 1e-3


def _central_diff(loss_fn, x0: np.ndarray, step: float) -> np.ndarray:
    grad = np.empty_like(x0)
    for i in range(x0.size):
        xp = x0.copy()
        xm = x0.copy()
        xp[i] += step
        xm[i] -= step
        grad[i] = (loss_fn(xp) - loss_fn(xm)) / (2.0 * step)
    return grad


def _max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), _DENOM_FLOOR)
    return float(np.max(np.abs(analytic - numeric) / denom))


def numeric_gradient_check(spec: ClassifierBackendSpec, X, y, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients."""
    if spec.kind not in ("logistic", "mlp"):
        raise ValueError("gradient check applies to the gradient-trained backends only")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] > 20 or X.shape[1] > 10:
        raise ValueError("gradient check is meant for small instances (<= 20 x 10)")
    sw = inverse_frequency_weights(y.astype(np.int8)) if len(set(y.tolist())) > 1 \
        else np.ones(len(y))
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed), 0x67DC]))
    hp = spec.resolved()

    if spec.kind == "logistic":
        wb = rng.normal(0.0, 0.5, size=X.shape[1] + 1)
        l2 = float(hp["l2"])
        analytic = logistic.loss_and_grad(wb, X, y, sw, l2)[1]
        numeric = _central_diff(lambda v: logistic.loss_and_grad(v, X, y, sw, l2)[0], wb, step)
        return _max_relative_error(analytic, numeric)

    layer_sizes = [X.shape[1]] + [int(hp["hidden_width"])] * int(hp["hidden_layers"]) + [1]
    l2 = float(hp["l2"])
    for _ in range(100):
        params = mlp.init_params(layer_sizes, rng)
        pre_min = np.inf
        a = X
        for W, b in params[:-1]:
            z = a @ W + b
            pre_min = min(pre_min, float(np.min(np.abs(z))))
            a = np.maximum(z, 0.0)
        if pre_min > 10.0 * step:
            break
    flat = mlp.flatten(params)
    analytic = mlp.flatten(mlp.loss_and_grads(params, X, y, sw, l2)[1])

    def loss_fn(v):
        return mlp.loss_only(mlp.unflatten(v, layer_sizes), X, y, sw, l2)

    numeric = _central_diff(loss_fn, flat, step)
    return _max_relative_error(analytic, numeric)
