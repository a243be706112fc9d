"""Pure-numpy implementations of the policy hot kernels.

This is the reference backend; the compiled backend in ``_cykernels`` mirrors
this module function for function.  Anything numeric the policy does per
training step lives here: dense layers, their backward passes, tempered
softmax, and categorical sampling from a uniform draw.
"""

from __future__ import annotations

import numpy as np


def dense_linear(w: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    return w @ x + b


def dense_tanh(w: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.tanh(w @ x + b)


def dense_relu(w: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    y = w @ x + b
    np.maximum(y, 0.0, out=y)
    return y


def grad_dense(w: np.ndarray, x: np.ndarray, dy: np.ndarray):
    """Backward pass for y = Wx + b: returns (dW, db, dx)."""
    return np.outer(dy, x), dy.copy(), w.T @ dy


def tanh_backward(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """dy through tanh given the forward output y."""
    return dy * (1.0 - y * y)


def relu_backward(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return dy * (y > 0.0)


def softmax(logits: np.ndarray, tau: float = 1.0) -> np.ndarray:
    z = logits / tau
    z = z - z.max()
    p = np.exp(z)
    p /= p.sum()
    return p


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    return z - np.log(np.exp(z).sum())


def categorical_from_uniform(probs: np.ndarray, u) -> "int | np.ndarray":
    """Inverse-CDF draw(s): smallest index whose cumulative mass exceeds u."""
    cum = np.cumsum(probs)
    cum[-1] = 1.0  # guard against rounding shortfall at the tail
    idx = np.searchsorted(cum, u, side="right")
    if np.isscalar(u) or getattr(u, "ndim", 0) == 0:
        return int(min(idx, probs.shape[0] - 1))
    return np.minimum(idx, probs.shape[0] - 1)
