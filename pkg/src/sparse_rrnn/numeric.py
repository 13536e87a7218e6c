"""Scalar primitives shared by the model, the regularizer and the tests."""

import math

import numpy as np


def sigmoid(x):
    """Logistic function in the branch-stable form.

    Accepts a float or an ndarray; never evaluates ``exp`` of a positive
    argument, so it does not overflow for large ``|x|``.
    """
    if np.isscalar(x):
        if x >= 0:
            return 1.0 / (1.0 + math.exp(-x))
        e = math.exp(x)
        return e / (1.0 + e)
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def log1pexp(x):
    """log(1 + exp(x)) without overflow."""
    if np.isscalar(x):
        if x > 0:
            return x + math.log1p(math.exp(-x))
        return math.log1p(math.exp(x))
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def logistic_loss(score, label):
    """Log loss ``log(1 + exp(-label * score))`` for labels in {+1, -1}."""
    if np.isscalar(label):
        if label not in (1, -1):
            raise ValueError(f"label must be +1 or -1, got {label!r}")
    elif not np.all(np.isin(label, (1, -1))):
        raise ValueError("labels must be +1 or -1")
    return log1pexp(-label * score)


def finite_diff_grad(f, params, h=1e-5):
    """Central-difference gradient of scalar ``f`` at ``params``.

    ``params`` is copied; ``f`` always receives a fresh float64 array.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    p = np.array(params, dtype=np.float64)
    flat = p.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(p.copy())
        flat[i] = orig - h
        fm = f(p.copy())
        flat[i] = orig
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(p.shape)
