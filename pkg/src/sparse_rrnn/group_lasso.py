"""Group-lasso penalty over per-state parameter groups.

penalty = lam * sum_g sqrt(dim(w_g)) * ||w_g||_2

Groups are passed either as the ``(wfsa, state, values)`` triples returned by
:func:`sparse_rrnn.model.group_view` or as bare arrays.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PenaltyConfig:
    lam: float = 0.0

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"regularization strength must be >= 0, got {self.lam}")


def stable_norm(a, axis=None):
    """l2 norm that scales by the largest entry first, so tiny values do not underflow."""
    a = np.asarray(a, dtype=np.float64)
    scale = np.max(np.abs(a), axis=axis, keepdims=True) if a.size else np.zeros((1,) * a.ndim)
    safe = np.where(scale > 0, scale, 1.0)
    out = scale * np.sqrt(np.sum((a / safe) ** 2, axis=axis, keepdims=True))
    return out.item() if axis is None else np.squeeze(out, axis=axis)


def _values(g):
    if isinstance(g, tuple):
        g = g[-1]
    return np.asarray(g, dtype=np.float64).reshape(-1)


def penalty(groups, config):
    total = 0.0
    for g in groups:
        w = _values(g)
        total += np.sqrt(w.size) * stable_norm(w)
    return config.lam * total


def penalty_subgradient(groups, config):
    """One subgradient array per group; the zero vector for all-zero groups."""
    out = []
    for g in groups:
        w = _values(g)
        norm = stable_norm(w)
        if norm == 0:
            out.append(np.zeros_like(w))
        else:
            out.append(config.lam * np.sqrt(w.size) * w / norm)
    return out


def group_norms(groups):
    """Raw (not sqrt(dim)-weighted) l2 norm of every group, in input order."""
    out = []
    for idx, g in enumerate(groups):
        if isinstance(g, tuple):
            out.append((g[0], g[1], float(stable_norm(_values(g)))))
        else:
            out.append((None, idx, float(stable_norm(_values(g)))))
    return out


def wfsa_penalty_and_grad(params, lam):
    """Penalty and subgradient for one WFSA's ``(k, dim)`` array (row = group)."""
    dim = params.shape[1]
    norms = stable_norm(params, axis=1)
    value = lam * np.sqrt(dim) * norms.sum()
    safe = np.where(norms > 0, norms, 1.0)
    grad = np.where((norms > 0)[:, None], lam * np.sqrt(dim) * params / safe[:, None], 0.0)
    return value, grad


def model_penalty(model, lam):
    return sum(wfsa_penalty_and_grad(w.params, lam)[0] for w in model.wfsas)


def add_penalty_subgradient(grad, model, lam):
    """Add the penalty subgradient into a model-shaped gradient; returns the penalty."""
    total = 0.0
    for gw, w in zip(grad.wfsas, model.wfsas):
        value, g = wfsa_penalty_and_grad(w.params, lam)
        gw.params += g
        total += value
    return total
