"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

import numpy as np

from ..errors import NumericError


def with_dtype(params, dtype):
    """Copy a parameter dict to another dtype (checking runs in float64)."""
    from .tensor import parameter

    return {name: parameter(name, p.data.astype(dtype)) for name, p in params.items()}


def grad_check(f, params, eps=1e-5, coords_per_param=16, rng=None):
    """Max relative error between analytic and central-difference gradients.

    `f` is a zero-argument callable returning a scalar Tensor computed from
    the live `params` dict; it must be deterministic (fix any randomness
    outside). Error per coordinate is
    |analytic - cd| / max(1, |cd|), cd = (f(p+eps) - f(p-eps)) / (2 eps).
    Coordinates are sampled per parameter when there are more than
    `coords_per_param`. Raises NumericError (naming the parameter) if any
    evaluation or gradient is non-finite.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    for p in params.values():
        p.grad = None
    out = f()
    if not np.isfinite(out.data).all():
        raise NumericError("objective is non-finite at the checking point")
    out.backward()
    analytic = {}
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite analytic gradient for {name}")
        analytic[name] = np.array(g, dtype=np.float64)

    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        size = flat.size
        if size <= coords_per_param:
            coords = np.arange(size)
        else:
            coords = rng.choice(size, size=coords_per_param, replace=False)
        flat_analytic = analytic[name].reshape(-1)
        for i in coords:
            original = flat[i]
            flat[i] = original + eps
            f_plus = float(f().data)
            flat[i] = original - eps
            f_minus = float(f().data)
            flat[i] = original
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericError(f"non-finite probe for {name}")
            cd = (f_plus - f_minus) / (2.0 * eps)
            rel = abs(flat_analytic[i] - cd) / max(1.0, abs(cd))
            if rel > worst:
                worst = rel
    return worst
