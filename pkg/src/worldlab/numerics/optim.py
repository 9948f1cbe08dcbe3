"""Adam optimizer over named parameter dicts."""

from __future__ import annotations

import numpy as np

from ..errors import NumericError


class Adam:
    """Adam with per-name learning-rate overrides.

    beta1=0.9, beta2=0.999, eps=1e-8 are fixed defaults; `lr_overrides`
    maps exact parameter names to their own rate (the attention-memory gate
    trains much faster than everything else).
    """

    def __init__(self, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8, lr_overrides=None):
        self.params = params  # dict name -> Tensor leaf
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.lr_overrides = dict(lr_overrides or {})
        self.t = 0
        self._m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        """Apply one update to every parameter that received a gradient."""
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.isfinite(g).all():
                raise NumericError(f"non-finite gradient for {name}")
            m = self._m[name] = self.beta1 * self._m[name] + (1.0 - self.beta1) * g
            v = self._v[name] = self.beta2 * self._v[name] + (1.0 - self.beta2) * (g * g)
            rate = self.lr_overrides.get(name, self.lr)
            update = (rate / bc1) * m / (np.sqrt(v / bc2) + self.eps)
            p.data = p.data - update

    def grad_norm(self):
        """Global L2 norm over all current gradients (for logging)."""
        total = 0.0
        for p in self.params.values():
            if p.grad is not None:
                total += float(np.sum(p.grad.astype(np.float64) ** 2))
        return float(np.sqrt(total))
