"""Adam optimizer over named parameter tensors."""

from __future__ import annotations

import numpy as np

from .autodiff import NonFiniteError


class Adam:
    """Standard Adam with bias correction.

    update = -lr * m_hat / (sqrt(v_hat) + eps)

    Operates on a fixed dict name -> Tensor; `step()` reads each tensor's
    .grad (missing grads count as zero). State serializes exactly so resumed
    runs follow the identical trajectory.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params.items()}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            elif not np.all(np.isfinite(g)):
                raise NonFiniteError("non-finite gradient for parameter %r" % name)
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def export_arrays(self, prefix):
        out = {prefix + "/t": np.array([self.t], dtype=np.int64)}
        for n in self.params:
            out[prefix + "/m/" + n] = self.m[n].copy()
            out[prefix + "/v/" + n] = self.v[n].copy()
        return out

    def load_arrays(self, arrays, prefix):
        self.t = int(arrays[prefix + "/t"][0])
        for n in self.params:
            self.m[n] = np.asarray(arrays[prefix + "/m/" + n], dtype=np.float64).copy()
            self.v[n] = np.asarray(arrays[prefix + "/v/" + n], dtype=np.float64).copy()
