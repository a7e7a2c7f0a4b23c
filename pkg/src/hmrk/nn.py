"""Parameter store, initializers and fully-connected building blocks."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import container


class ParameterStore:
    """Named float64 parameters; the unit of checkpointing.

    Every trainable tensor in the system lives here under a unique
    slash-separated name, so optimizers, checkpoints and gradient checks can
    address parameters uniformly.
    """

    def __init__(self):
        self._params = {}

    def create(self, name, value):
        if name in self._params:
            raise ValueError("parameter %r already exists" % name)
        t = ad.Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def names(self):
        return list(self._params)

    def tensors(self, prefix=""):
        return {n: t for n, t in self._params.items() if n.startswith(prefix)}

    def zero_grads(self):
        for t in self._params.values():
            t.zero_grad()

    def gradients(self, prefix=""):
        """Gradient per parameter; parameters untouched by backward get zeros."""
        out = {}
        for n, t in self._params.items():
            if n.startswith(prefix):
                out[n] = np.zeros_like(t.data) if t.grad is None else t.grad
        return out

    def export_arrays(self):
        return {n: t.data.copy() for n, t in self._params.items()}

    def load_arrays(self, arrays, strict=True):
        for n, t in self._params.items():
            if n not in arrays:
                if strict:
                    raise KeyError("checkpoint missing parameter %r" % n)
                continue
            arr = np.asarray(arrays[n], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ValueError(
                    "parameter %r: checkpoint shape %s != expected %s"
                    % (n, arr.shape, t.data.shape)
                )
            t.data = arr.copy()

    def save(self, path, meta=None):
        container.save(path, self.export_arrays(), meta=meta, kind="params")

    def load(self, path):
        arrays, meta, _ = container.load(path, expect_kind="params")
        self.load_arrays(arrays)
        return meta


def he_uniform(rng, shape, fan_in):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Linear:
    """x @ W + b over the trailing axis."""

    def __init__(self, store, name, n_in, n_out, rng):
        self.n_in = n_in
        self.n_out = n_out
        self.W = store.create(name + "/W", he_uniform(rng, (n_in, n_out), n_in))
        # nonzero bias init keeps pre-activations off exact ReLU kinks
        bound = 1.0 / np.sqrt(n_in)
        self.b = store.create(name + "/b", rng.uniform(-bound, bound, size=(n_out,)))

    def __call__(self, x):
        return ad.matmul(x, self.W) + self.b


class MLP:
    """Stack of Linear layers with ReLU between them.

    `final_relu` controls whether the last layer is also rectified; scoring
    heads keep it linear.
    """

    def __init__(self, store, name, sizes, rng, final_relu=False):
        self.layers = [
            Linear(store, "%s/fc%d" % (name, i), sizes[i], sizes[i + 1], rng)
            for i in range(len(sizes) - 1)
        ]
        self.final_relu = final_relu

    def __call__(self, x):
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < last or self.final_relu:
                x = ad.relu(x)
        return x
