"""Feature encoder and iterative parameter regression with feedback.

The encoder maps a flattened observation to a feature vector phi. The
regressor never predicts the 85-D parameter vector outright: starting from
a constant mean estimate it consumes [phi, current estimate] and emits a
residual, T times. Gradients flow through the whole unrolled chain.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .nn import Linear, MLP
from .theta import THETA_DIM


class EncoderNet:
    """Small fully-connected feature extractor over the observation vector."""

    def __init__(self, store, obs_dim, hidden, feature_dim, rng, name="encoder"):
        self.obs_dim = obs_dim
        self.feature_dim = feature_dim
        sizes = [obs_dim] + list(hidden) + [feature_dim]
        self.mlp = MLP(store, name, sizes, rng, final_relu=True)

    def __call__(self, observation):
        """(B?, obs_dim) -> (B?, feature_dim); deterministic (no dropout)."""
        x = ad.as_tensor(observation)
        single = x.ndim == 1
        if single:
            x = ad.reshape(x, (1, x.shape[0]))
        if x.shape[1] != self.obs_dim:
            raise ad.ShapeError(
                "encoder: observation dim %d, expected %d" % (x.shape[1], self.obs_dim)
            )
        phi = self.mlp(x)
        return phi[0] if single else phi


class RegressorNet:
    """Two wide layers with a dropout between them, then a linear residual head."""

    def __init__(self, store, feature_dim, rng, width=1024, dropout=0.5,
                 head_init_scale=0.01, name="regressor"):
        self.width = width
        self.dropout = dropout
        n_in = feature_dim + THETA_DIM
        self.fc1 = Linear(store, name + "/fc1", n_in, width, rng)
        self.fc2 = Linear(store, name + "/fc2", width, width, rng)
        self.head = Linear(store, name + "/head", width, THETA_DIM, rng)
        # near-zero initial residuals: the first estimates start at the mean
        # instead of a random pose, which is what makes refinement trainable
        self.head.W.data *= head_init_scale
        self.head.b.data *= head_init_scale

    def __call__(self, phi, current, train=False, rng=None):
        x = ad.concat([phi, current], axis=1)
        x = ad.relu(self.fc1(x))
        if train and self.dropout > 0.0:
            if rng is None:
                raise ValueError("training-mode regressor needs an rng for dropout")
            x = ad.dropout(x, self.dropout, rng)
        x = ad.relu(self.fc2(x))
        return self.head(x)


def ief_regress(regnet, phi, theta0, steps, train=False, rng=None):
    """Unrolled iterative refinement.

    phi: (B, F) tensor; theta0: (85,) or (B, 85) initial estimate. Returns
    the list [theta_1, ..., theta_T]; every intermediate estimate is kept
    because the prior scores all of them while the reprojection loss only
    sees the last. Raises if any estimate goes non-finite, naming the step.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    phi = ad.as_tensor(phi)
    b = phi.shape[0]
    theta0 = np.asarray(theta0, dtype=np.float64)
    if theta0.ndim == 1:
        theta0 = np.broadcast_to(theta0, (b, THETA_DIM)).copy()
    current = ad.constant(theta0)
    estimates = []
    for t in range(steps):
        try:
            delta = regnet(phi, current, train=train, rng=rng)
            current = current + delta
        except ad.NonFiniteError as exc:
            raise ad.NonFiniteError("refinement step %d: %s" % (t + 1, exc))
        estimates.append(current)
    return estimates
