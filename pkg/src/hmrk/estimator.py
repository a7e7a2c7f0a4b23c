"""Scikit-learn style front end around training and inference.

MeshRecovery exposes the whole pipeline as a fit/predict estimator so it
composes with the usual ecosystem tooling (get_params/set_params, clone,
NotFittedError). X is either a generated dataset or a plain (n, obs_dim)
observation matrix; the body template and parameter pool ride in as fit
keywords.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import autodiff as ad
from . import theta as th
from .bodymodel import NUM_BODY_KEYPOINTS
from .camera import compose_projection
from .data import SyntheticDataset
from .metrics import evaluate_joints
from .training import TrainConfig, train_loop
from .validation import as_float_array


class MeshRecovery(BaseEstimator):
    """Single-view body mesh regressor with an adversarial pose/shape prior.

    Parameters mirror TrainConfig; see that class for semantics. After
    fit(), the trained state is available as `state_` and predictions are
    85-D parameter vectors (pose 69, shape 10, rotation 3, translation 2,
    scale 1).
    """

    def __init__(self, mode="paired", batch_size=64, lr_encoder=1e-5,
                 lr_disc=1e-4, epochs=10, steps_per_epoch=0, ief_steps=3,
                 lambda_reproj=60.0, lambda_3d=60.0, lambda_adv=1.0,
                 feature_dim=256, encoder_hidden=(256,), regressor_width=1024,
                 dropout=0.5, disc_embed_width=32, disc_overall_width=1024,
                 seed=0, out_dir=None):
        self.mode = mode
        self.batch_size = batch_size
        self.lr_encoder = lr_encoder
        self.lr_disc = lr_disc
        self.epochs = epochs
        self.steps_per_epoch = steps_per_epoch
        self.ief_steps = ief_steps
        self.lambda_reproj = lambda_reproj
        self.lambda_3d = lambda_3d
        self.lambda_adv = lambda_adv
        self.feature_dim = feature_dim
        self.encoder_hidden = encoder_hidden
        self.regressor_width = regressor_width
        self.dropout = dropout
        self.disc_embed_width = disc_embed_width
        self.disc_overall_width = disc_overall_width
        self.seed = seed
        self.out_dir = out_dir

    def _config(self):
        return TrainConfig(
            mode=self.mode, batch_size=self.batch_size,
            lr_encoder=self.lr_encoder, lr_disc=self.lr_disc,
            epochs=self.epochs, steps_per_epoch=self.steps_per_epoch,
            ief_steps=self.ief_steps, lambda_reproj=self.lambda_reproj,
            lambda_3d=self.lambda_3d, lambda_adv=self.lambda_adv,
            feature_dim=self.feature_dim,
            encoder_hidden=tuple(self.encoder_hidden),
            regressor_width=self.regressor_width, dropout=self.dropout,
            disc_embed_width=self.disc_embed_width,
            disc_overall_width=self.disc_overall_width, seed=self.seed,
        )

    def fit(self, X, y=None, *, template, pool, val=None):
        """Train on a SyntheticDataset; y is unused (targets live in X)."""
        if not isinstance(X, SyntheticDataset):
            raise TypeError("fit expects a SyntheticDataset; got %r" % type(X).__name__)
        import tempfile

        out_dir = self.out_dir or tempfile.mkdtemp(prefix="hmrk-fit-")
        state, history = train_loop(self._config(), template, X, pool,
                                    val_set=val, out_dir=out_dir)
        self.state_ = state
        self.template_ = template
        self.history_path_ = history
        return self

    def _check_fitted(self):
        if not hasattr(self, "state_"):
            raise NotFittedError("this MeshRecovery instance is not fitted yet")

    def _observations(self, X):
        if isinstance(X, SyntheticDataset):
            return X.arrays["observation"]
        arr = as_float_array(X, "X")
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] != self.state_.obs_dim:
            raise ValueError(
                "X must be (n, %d) observations, got %s" % (self.state_.obs_dim, arr.shape)
            )
        return arr

    def predict(self, X):
        """85-D parameter vectors for each observation, (n, 85)."""
        self._check_fitted()
        return self.state_.predict_thetas(self._observations(X))

    def predict_keypoints3d(self, X):
        """Camera-frame 3D keypoints per observation, (n, 3, P)."""
        self._check_fitted()
        thetas = self.predict(X)
        _, kp3d, _ = compose_projection(ad.constant(thetas), self.template_)
        return kp3d.data

    def score(self, X, y=None):
        """Negative mean reconstruction error (mm) on an annotated dataset."""
        self._check_fitted()
        if not isinstance(X, SyntheticDataset):
            raise TypeError("score expects a SyntheticDataset with 3D ground truth")
        preds = self.predict_keypoints3d(X)[:, :, :NUM_BODY_KEYPOINTS]
        gts = X.arrays["joints3d"][:, :, :NUM_BODY_KEYPOINTS]
        report = evaluate_joints(preds, gts)
        return -report.mean_reconst
