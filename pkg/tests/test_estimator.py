import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from hmrk.data import DataConfig, generate_paired, sample_pool
from hmrk.estimator import MeshRecovery
from hmrk.synthbody import TemplateConfig, synth_template
from hmrk.theta import THETA_DIM

TINY = dict(
    batch_size=8, epochs=1, steps_per_epoch=3, feature_dim=16,
    encoder_hidden=(16,), regressor_width=32, disc_embed_width=8,
    disc_overall_width=16, lr_encoder=1e-3,
)


@pytest.fixture(scope="module")
def setup():
    template = synth_template(TemplateConfig(target_vertices=160))
    cfg = DataConfig()
    pool = sample_pool(cfg, 200, seed=0)
    train_set = generate_paired(cfg, template, pool, 32, seed=1)
    val_set = generate_paired(cfg, template, pool, 8, seed=2)
    return template, pool, train_set, val_set


def test_get_params_roundtrip_and_clone():
    est = MeshRecovery(mode="unpaired", epochs=3, seed=11)
    params = est.get_params()
    assert params["mode"] == "unpaired"
    assert params["epochs"] == 3
    cloned = clone(est)
    assert cloned.get_params() == params


def test_set_params_chains():
    est = MeshRecovery().set_params(epochs=5, lambda_adv=0.5)
    assert est.epochs == 5
    assert est.lambda_adv == 0.5


def test_predict_before_fit_raises():
    est = MeshRecovery()
    with pytest.raises(NotFittedError):
        est.predict(np.zeros((2, 57)))


def test_fit_predict_shapes(setup, tmp_path):
    template, pool, train_set, val_set = setup
    est = MeshRecovery(out_dir=str(tmp_path), **TINY)
    est.fit(train_set, template=template, pool=pool, val=val_set)
    thetas = est.predict(val_set)
    assert thetas.shape == (len(val_set), THETA_DIM)
    kp3d = est.predict_keypoints3d(val_set)
    assert kp3d.shape == (len(val_set), 3, 19)
    raw = est.predict(val_set.arrays["observation"])
    assert np.array_equal(raw, thetas)


def test_predict_validates_observation_width(setup, tmp_path):
    template, pool, train_set, val_set = setup
    est = MeshRecovery(out_dir=str(tmp_path), **TINY)
    est.fit(train_set, template=template, pool=pool)
    with pytest.raises(ValueError, match="observations"):
        est.predict(np.zeros((2, 9)))


def test_fit_rejects_non_dataset(setup):
    template, pool, _, _ = setup
    with pytest.raises(TypeError):
        MeshRecovery(**TINY).fit(np.zeros((4, 57)), template=template, pool=pool)


def test_score_is_negative_reconstruction_error(setup, tmp_path):
    template, pool, train_set, val_set = setup
    est = MeshRecovery(out_dir=str(tmp_path), **TINY)
    est.fit(train_set, template=template, pool=pool, val=val_set)
    s = est.score(val_set)
    assert s < 0.0
    assert np.isfinite(s)
