import os

import numpy as np
import pytest

from hmrk import autodiff as ad
from hmrk import theta as th
from hmrk.bodymodel import NUM_KEYPOINTS
from hmrk.camera import compose_projection
from hmrk.data import (
    DataConfig,
    generate_paired,
    load_dataset,
    load_pool,
    sample_pool,
    save_dataset,
    save_pool,
    worker_count,
)
from hmrk.synthbody import TemplateConfig, default_joint_limits, synth_template


@pytest.fixture(scope="module")
def template():
    return synth_template(TemplateConfig(target_vertices=200))


class TestPool:
    def test_empty(self):
        pool = sample_pool(DataConfig(), 0, seed=0)
        assert len(pool) == 0

    def test_degenerate_limits_give_zero_poses(self):
        cfg = DataConfig(joint_limits=np.zeros((23, 3, 2)))
        pool = sample_pool(cfg, 50, seed=1)
        assert np.all(pool.poses == 0.0)

    def test_draws_respect_limit_boxes(self):
        cfg = DataConfig()
        pool = sample_pool(cfg, 10000, seed=2)
        lims = default_joint_limits().reshape(-1, 2)
        lo = lims[:, 0]
        hi = lims[:, 1]
        assert np.all(pool.poses >= lo - 1e-12)
        assert np.all(pool.poses <= hi + 1e-12)

    def test_beta_truncation(self):
        cfg = DataConfig(beta_std=2.0, beta_clip=3.0)
        pool = sample_pool(cfg, 5000, seed=3)
        assert np.abs(pool.betas).max() <= 3.0

    def test_deterministic(self):
        a = sample_pool(DataConfig(), 100, seed=4)
        b = sample_pool(DataConfig(), 100, seed=4)
        assert np.array_equal(a.poses, b.poses)
        assert np.array_equal(a.betas, b.betas)

    def test_roundtrip(self, tmp_path):
        pool = sample_pool(DataConfig(), 64, seed=5)
        save_pool(pool, tmp_path / "pool.bin")
        loaded = load_pool(tmp_path / "pool.bin")
        assert np.array_equal(loaded.betas, pool.betas)
        assert np.array_equal(loaded.poses, pool.poses)


class TestGenerate:
    def test_noiseless_keypoints_match_projection(self, template):
        cfg = DataConfig(noise_std=0.0, p_occ=0.0)
        pool = sample_pool(cfg, 50, seed=6)
        ds = generate_paired(cfg, template, pool, 20, seed=7)
        for i in range(len(ds)):
            rec = ds.record(i)
            _, _, kp2d = compose_projection(ad.constant(rec["theta_gt"]), template)
            assert np.array_equal(rec["keypoints2d"], kp2d.data)
            assert np.abs(rec["keypoints2d_clean"] - kp2d.data).max() < 1e-15

    def test_solvable_even_with_noise(self, template):
        cfg = DataConfig(noise_std=0.02, p_occ=0.2)
        pool = sample_pool(cfg, 50, seed=8)
        ds = generate_paired(cfg, template, pool, 20, seed=9)
        for i in range(len(ds)):
            rec = ds.record(i)
            _, kp3d, kp2d = compose_projection(ad.constant(rec["theta_gt"]), template)
            assert np.abs(rec["keypoints2d_clean"] - kp2d.data).max() < 1e-9
            if rec["has_3d"]:
                assert np.abs(rec["joints3d"] - kp3d.data).max() < 1e-9

    def test_out_of_frame_keypoints_invisible(self, template):
        cfg = DataConfig(noise_std=0.0, p_occ=0.0, scale_range=(1.6, 1.8))
        pool = sample_pool(cfg, 50, seed=10)
        ds = generate_paired(cfg, template, pool, 20, seed=11)
        found_truncated = False
        for i in range(len(ds)):
            rec = ds.record(i)
            outside = np.any(np.abs(rec["keypoints2d_clean"]) > 1.0, axis=0)
            assert np.all(rec["visibility"][outside] == 0)
            found_truncated = found_truncated or outside.any()
        assert found_truncated

    def test_occlusion_rate_monte_carlo(self, template):
        # visible fraction of in-frame keypoints ~ 1 - p_occ within 1%
        cfg = DataConfig(noise_std=0.0, p_occ=0.3, scale_range=(0.5, 0.7))
        pool = sample_pool(cfg, 200, seed=12)
        ds = generate_paired(cfg, template, pool, 2500, seed=13)
        in_frame = np.all(np.abs(ds.arrays["keypoints2d_clean"]) <= 1.0, axis=1)
        vis = ds.arrays["visibility"].astype(bool)
        rate = vis[in_frame].mean()
        assert abs(rate - 0.7) < 0.01

    def test_keypoint_observation_layout(self, template):
        cfg = DataConfig()
        pool = sample_pool(cfg, 20, seed=14)
        ds = generate_paired(cfg, template, pool, 5, seed=15)
        rec = ds.record(0)
        obs = rec["observation"]
        assert obs.shape == (3 * NUM_KEYPOINTS,)
        vis = rec["visibility"].astype(float)
        assert np.array_equal(obs[2 * NUM_KEYPOINTS:], vis)
        gated = rec["keypoints2d"] * vis[None, :]
        assert np.array_equal(obs[: 2 * NUM_KEYPOINTS], gated.reshape(-1))

    def test_parts_observation_mode(self, template):
        cfg = DataConfig(obs_mode="parts", image_size=24)
        pool = sample_pool(cfg, 20, seed=16)
        ds = generate_paired(cfg, template, pool, 3, seed=17)
        obs = ds.record(0)["observation"]
        assert obs.shape == (24 * 24,)
        labels = np.rint(obs * 6.0)
        assert labels.min() >= 0 and labels.max() <= 6
        assert (labels > 0).any()  # the body appears

    def test_deterministic_given_seed(self, template):
        cfg = DataConfig()
        pool = sample_pool(cfg, 30, seed=18)
        a = generate_paired(cfg, template, pool, 10, seed=19)
        b = generate_paired(cfg, template, pool, 10, seed=19)
        for key in a.arrays:
            assert np.array_equal(a.arrays[key], b.arrays[key])

    def test_thread_workers_do_not_change_results(self, template, monkeypatch):
        cfg = DataConfig()
        pool = sample_pool(cfg, 30, seed=20)
        base = generate_paired(cfg, template, pool, 12, seed=21)
        monkeypatch.setenv("HMRK_THREADS", "4")
        assert worker_count() == 4
        threaded = generate_paired(cfg, template, pool, 12, seed=21)
        for key in base.arrays:
            assert np.array_equal(base.arrays[key], threaded.arrays[key])

    def test_empty_pool_rejected(self, template):
        cfg = DataConfig()
        with pytest.raises(ValueError):
            generate_paired(cfg, template, sample_pool(cfg, 0), 5, seed=0)


class TestDatasetIO:
    def test_roundtrip_bit_identical(self, template, tmp_path):
        cfg = DataConfig()
        pool = sample_pool(cfg, 30, seed=22)
        ds = generate_paired(cfg, template, pool, 8, seed=23)
        save_dataset(ds, tmp_path / "d.bin")
        loaded = load_dataset(tmp_path / "d.bin")
        assert len(loaded) == 8
        for key in ds.arrays:
            assert np.array_equal(ds.arrays[key], loaded.arrays[key])
        assert loaded.config.noise_std == cfg.noise_std

    def test_truncated_file_rejected(self, template, tmp_path):
        from hmrk.container import ContainerError

        cfg = DataConfig()
        pool = sample_pool(cfg, 30, seed=24)
        ds = generate_paired(cfg, template, pool, 8, seed=25)
        save_dataset(ds, tmp_path / "d.bin")
        raw = (tmp_path / "d.bin").read_bytes()
        (tmp_path / "bad.bin").write_bytes(raw[: int(len(raw) * 0.8)])
        with pytest.raises(ContainerError, match="truncated|corrupt"):
            load_dataset(tmp_path / "bad.bin")

    def test_index_matches_record_count(self, template, tmp_path):
        cfg = DataConfig()
        pool = sample_pool(cfg, 30, seed=26)
        ds = generate_paired(cfg, template, pool, 11, seed=27)
        save_dataset(ds, tmp_path / "d.bin")
        loaded = load_dataset(tmp_path / "d.bin")
        assert np.array_equal(loaded.arrays["ids"], np.arange(11))
        for key in ("observation", "keypoints2d", "visibility", "theta_gt"):
            assert len(loaded.arrays[key]) == 11
