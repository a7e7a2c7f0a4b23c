"""Synthetic training data: parameter pool and paired samples.

The pose/shape pool stands in for motion-capture fits: shapes are truncated
Gaussians, poses are drawn inside per-joint axis-angle limit boxes. Paired
samples draw from the pool, sample a camera, project the model's keypoints
into the crop frame, then corrupt: Gaussian keypoint noise, visibility
dropped for out-of-crop points and with an occlusion probability. The
generating parameters ride along for oracle evaluation only.

Observations come in two modes: "keypoints" packs [x * v, y * v, v] per
keypoint into a flat vector; "parts" rasterizes the body into a small part
label image.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import os
import concurrent.futures

import numpy as np

from . import autodiff as ad
from . import container
from . import theta as th
from .bodymodel import NUM_KEYPOINTS, rodrigues_np
from .camera import compose_projection
from .rasterize import render_parts
from .synthbody import default_joint_limits


def worker_count():
    """Thread cap for data generation, from HMRK_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("HMRK_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class DataConfig:
    obs_mode: str = "keypoints"        # "keypoints" | "parts"
    image_size: int = 64
    noise_std: float = 0.01            # keypoint noise, crop units
    p_occ: float = 0.1                 # random occlusion probability
    with_3d_fraction: float = 0.5      # fraction of samples carrying 3D annotations
    beta_std: float = 1.0
    beta_clip: float = 3.0
    scale_range: tuple = (0.6, 1.2)
    trans_range: float = 0.3
    yaw_range: tuple = (-np.pi, np.pi)
    tilt_range: float = 0.15           # pitch/roll, uniform +-
    joint_limits: np.ndarray = field(default_factory=default_joint_limits)  # (23, 3, 2)

    def to_meta(self):
        d = asdict(self)
        d["joint_limits"] = np.asarray(self.joint_limits).tolist()
        d["scale_range"] = list(self.scale_range)
        d["yaw_range"] = list(self.yaw_range)
        return d

    @classmethod
    def from_meta(cls, meta):
        d = dict(meta)
        d["joint_limits"] = np.asarray(d["joint_limits"], dtype=np.float64)
        d["scale_range"] = tuple(d["scale_range"])
        d["yaw_range"] = tuple(d["yaw_range"])
        return cls(**d)


@dataclass
class MocapPool:
    betas: np.ndarray   # (n, 10)
    poses: np.ndarray   # (n, 69)

    def __len__(self):
        return len(self.betas)


def sample_pool(config, n, seed=0):
    """Draw an unpaired parameter pool; deterministic in (config, seed)."""
    rng = np.random.default_rng(seed)
    betas = rng.normal(0.0, config.beta_std, size=(n, th.SHAPE_DIM))
    betas = np.clip(betas, -config.beta_clip, config.beta_clip)
    lims = np.asarray(config.joint_limits, dtype=np.float64)
    lo = lims[:, :, 0].reshape(-1)
    hi = lims[:, :, 1].reshape(-1)
    poses = rng.uniform(0.0, 1.0, size=(n, th.POSE_DIM)) * (hi - lo) + lo
    return MocapPool(betas=betas, poses=poses)


def sample_camera(config, rng):
    """Scale, axis-angle rotation and translation for one sample."""
    s = rng.uniform(*config.scale_range)
    t = rng.uniform(-config.trans_range, config.trans_range, size=2)
    yaw = rng.uniform(*config.yaw_range)
    pitch = rng.uniform(-config.tilt_range, config.tilt_range)
    roll = rng.uniform(-config.tilt_range, config.tilt_range)
    r = (
        rodrigues_np([0.0, yaw, 0.0])
        @ rodrigues_np([pitch, 0.0, 0.0])
        @ rodrigues_np([0.0, 0.0, roll])
    )
    return s, _rotmat_to_axis_angle(r), t


def _rotmat_to_axis_angle(r):
    """Log map of a rotation matrix (angle in [0, pi])."""
    cos_t = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos_t)
    if angle < 1e-12:
        return np.zeros(3)
    if np.pi - angle < 1e-6:
        # near a half turn: axis from the symmetric part
        m = (r + np.eye(3)) / 2.0
        axis = np.sqrt(np.clip(np.diag(m), 0.0, None))
        # fix signs from the off-diagonals
        if m[0, 1] < 0:
            axis[1] = -axis[1]
        if m[0, 2] < 0:
            axis[2] = -axis[2]
        if axis[0] == 0.0 and m[1, 2] < 0:
            axis[2] = -abs(axis[2])
        return axis / np.linalg.norm(axis) * angle
    vec = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    return vec / (2.0 * np.sin(angle)) * angle


class SyntheticDataset:
    """Column-oriented record storage with per-record access."""

    def __init__(self, config, arrays):
        self.config = config
        self.arrays = arrays

    def __len__(self):
        return len(self.arrays["theta_gt"])

    @property
    def obs_dim(self):
        return self.arrays["observation"].shape[1] if self.arrays["observation"].ndim == 2 else None

    def record(self, i):
        a = self.arrays
        rec = {
            "id": int(a["ids"][i]),
            "observation": a["observation"][i],
            "keypoints2d": a["keypoints2d"][i],
            "keypoints2d_clean": a["keypoints2d_clean"][i],
            "visibility": a["visibility"][i],
            "has_3d": bool(a["has_3d"][i]),
            "theta_gt": a["theta_gt"][i],
        }
        if rec["has_3d"]:
            rec["joints3d"] = a["joints3d"][i]
            rec["beta"] = a["beta_gt"][i]
            rec["pose"] = a["pose_gt"][i]
        return rec

    def indices_with_3d(self):
        return np.flatnonzero(self.arrays["has_3d"])

    def indices_2d_only(self):
        return np.flatnonzero(~self.arrays["has_3d"].astype(bool))


def keypoint_observation(kp2d, visibility):
    """Flat [x * v, y * v, v] observation vector, (3P,)."""
    v = visibility.astype(np.float64)
    return np.concatenate([(kp2d * v[None, :]).reshape(-1), v])


def observation_dim(config):
    if config.obs_mode == "keypoints":
        return 3 * NUM_KEYPOINTS
    return config.image_size * config.image_size


def _generate_one(config, template, beta, pose, cam, seed):
    """One sample record given its parameters and private seed."""
    rng = np.random.default_rng(seed)
    s, rot_aa, trans = cam
    theta_gt = th.pack(pose, beta, rot_aa, trans, [s])
    _, kp3d, kp2d = compose_projection(ad.constant(theta_gt), template)
    kp3d = kp3d.data
    kp2d_clean = kp2d.data

    in_frame = np.all(np.abs(kp2d_clean) <= 1.0, axis=0)
    occluded = rng.random(NUM_KEYPOINTS) < config.p_occ
    vis = in_frame & ~occluded
    noisy = kp2d_clean + rng.normal(0.0, config.noise_std, size=kp2d_clean.shape)

    if config.obs_mode == "keypoints":
        obs = keypoint_observation(noisy, vis)
    elif config.obs_mode == "parts":
        mesh, _, _ = compose_projection(ad.constant(theta_gt), template)
        label = render_parts(
            mesh.data, template.faces, template.vertex_parts() + 1,
            scale=s, rot=rodrigues_np(rot_aa), trans=trans,
            size=config.image_size,
        )
        obs = (label.labels.astype(np.float64) / 6.0).reshape(-1)
    else:
        raise ValueError("unknown obs_mode %r" % config.obs_mode)
    return theta_gt, kp3d, kp2d_clean, noisy, vis, obs


def generate_paired(config, template, pool, n, seed=0):
    """Generate n paired samples; deterministic in (config, pool, seed).

    Sample i draws its corruption from a private generator seeded by
    (seed, i), so generation may run on worker threads without changing
    the result.
    """
    if len(pool) == 0:
        raise ValueError("parameter pool is empty")
    rng = np.random.default_rng(seed)
    pick = rng.integers(0, len(pool), size=n)
    cams = [sample_camera(config, rng) for _ in range(n)]
    has_3d = rng.random(n) < config.with_3d_fraction
    noise_seeds = rng.integers(0, 2**63 - 1, size=n)

    obs_dim = observation_dim(config)
    out = {
        "ids": np.arange(n, dtype=np.int64),
        "observation": np.zeros((n, obs_dim)),
        "keypoints2d": np.zeros((n, 2, NUM_KEYPOINTS)),
        "keypoints2d_clean": np.zeros((n, 2, NUM_KEYPOINTS)),
        "visibility": np.zeros((n, NUM_KEYPOINTS), dtype=np.uint8),
        "has_3d": has_3d.astype(np.uint8),
        "joints3d": np.zeros((n, 3, NUM_KEYPOINTS)),
        "theta_gt": np.zeros((n, th.THETA_DIM)),
        "beta_gt": pool.betas[pick].copy(),
        "pose_gt": pool.poses[pick].copy(),
    }

    def fill(i):
        theta_gt, kp3d, clean, noisy, vis, obs = _generate_one(
            config, template, pool.betas[pick[i]], pool.poses[pick[i]],
            cams[i], noise_seeds[i],
        )
        out["theta_gt"][i] = theta_gt
        out["joints3d"][i] = kp3d
        out["keypoints2d_clean"][i] = clean
        out["keypoints2d"][i] = noisy
        out["visibility"][i] = vis
        out["observation"][i] = obs

    workers = worker_count()
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool_exec:
            list(pool_exec.map(fill, range(n)))
    else:
        for i in range(n):
            fill(i)
    return SyntheticDataset(config, out)


DATASET_KIND = "dataset"
POOL_KIND = "pool"


def save_dataset(dataset, path):
    container.save(path, dataset.arrays, meta={"config": dataset.config.to_meta()},
                   kind=DATASET_KIND)


def load_dataset(path):
    arrays, meta, _ = container.load(path, expect_kind=DATASET_KIND)
    return SyntheticDataset(DataConfig.from_meta(meta["config"]), arrays)


def save_pool(pool, path):
    container.save(path, {"betas": pool.betas, "poses": pool.poses}, kind=POOL_KIND)


def load_pool(path):
    arrays, _, _ = container.load(path, expect_kind=POOL_KIND)
    return MocapPool(betas=arrays["betas"], poses=arrays["poses"])
