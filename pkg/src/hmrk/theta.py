"""Layout of the 85-D pose/shape/camera parameter vector.

Packing order is fixed and load-bearing (it is what the regressor emits and
what checkpoints store):

    [ pose (69) | shape (10) | global_rot (3) | translation (2) | scale (1) ]

pose is axis-angle for the 23 non-root joints; global_rot is axis-angle for
the whole-body rotation applied in the camera, translation is 2-D in the
normalized crop frame, scale is the weak-perspective scale.
"""

from __future__ import annotations

import numpy as np

NUM_JOINTS = 23          # articulated, non-root
POSE_DIM = 3 * NUM_JOINTS
SHAPE_DIM = 10
THETA_DIM = POSE_DIM + SHAPE_DIM + 3 + 2 + 1  # 85

POSE = slice(0, 69)
SHAPE = slice(69, 79)
GLOBAL_ROT = slice(79, 82)
TRANS = slice(82, 84)
SCALE = slice(84, 85)


def pack(pose, shape, global_rot, trans, scale):
    vec = np.empty(THETA_DIM, dtype=np.float64)
    vec[POSE] = pose
    vec[SHAPE] = shape
    vec[GLOBAL_ROT] = global_rot
    vec[TRANS] = trans
    vec[SCALE] = scale
    return vec


def split(theta_vec):
    """Views of a packed (85,) or (B, 85) array, in packing order."""
    theta_vec = np.asarray(theta_vec)
    if theta_vec.shape[-1] != THETA_DIM:
        raise ValueError("expected trailing dim %d, got %s" % (THETA_DIM, theta_vec.shape))
    return (
        theta_vec[..., POSE],
        theta_vec[..., SHAPE],
        theta_vec[..., GLOBAL_ROT],
        theta_vec[..., TRANS],
        theta_vec[..., SCALE],
    )


def split_tensor(t):
    """Same as split() but for autodiff tensors (graph slices)."""
    if t.shape[-1] != THETA_DIM:
        raise ValueError("expected trailing dim %d, got %s" % (THETA_DIM, t.shape))
    return (
        t[..., POSE],
        t[..., SHAPE],
        t[..., GLOBAL_ROT],
        t[..., TRANS],
        t[..., SCALE],
    )


def mean_theta(pool_poses, scale=0.9):
    """Constant initial estimate: pool-mean pose, zero shape/rotation/translation."""
    pose_bar = np.asarray(pool_poses, dtype=np.float64).mean(axis=0)
    if pose_bar.shape != (POSE_DIM,):
        raise ValueError("pool poses must be (n, %d)" % POSE_DIM)
    return pack(pose_bar, np.zeros(SHAPE_DIM), np.zeros(3), np.zeros(2), scale)
