"""Weak-perspective camera: orthographic drop of depth, then scale and shift.

Image frame: origin at the crop center, x right, y down, the crop spanning
[-1, 1]. The camera's global rotation acts about the origin before
projection, so adding a constant to every depth never changes the output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import bodymodel
from . import theta as th


@dataclass
class CameraParams:
    scale: float = 1.0
    global_rot: np.ndarray = None   # (3,) axis-angle
    trans: np.ndarray = None        # (2,)

    def __post_init__(self):
        self.global_rot = np.zeros(3) if self.global_rot is None else np.asarray(self.global_rot, dtype=np.float64)
        self.trans = np.zeros(2) if self.trans is None else np.asarray(self.trans, dtype=np.float64)


def project(points3d, scale, rot, trans):
    """x = scale * drop_z(R @ X) + trans.

    points3d: (B?, 3, P); scale: (B, 1, 1) or scalar; rot: (B?, 3, 3);
    trans: (B, 2, 1) or (2,). All arguments may be tensors or arrays;
    differentiable in every one of them. Returns (B?, 2, P).
    """
    points3d = ad.as_tensor(points3d)
    rot = ad.as_tensor(rot)
    scale = ad.as_tensor(scale)
    trans = ad.as_tensor(trans)
    single = points3d.ndim == 2
    if single:
        points3d = ad.reshape(points3d, (1,) + points3d.shape)
        rot = ad.reshape(rot, (1, 3, 3))
        scale = ad.reshape(scale, (1, 1, 1)) if scale.ndim <= 1 else scale
        trans = ad.reshape(trans, (1, 2, 1))
    cam_pts = ad.matmul(rot, points3d)
    xy = cam_pts[:, 0:2, :]
    out = xy * scale + trans
    return out[0] if single else out


def project_cam(points3d, cam):
    """project() with a CameraParams record (single sample)."""
    rot = bodymodel.rodrigues_np(cam.global_rot)
    return project(points3d, float(cam.scale), rot, cam.trans.reshape(2, 1))


def compose_projection(theta_vec, template):
    """Unpack an 85-D parameter vector and run model plus camera.

    theta_vec: (B?, 85) tensor or array. Returns (mesh, keypoints3d,
    keypoints2d): the body-frame mesh (B?, 3, N), camera-frame keypoints
    R @ X (B?, 3, P), and projected keypoints (B?, 2, P). This is the single
    entry point the losses and inference use.
    """
    t = ad.as_tensor(theta_vec)
    single = t.ndim == 1
    if single:
        t = ad.reshape(t, (1, th.THETA_DIM))
    pose, beta, grot, trans, scale = th.split_tensor(t)
    b = t.shape[0]

    mesh = bodymodel.posed_mesh(template, pose, beta)
    kp3d_body = bodymodel.regress_keypoints(mesh, template.keypoint_matrix())
    rot = bodymodel.rodrigues(grot)                      # (B, 3, 3)
    kp3d_cam = ad.matmul(rot, kp3d_body)
    xy = kp3d_cam[:, 0:2, :]
    kp2d = xy * ad.reshape(scale, (b, 1, 1)) + ad.reshape(trans, (b, 2, 1))
    if single:
        return mesh[0], kp3d_cam[0], kp2d[0]
    return mesh, kp3d_cam, kp2d
