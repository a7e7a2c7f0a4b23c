"""Training objectives.

Per-sample losses are summed over keypoints/coordinates and averaged over
the batch; keypoint counts never normalize. The adversarial terms follow
the least-squares convention: real targets 1, fake targets 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .bodymodel import HIP_KEYPOINTS, rodrigues
from .theta import NUM_JOINTS, POSE_DIM, SHAPE_DIM


@dataclass
class LossWeights:
    reproj: float = 60.0
    three_d: float = 60.0
    adv: float = 1.0

    def __post_init__(self):
        for name in ("reproj", "three_d", "adv"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError("loss weight %s must be finite and nonnegative" % name)


def reprojection_loss(pred2d, keypoints, visibility):
    """Visibility-gated L1 over 2D keypoints.

    pred2d: (B?, 2, P) tensor; keypoints: matching array; visibility:
    (B?, P) 0/1 array. Invisible keypoints contribute exactly zero. Sums
    over keypoints and coordinates, means over the batch when batched.
    """
    pred2d = ad.as_tensor(pred2d)
    if pred2d.ndim == 2:
        pred2d = ad.reshape(pred2d, (1,) + pred2d.shape)
    b, _, p = pred2d.shape
    kp = np.asarray(keypoints, dtype=np.float64).reshape(b, 2, p)
    vis = np.asarray(visibility, dtype=np.float64).reshape(b, 1, p)
    gated = ad.tabs(pred2d - ad.constant(kp)) * ad.constant(vis)
    return ad.tsum(gated) * (1.0 / b)


def joints3d_loss(pred, gt, root_indices=HIP_KEYPOINTS, has_3d=None):
    """Squared L2 over root-relative 3D keypoints.

    Both skeletons are re-centered on the midpoint of `root_indices` before
    comparison, so a common translation on either side is invisible.
    pred: (B?, 3, P) tensor; gt: matching array. `has_3d` optionally masks
    samples without 3D annotations (their contribution is exactly zero);
    the sum is still divided by the full batch size.
    """
    pred = ad.as_tensor(pred)
    single = pred.ndim == 2
    if single:
        pred = ad.reshape(pred, (1,) + pred.shape)
    gt = np.asarray(gt, dtype=np.float64)
    if gt.ndim == 2:
        gt = gt[None]
    b = pred.shape[0]
    i, j = root_indices
    pred_root = (pred[:, :, i : i + 1] + pred[:, :, j : j + 1]) * 0.5
    gt_root = (gt[:, :, i : i + 1] + gt[:, :, j : j + 1]) * 0.5
    diff = (pred - pred_root) - ad.constant(gt - gt_root)
    sq = ad.square(diff)
    if has_3d is not None:
        mask = np.asarray(has_3d, dtype=np.float64).reshape(b, 1, 1)
        sq = sq * ad.constant(mask)
    return ad.tsum(sq) * (1.0 / b)


def param_loss(pred_beta, pred_pose, gt_beta, gt_pose, has_3d=None, rotmat=True):
    """Squared L2 over shape coefficients and joint rotations.

    With rotmat=True (default) the pose term compares per-joint rotation
    matrices, so theta and theta + 2*pi about the same axis are identical;
    rotmat=False compares raw axis-angle vectors.
    """
    pred_beta = ad.as_tensor(pred_beta)
    pred_pose = ad.as_tensor(pred_pose)
    single = pred_beta.ndim == 1
    if single:
        pred_beta = ad.reshape(pred_beta, (1, SHAPE_DIM))
        pred_pose = ad.reshape(pred_pose, (1, POSE_DIM))
    gt_beta = np.asarray(gt_beta, dtype=np.float64).reshape(-1, SHAPE_DIM)
    gt_pose = np.asarray(gt_pose, dtype=np.float64).reshape(-1, POSE_DIM)
    b = pred_beta.shape[0]

    beta_term = ad.square(pred_beta - ad.constant(gt_beta))  # (B, 10)
    if rotmat:
        pr = rodrigues(ad.reshape(pred_pose, (b, NUM_JOINTS, 3)))
        gr = rodrigues(ad.constant(gt_pose.reshape(b, NUM_JOINTS, 3))).data
        pose_term = ad.reshape(ad.square(pr - ad.constant(gr)), (b, 9 * NUM_JOINTS))
    else:
        pose_term = ad.square(pred_pose - ad.constant(gt_pose))
    per_sample = ad.concat([beta_term, pose_term], axis=1)
    if has_3d is not None:
        mask = np.asarray(has_3d, dtype=np.float64).reshape(b, 1)
        per_sample = per_sample * ad.constant(mask)
    return ad.tsum(per_sample) * (1.0 / b)


def encoder_adv_loss(disc_outputs_per_step):
    """Sum over discriminators and refinement steps of (D - 1)^2.

    `disc_outputs_per_step` is a list over refinement iterations of (B, D)
    score tensors (D = 25). Means over the batch, sums over everything else.
    """
    total = None
    for scores in disc_outputs_per_step:
        term = ad.tsum(ad.tmean(ad.square(scores - 1.0), axis=0))
        total = term if total is None else total + term
    if total is None:
        raise ValueError("need scores from at least one refinement step")
    return total


def discriminator_loss(real_scores, fake_scores):
    """Least-squares objective per discriminator: E[(D_real - 1)^2] + E[D_fake^2].

    real_scores / fake_scores: (B, D) tensors (fake side already detached by
    the caller). Returns the (D,) per-discriminator loss vector; sum it for
    the optimizer step.
    """
    real_term = ad.tmean(ad.square(real_scores - 1.0), axis=0)
    fake_term = ad.tmean(ad.square(fake_scores), axis=0)
    return real_term + fake_term


def total_loss(reproj, adv, joints3d=None, params3d=None, weights=None, has_3d=True):
    """Weighted overall objective.

    reproj and the 3D terms must come from the final refinement estimate
    only; `adv` from every step. `has_3d=False` zeroes the 3D block no
    matter its value (callers may also pass per-sample masks inside the 3D
    losses; this flag is the dataset-level indicator).
    """
    w = weights or LossWeights()
    total = reproj * w.reproj + adv * w.adv
    if has_3d:
        three_d = None
        if joints3d is not None:
            three_d = joints3d
        if params3d is not None:
            three_d = params3d if three_d is None else three_d + params3d
        if three_d is not None:
            total = total + three_d * w.three_d
    return total
