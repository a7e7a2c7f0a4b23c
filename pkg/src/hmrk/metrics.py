"""3D joint error metrics, similarity alignment, and segmentation scores.

Coordinates come in meters; joint errors are reported in millimeters.
Aggregations accumulate left to right in index order, so an independent
scalar recomputation reproduces every reported value bit for bit.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .validation import as_float_array

MM = 1000.0

PCK_THRESHOLD_MM = 150.0
AUC_GRID_MM = [5.0 * k for k in range(1, 31)]  # 5 .. 150 step 5


def _seq_mean(values):
    """Left-to-right float64 mean (never numpy pairwise summation)."""
    total = 0.0
    n = 0
    for v in values:
        total += float(v)
        n += 1
    if n == 0:
        raise ValueError("mean of empty sequence")
    return total / n


def per_joint_errors_mm(pred, gt):
    """Euclidean distance per joint, meters in, millimeters out. (3, P) x 2 -> (P,)."""
    pred = as_float_array(pred, "pred", ndim=2)
    gt = as_float_array(gt, "gt", ndim=2)
    if pred.shape != gt.shape:
        raise ValueError("pred %s and gt %s differ in shape" % (pred.shape, gt.shape))
    d = pred - gt
    return np.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) * MM


def root_align(points, root_indices=(2, 3)):
    """Subtract the midpoint of the two root keypoints from every column."""
    points = as_float_array(points, "points", ndim=2)
    i, j = root_indices
    root = (points[:, i] + points[:, j]) * 0.5
    return points - root[:, None]


def mpjpe(pred, gt, root_indices=(2, 3), align_root=True):
    """Mean per-joint position error in millimeters."""
    if align_root:
        pred = root_align(pred, root_indices)
        gt = root_align(gt, root_indices)
    return _seq_mean(per_joint_errors_mm(pred, gt))


def procrustes_align(pred, gt, with_scale=True):
    """Optimal similarity alignment of pred onto gt.

    Returns (aligned_pred, (s, R, t)) minimizing ||s R pred + t - gt||^2 in
    the least-squares sense (closed form via SVD, reflections excluded).
    with_scale=False restricts to rigid (s = 1). Raises on degenerate input
    (all points coincident).
    """
    pred = as_float_array(pred, "pred", ndim=2)
    gt = as_float_array(gt, "gt", ndim=2)
    if pred.shape != gt.shape or pred.shape[0] != 3:
        raise ValueError("expected matching (3, P) arrays")
    mu1 = pred.mean(axis=1, keepdims=True)
    mu2 = gt.mean(axis=1, keepdims=True)
    x1 = pred - mu1
    x2 = gt - mu2
    var1 = (x1 * x1).sum()
    if var1 < 1e-18:
        raise ValueError("degenerate point cloud: all points coincident")

    k = x1 @ x2.T
    u, s, vh = np.linalg.svd(k)
    v = vh.T
    z = np.eye(3)
    z[-1, -1] = np.sign(np.linalg.det(u @ v.T))
    rot = v @ z @ u.T
    scale = np.trace(rot @ k) / var1 if with_scale else 1.0
    t = mu2 - scale * (rot @ mu1)
    aligned = scale * (rot @ pred) + t
    return aligned, (scale, rot, t)


def reconstruction_error(pred, gt, with_scale=True):
    """MPJPE after optimal similarity alignment, millimeters."""
    aligned, _ = procrustes_align(pred, gt, with_scale=with_scale)
    return _seq_mean(per_joint_errors_mm(aligned, gt))


def pck(per_joint_mm, threshold_mm=PCK_THRESHOLD_MM, inclusive=False):
    """Percentage of joints with error under the threshold.

    Strict comparison by default; inclusive=True counts errors equal to the
    threshold as correct.
    """
    errors = as_float_array(per_joint_mm, "per_joint_mm")
    if np.any(errors < 0):
        raise ValueError("joint errors must be nonnegative")
    flat = errors.reshape(-1)
    if flat.size == 0:
        raise ValueError("no joint errors given")
    hits = int(np.count_nonzero(flat <= threshold_mm if inclusive else flat < threshold_mm))
    return hits / flat.size * 100.0


def auc(per_joint_mm, grid=None, inclusive=False):
    """Mean PCK over the threshold grid (default 5..150 mm, step 5)."""
    grid = AUC_GRID_MM if grid is None else list(grid)
    return _seq_mean(pck(per_joint_mm, t, inclusive) for t in grid)


def seg_scores(pred_labels, gt_labels, num_classes=7):
    """Pixel accuracy and mean per-class F1 for part label images.

    Classes absent from both images are excluded from the F1 mean; a class
    present on only one side scores 0 there.
    """
    pred = np.asarray(pred_labels)
    gt = np.asarray(gt_labels)
    if pred.shape != gt.shape:
        raise ValueError("label images differ in shape")
    if pred.min() < 0 or pred.max() >= num_classes or gt.min() < 0 or gt.max() >= num_classes:
        raise ValueError("labels out of range [0, %d)" % num_classes)
    total = pred.size
    accuracy = int(np.count_nonzero(pred == gt)) / total * 100.0
    f1s = []
    for c in range(num_classes):
        in_pred = pred == c
        in_gt = gt == c
        tp = int(np.count_nonzero(in_pred & in_gt))
        fp = int(np.count_nonzero(in_pred & ~in_gt))
        fn = int(np.count_nonzero(~in_pred & in_gt))
        if tp + fp + fn == 0:
            continue
        f1s.append(2.0 * tp / (2.0 * tp + fp + fn))
    return accuracy, _seq_mean(f1s)


@dataclass
class JointErrorReport:
    """Per-sample joint errors plus the summary numbers."""

    mpjpe_mm: np.ndarray                   # (n,)
    reconst_mm: np.ndarray                 # (n,)
    pck_pct: float
    auc_pct: float
    per_joint_mean_mm: np.ndarray          # (P,)
    extras: dict = field(default_factory=dict)

    @property
    def mean_mpjpe(self):
        return _seq_mean(self.mpjpe_mm)

    @property
    def mean_reconst(self):
        return _seq_mean(self.reconst_mm)

    def summary(self):
        out = {
            "mpjpe_mm": self.mean_mpjpe,
            "reconst_mm": self.mean_reconst,
            "pck_pct": self.pck_pct,
            "auc_pct": self.auc_pct,
            "per_joint_mean_mm": list(self.per_joint_mean_mm),
        }
        out.update(self.extras)
        return out

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def save_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample", "mpjpe_mm", "reconst_mm"])
            for i, (a, b) in enumerate(zip(self.mpjpe_mm, self.reconst_mm)):
                writer.writerow([i, repr(float(a)), repr(float(b))])


def evaluate_joints(preds, gts, root_indices=(2, 3)):
    """Batch report: preds/gts (n, 3, P) in meters, P typically the 14 body points."""
    preds = as_float_array(preds, "preds", ndim=3)
    gts = as_float_array(gts, "gts", ndim=3)
    n, _, p = preds.shape
    mp = np.zeros(n)
    rec = np.zeros(n)
    all_aligned_errors = np.zeros((n, p))
    for i in range(n):
        pa = root_align(preds[i], root_indices)
        ga = root_align(gts[i], root_indices)
        errs = per_joint_errors_mm(pa, ga)
        mp[i] = _seq_mean(errs)
        aligned, _ = procrustes_align(preds[i], gts[i])
        all_aligned_errors[i] = per_joint_errors_mm(aligned, gts[i])
        rec[i] = _seq_mean(all_aligned_errors[i])
    flat = all_aligned_errors.reshape(-1)
    return JointErrorReport(
        mpjpe_mm=mp,
        reconst_mm=rec,
        pck_pct=pck(flat),
        auc_pct=auc(flat),
        per_joint_mean_mm=np.array([_seq_mean(all_aligned_errors[:, j]) for j in range(p)]),
    )
