"""Factorized plausibility discriminators over shape and pose.

One small MLP scores the 10-D shape, a shared two-layer embedding lifts each
joint's 3x3 rotation to 32-D, 23 per-joint linear heads score their own
embedding, and one wider MLP scores the concatenation of all embeddings.
25 scalar scores per input; shape and pose paths never mix. Heads are
linear by default (least-squares targets 0/1); a sigmoid output mode exists
behind a flag.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .bodymodel import rodrigues
from .nn import MLP, he_uniform
from .theta import NUM_JOINTS, POSE_DIM, SHAPE_DIM

NUM_SCORES = NUM_JOINTS + 2  # shape + per-joint + overall


def pose_to_rotmats(pose):
    """(B?, 69) axis-angle -> (B?, 23, 3, 3) rotation matrices."""
    pose = ad.as_tensor(pose)
    single = pose.ndim == 1
    if single:
        pose = ad.reshape(pose, (1, POSE_DIM))
    if pose.shape[-1] != POSE_DIM:
        raise ad.ShapeError("pose_to_rotmats: expected %d values, got %s" % (POSE_DIM, pose.shape))
    rots = rodrigues(ad.reshape(pose, (pose.shape[0], NUM_JOINTS, 3)))
    return rots[0] if single else rots


class DiscriminatorBank:
    def __init__(self, store, rng, embed_width=32, overall_width=1024,
                 sigmoid_outputs=False, name="disc"):
        self.embed_width = embed_width
        self.sigmoid_outputs = sigmoid_outputs
        self.shape_mlp = MLP(store, name + "/shape", [SHAPE_DIM, 10, 5, 1], rng)
        self.embed = MLP(store, name + "/embed", [9, embed_width, embed_width], rng,
                         final_relu=True)
        self.joint_W = store.create(name + "/joints/W",
                                    he_uniform(rng, (NUM_JOINTS, embed_width), embed_width))
        self.joint_b = store.create(name + "/joints/b", np.zeros(NUM_JOINTS))
        self.overall = MLP(store, name + "/overall",
                           [NUM_JOINTS * embed_width, overall_width, overall_width, 1], rng)

    def __call__(self, beta, pose):
        """Score a batch: (B, 10), (B, 69) -> (B, 25).

        Column order: [shape, joint 1 .. joint 23, overall]. The shape score
        is a function of beta only, every pose score of pose only.
        """
        beta = ad.as_tensor(beta)
        pose = ad.as_tensor(pose)
        b = beta.shape[0]
        shape_score = self.shape_mlp(beta)                         # (B, 1)

        rots = pose_to_rotmats(pose)                               # (B, 23, 3, 3)
        flat = ad.reshape(rots, (b, NUM_JOINTS, 9))
        emb = self.embed(flat)                                     # (B, 23, 32)
        joint_scores = ad.tsum(emb * self.joint_W, axis=2) + self.joint_b  # (B, 23)
        overall_score = self.overall(ad.reshape(emb, (b, NUM_JOINTS * self.embed_width)))

        scores = ad.concat([shape_score, joint_scores, overall_score], axis=1)
        if self.sigmoid_outputs:
            scores = ad.sigmoid(scores)
        return scores
