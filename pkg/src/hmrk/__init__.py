"""Single-view articulated body mesh regression at desk scale.

A differentiable body model (blendshapes, forward kinematics, skinning,
keypoint regression), a feedback-refinement parameter regressor trained
against a visibility-gated reprojection loss, and a factorized least-squares
adversarial prior over shape and per-joint rotations: all on a small
self-contained float64 autodiff core, with synthetic-data tooling, metrics
and a CLI.
"""

from .autodiff import Tensor, grad_check
from .bodymodel import BodyTemplate, load_model, save_model
from .camera import CameraParams, compose_projection, project
from .data import DataConfig, MocapPool, generate_paired, load_dataset, sample_pool
from .estimator import MeshRecovery
from .metrics import auc, mpjpe, pck, procrustes_align, seg_scores
from .synthbody import TemplateConfig, synth_template
from .training import TrainConfig, TrainState, train_loop

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "grad_check",
    "BodyTemplate",
    "load_model",
    "save_model",
    "CameraParams",
    "compose_projection",
    "project",
    "DataConfig",
    "MocapPool",
    "generate_paired",
    "load_dataset",
    "sample_pool",
    "MeshRecovery",
    "auc",
    "mpjpe",
    "pck",
    "procrustes_align",
    "seg_scores",
    "TemplateConfig",
    "synth_template",
    "TrainConfig",
    "TrainState",
    "train_loop",
    "__version__",
]
