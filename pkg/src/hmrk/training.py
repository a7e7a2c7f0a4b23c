"""Joint optimization of the regressor and the adversarial prior.

Each step runs the encoder/regressor forward (reprojection and 3D terms on
the final estimate only, prior scores on every estimate), applies Adam to
the encoder side, then retrains the discriminators on a fresh pool batch
against the detached fakes. Modes:

    paired         half of every batch carries 3D annotations
    unpaired       3D annotations ignored; the prior is the only 3D signal
    no_prior_no_3d reprojection only (the degenerate ablation)

Runs are bit-reproducible from (config, seeds): one RNG drives batch
composition, dropout and pool sampling, and its state rides in the
checkpoint so resumed runs follow the identical trajectory.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, asdict, replace

import numpy as np

from . import autodiff as ad
from . import container
from . import theta as th
from .bodymodel import NUM_BODY_KEYPOINTS
from .camera import compose_projection
from .discriminator import DiscriminatorBank
from .losses import (
    LossWeights,
    discriminator_loss,
    encoder_adv_loss,
    joints3d_loss,
    param_loss,
    reprojection_loss,
    total_loss,
)
from .metrics import evaluate_joints
from .nn import ParameterStore
from .optim import Adam
from .regressor import EncoderNet, RegressorNet, ief_regress

MODES = ("paired", "unpaired", "no_prior_no_3d")


@dataclass
class TrainConfig:
    mode: str = "paired"
    batch_size: int = 64
    lr_encoder: float = 1e-5
    lr_disc: float = 1e-4
    epochs: int = 50
    steps_per_epoch: int = 0        # 0: derive from dataset size
    ief_steps: int = 3
    lambda_reproj: float = 60.0
    lambda_3d: float = 60.0
    lambda_adv: float = 1.0
    feature_dim: int = 256
    encoder_hidden: tuple = (256,)
    regressor_width: int = 1024
    dropout: float = 0.5
    disc_embed_width: int = 32
    disc_overall_width: int = 1024
    sigmoid_discriminator: bool = False
    pose_loss_rotmat: bool = True
    mean_scale: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError("mode must be one of %s" % (MODES,))
        if self.mode == "paired" and self.batch_size % 2 != 0:
            raise ValueError("paired mode needs an even batch size")
        if self.ief_steps < 1:
            raise ValueError("ief_steps must be >= 1")

    def weights(self):
        adv = 0.0 if self.mode == "no_prior_no_3d" else self.lambda_adv
        return LossWeights(reproj=self.lambda_reproj, three_d=self.lambda_3d, adv=adv)

    def to_json(self):
        d = asdict(self)
        d["encoder_hidden"] = list(self.encoder_hidden)
        return d

    @classmethod
    def from_json(cls, d):
        d = dict(d)
        if "encoder_hidden" in d:
            d["encoder_hidden"] = tuple(d["encoder_hidden"])
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


class TrainState:
    """Everything needed to continue or reproduce a run."""

    def __init__(self, config, obs_dim, theta_bar):
        self.config = config
        self.obs_dim = obs_dim
        self.theta_bar = np.asarray(theta_bar, dtype=np.float64)
        self.store = ParameterStore()
        init_rng = np.random.default_rng(config.seed)
        self.encoder = EncoderNet(self.store, obs_dim, config.encoder_hidden,
                                  config.feature_dim, init_rng)
        self.regressor = RegressorNet(self.store, config.feature_dim, init_rng,
                                      width=config.regressor_width,
                                      dropout=config.dropout)
        self.disc = DiscriminatorBank(self.store, init_rng,
                                      embed_width=config.disc_embed_width,
                                      overall_width=config.disc_overall_width,
                                      sigmoid_outputs=config.sigmoid_discriminator)
        self.adam_e = Adam(self._enc_params(), lr=config.lr_encoder)
        self.adam_d = Adam(self._disc_params(), lr=config.lr_disc)
        self.rng = np.random.default_rng(config.seed + 1)
        self.epoch = 0
        self.step = 0
        self.best_val = np.inf

    def _enc_params(self):
        return {n: t for n, t in self.store.tensors().items() if not n.startswith("disc/")}

    def _disc_params(self):
        return self.store.tensors("disc/")

    def predict_thetas(self, observations):
        """Evaluation-mode forward for an (n, obs_dim) array -> (n, 85)."""
        phi = self.encoder(ad.constant(np.asarray(observations, dtype=np.float64)))
        estimates = ief_regress(self.regressor, phi, self.theta_bar,
                                self.config.ief_steps, train=False)
        return estimates[-1].data.copy()

    def save(self, path):
        arrays = self.store.export_arrays()
        arrays.update(self.adam_e.export_arrays("adam_e"))
        arrays.update(self.adam_d.export_arrays("adam_d"))
        arrays["theta_bar"] = self.theta_bar
        meta = {
            "config": self.config.to_json(),
            "obs_dim": self.obs_dim,
            "epoch": self.epoch,
            "step": self.step,
            "best_val": None if np.isinf(self.best_val) else float(self.best_val),
            "rng_state": _rng_state_to_json(self.rng),
        }
        container.save(path, arrays, meta=meta, kind="checkpoint")

    @classmethod
    def load(cls, path):
        arrays, meta, _ = container.load(path, expect_kind="checkpoint")
        config = TrainConfig.from_json(meta["config"])
        state = cls(config, int(meta["obs_dim"]), arrays["theta_bar"])
        state.store.load_arrays({n: a for n, a in arrays.items()
                                 if n in state.store.names()})
        state.adam_e.load_arrays(arrays, "adam_e")
        state.adam_d.load_arrays(arrays, "adam_d")
        state.epoch = int(meta["epoch"])
        state.step = int(meta["step"])
        state.best_val = np.inf if meta["best_val"] is None else float(meta["best_val"])
        state.rng = _rng_state_from_json(meta["rng_state"])
        return state


def _rng_state_to_json(rng):
    state = rng.bit_generator.state
    return json.loads(json.dumps(state))


def _rng_state_from_json(state):
    rng = np.random.default_rng(0)
    rng.bit_generator.state = state
    return rng


def make_theta_bar(pool, config):
    return th.mean_theta(pool.poses, scale=config.mean_scale)


def make_batch(paired_set, unpaired2d_set, config, rng):
    """Compose one batch of record dicts per the mode's balancing rule.

    paired_set / unpaired2d_set: (dataset, index array) pairs. In paired
    mode exactly half the batch comes from each; other modes draw everything
    from the 2D-only view. Deterministic given the rng state.
    """
    b = config.batch_size
    if config.mode == "paired":
        ds3, idx3 = paired_set
        ds2, idx2 = unpaired2d_set
        if len(idx3) == 0 or len(idx2) == 0:
            raise ValueError("paired mode needs non-empty 3D and 2D-only sets")
        take3 = rng.choice(len(idx3), size=b // 2, replace=len(idx3) < b // 2)
        take2 = rng.choice(len(idx2), size=b // 2, replace=len(idx2) < b // 2)
        records = [ds3.record(idx3[i]) for i in take3]
        records += [ds2.record(idx2[i]) for i in take2]
        return records
    ds2, idx2 = unpaired2d_set
    if len(idx2) == 0:
        raise ValueError("empty sample set")
    take = rng.choice(len(idx2), size=b, replace=len(idx2) < b)
    records = []
    for i in take:
        rec = dict(ds2.record(idx2[i]))
        rec["has_3d"] = False  # 3D annotations are never consulted outside paired mode
        records.append(rec)
    return records


def _stack_batch(records):
    obs = np.stack([r["observation"] for r in records])
    kp2d = np.stack([r["keypoints2d"] for r in records])
    vis = np.stack([r["visibility"] for r in records]).astype(np.float64)
    has3d = np.array([r["has_3d"] for r in records], dtype=np.float64)
    p = kp2d.shape[2]
    joints3d = np.zeros((len(records), 3, p))
    beta = np.zeros((len(records), th.SHAPE_DIM))
    pose = np.zeros((len(records), th.POSE_DIM))
    for i, r in enumerate(records):
        if r["has_3d"]:
            joints3d[i] = r["joints3d"]
            beta[i] = r["beta"]
            pose[i] = r["pose"]
    return obs, kp2d, vis, has3d, joints3d, beta, pose


def train_step(state, records, pool, template, log_writer=None):
    """One optimization step; returns the scalar log record."""
    cfg = state.config
    obs, kp2d, vis, has3d, joints3d, gt_beta, gt_pose = _stack_batch(records)
    b = len(records)
    weights = cfg.weights()
    use_prior = cfg.mode != "no_prior_no_3d"
    use_3d = cfg.mode == "paired"

    # encoder/regressor update
    state.store.zero_grads()
    phi = state.encoder(ad.constant(obs))
    estimates = ief_regress(state.regressor, phi, state.theta_bar, cfg.ief_steps,
                            train=True, rng=state.rng)
    final = estimates[-1]
    pose_f, beta_f, _, _, _ = th.split_tensor(final)
    _, kp3d, kp2d_pred = compose_projection(final, template)

    l_reproj = reprojection_loss(kp2d_pred, kp2d, vis)
    l_3d = ad.constant(np.zeros(()))
    if use_3d and has3d.any():
        l_joints = joints3d_loss(kp3d, joints3d, has_3d=has3d)
        l_params = param_loss(beta_f, pose_f, gt_beta, gt_pose, has_3d=has3d,
                              rotmat=cfg.pose_loss_rotmat)
        l_3d = l_joints + l_params
    l_adv = ad.constant(np.zeros(()))
    if use_prior:
        scores = [state.disc(th.split_tensor(e)[1], th.split_tensor(e)[0])
                  for e in estimates]
        l_adv = encoder_adv_loss(scores)
    total = total_loss(l_reproj, l_adv, joints3d=l_3d, weights=weights, has_3d=use_3d)
    total.backward()
    state.adam_e.step()

    # discriminator update on detached fakes vs a fresh pool batch
    l_d = 0.0
    if use_prior:
        state.store.zero_grads()
        fake_beta = ad.concat([th.split_tensor(e.detach())[1] for e in estimates], axis=0)
        fake_pose = ad.concat([th.split_tensor(e.detach())[0] for e in estimates], axis=0)
        pick = state.rng.choice(len(pool), size=b, replace=len(pool) < b)
        real_scores = state.disc(ad.constant(pool.betas[pick]), ad.constant(pool.poses[pick]))
        fake_scores = state.disc(fake_beta, fake_pose)
        d_loss = ad.tsum(discriminator_loss(real_scores, fake_scores))
        d_loss.backward()
        state.adam_d.step()
        l_d = d_loss.item()

    state.step += 1
    log = {
        "step": state.step,
        "L_reproj": l_reproj.item(),
        "L_3D": l_3d.item(),
        "L_adv": l_adv.item(),
        "L_D": float(l_d),
    }
    if log_writer is not None:
        log_writer(log)
    return log


def validate(state, template, val_set):
    """Root-aligned MPJPE and reconstruction error (mm) over a dataset."""
    obs = val_set.arrays["observation"]
    thetas = state.predict_thetas(obs)
    _, kp3d, _ = compose_projection(ad.constant(thetas), template)
    preds = kp3d.data[:, :, :NUM_BODY_KEYPOINTS]
    gts = val_set.arrays["joints3d"][:, :, :NUM_BODY_KEYPOINTS]
    report = evaluate_joints(preds, gts)
    return report.mean_mpjpe, report.mean_reconst


class HistoryWriter:
    """Append-only CSV of per-step losses and periodic validation numbers."""

    COLUMNS = ["step", "L_reproj", "L_3D", "L_adv", "L_D", "val_MPJPE", "val_reconst"]

    def __init__(self, path, resume=False):
        self.path = path
        mode = "a" if resume and os.path.exists(path) else "w"
        self.fh = open(path, mode, newline="")
        self.writer = csv.writer(self.fh)
        if mode == "w":
            self.writer.writerow(self.COLUMNS)

    def write_step(self, log):
        self.writer.writerow(
            [log["step"]]
            + [repr(float(log[k])) for k in ("L_reproj", "L_3D", "L_adv", "L_D")]
            + ["", ""]
        )

    def write_val(self, step, mpjpe_mm, reconst_mm):
        self.writer.writerow([step, "", "", "", "", repr(float(mpjpe_mm)),
                              repr(float(reconst_mm))])

    def close(self):
        self.fh.close()


def train_loop(config, template, train_set, pool, val_set=None, out_dir=".",
               resume_from=None):
    """Run the full schedule; returns (state, history_csv_path).

    Writes checkpoint_last.bin every epoch and checkpoint_best.bin whenever
    the validation reconstruction error improves. Fully reproducible from
    (config, seeds); resuming from checkpoint_last.bin continues the exact
    trajectory.
    """
    os.makedirs(out_dir, exist_ok=True)
    history_path = os.path.join(out_dir, "history.csv")
    last_path = os.path.join(out_dir, "checkpoint_last.bin")
    best_path = os.path.join(out_dir, "checkpoint_best.bin")

    if resume_from is not None:
        state = TrainState.load(resume_from)
        if state.config != config:
            state.config = replace(config)  # allow epoch extension, keep trajectory
        writer = HistoryWriter(history_path, resume=True)
    else:
        theta_bar = make_theta_bar(pool, config)
        obs_dim = train_set.arrays["observation"].shape[1]
        state = TrainState(config, obs_dim, theta_bar)
        writer = HistoryWriter(history_path, resume=False)

    idx3 = train_set.indices_with_3d()
    idx2 = train_set.indices_2d_only()
    if config.mode != "paired":
        idx2 = np.arange(len(train_set))
    steps = config.steps_per_epoch
    if steps <= 0:
        per = config.batch_size // 2 if config.mode == "paired" else config.batch_size
        pool_sz = min(len(idx3), len(idx2)) if config.mode == "paired" else len(idx2)
        steps = max(1, pool_sz // per)

    try:
        while state.epoch < config.epochs:
            for _ in range(steps):
                records = make_batch((train_set, idx3), (train_set, idx2),
                                     config, state.rng)
                log = train_step(state, records, pool, template)
                writer.write_step(log)
            state.epoch += 1
            if val_set is not None:
                mpjpe_mm, reconst_mm = validate(state, template, val_set)
                writer.write_val(state.step, mpjpe_mm, reconst_mm)
                if reconst_mm < state.best_val:
                    state.best_val = reconst_mm
                    state.save(best_path)
            state.save(last_path)
    finally:
        writer.close()
    state.save(last_path)
    if val_set is None or not os.path.exists(best_path):
        state.save(best_path)
    return state, history_path
