"""Command-line entry point.

Subcommands: gen-model, gen-data, train, eval, infer, export-mesh,
grad-check. Every command reads/writes files only (no interactive mode) and
is reproducible from its config and seed. Exit codes: 0 success, 1 runtime
failure (missing file, invalid config, bad data), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import autodiff as ad
from . import theta as th
from .bodymodel import (
    NUM_BODY_KEYPOINTS,
    load_model,
    model_keypoints,
    posed_mesh,
    rodrigues_np,
    save_model,
)
from .camera import compose_projection
from .data import (
    DataConfig,
    generate_paired,
    load_dataset,
    load_pool,
    sample_pool,
    save_dataset,
    save_pool,
)
from .gradcheck import run_grad_checks
from .metrics import evaluate_joints, seg_scores
from .rasterize import export_obj, render_parts
from .synthbody import TemplateConfig, synth_template
from .training import TrainConfig, TrainState, train_loop, validate


class CliError(Exception):
    pass


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise CliError("cannot read config %s: %s" % (path, exc))
    except json.JSONDecodeError as exc:
        raise CliError("invalid JSON in %s: %s" % (path, exc))


def _require(path, what):
    if path is None:
        raise CliError("missing required --%s" % what)
    if not os.path.exists(path):
        raise CliError("%s file not found: %s" % (what, path))
    return path


def cmd_gen_model(args):
    cfg = TemplateConfig(**_load_json(args.config)) if args.config else TemplateConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    template = synth_template(cfg)
    out = os.path.join(args.out, "model.bin")
    os.makedirs(args.out, exist_ok=True)
    save_model(template, out)
    print("wrote %s (N=%d, faces=%d)" % (out, template.num_vertices, len(template.faces)))
    return 0


def cmd_gen_data(args):
    template = load_model(_require(args.model, "model"))
    raw = _load_json(args.config) if args.config else {}
    n_train = int(raw.pop("n_train", 1000))
    n_val = int(raw.pop("n_val", 200))
    n_pool = int(raw.pop("n_pool", 5000))
    cfg = DataConfig(**raw) if raw else DataConfig()
    seed = args.seed if args.seed is not None else 0
    os.makedirs(args.out, exist_ok=True)

    pool = sample_pool(cfg, n_pool, seed=seed)
    save_pool(pool, os.path.join(args.out, "pool.bin"))
    train_set = generate_paired(cfg, template, pool, n_train, seed=seed + 1)
    save_dataset(train_set, os.path.join(args.out, "train.bin"))
    val_set = generate_paired(cfg, template, pool, n_val, seed=seed + 2)
    save_dataset(val_set, os.path.join(args.out, "val.bin"))
    print("wrote pool(%d), train(%d), val(%d) under %s" % (n_pool, n_train, n_val, args.out))
    return 0


def cmd_train(args):
    template = load_model(_require(args.model, "model"))
    cfg = TrainConfig.from_json(_load_json(args.config)) if args.config else TrainConfig()
    if args.mode:
        cfg = TrainConfig.from_json({**cfg.to_json(), "mode": args.mode})
    if args.seed is not None:
        cfg = TrainConfig.from_json({**cfg.to_json(), "seed": args.seed})
    data_dir = _require(args.dataset, "dataset")
    train_set = load_dataset(os.path.join(data_dir, "train.bin"))
    val_path = os.path.join(data_dir, "val.bin")
    val_set = load_dataset(val_path) if os.path.exists(val_path) else None
    pool = load_pool(os.path.join(data_dir, "pool.bin"))
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "train_config.json"), "w") as fh:
        record = cfg.to_json()
        record["indicator_3d"] = 1 if cfg.mode == "paired" else 0
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
    state, history = train_loop(cfg, template, train_set, pool, val_set=val_set,
                                out_dir=args.out, resume_from=args.checkpoint)
    print("trained %d steps; history at %s" % (state.step, history))
    return 0


def cmd_eval(args):
    template = load_model(_require(args.model, "model"))
    state = TrainState.load(_require(args.checkpoint, "checkpoint"))
    val_set = load_dataset(_require(args.dataset, "dataset"))
    os.makedirs(args.out, exist_ok=True)

    thetas = state.predict_thetas(val_set.arrays["observation"])
    _, kp3d, _ = compose_projection(ad.constant(thetas), template)
    preds = kp3d.data[:, :, :NUM_BODY_KEYPOINTS]
    gts = val_set.arrays["joints3d"][:, :, :NUM_BODY_KEYPOINTS]
    report = evaluate_joints(preds, gts)

    if val_set.config.obs_mode == "parts":
        accs, f1s = [], []
        size = val_set.config.image_size
        parts = template.vertex_parts() + 1
        for i in range(len(val_set)):
            pose, beta, grot, trans, scale = th.split(thetas[i])
            mesh = posed_mesh(template, pose, beta).data
            pred_img = render_parts(mesh, template.faces, parts, scale=scale[0],
                                    rot=rodrigues_np(grot), trans=trans, size=size)
            gt_img = (val_set.arrays["observation"][i].reshape(size, size) * 6.0)
            acc, f1 = seg_scores(pred_img.labels, np.rint(gt_img).astype(np.int64))
            accs.append(acc)
            f1s.append(f1)
        report.extras["seg_accuracy_pct"] = float(np.mean(accs))
        report.extras["seg_mean_f1"] = float(np.mean(f1s))

    report.save_json(os.path.join(args.out, "eval.json"))
    report.save_csv(os.path.join(args.out, "eval.csv"))
    print(json.dumps(report.summary(), sort_keys=True))
    return 0


def cmd_infer(args):
    template = load_model(_require(args.model, "model"))
    state = TrainState.load(_require(args.checkpoint, "checkpoint"))
    dataset = load_dataset(_require(args.dataset, "dataset"))
    os.makedirs(args.out, exist_ok=True)
    thetas = state.predict_thetas(dataset.arrays["observation"])
    for i in range(len(dataset)):
        pose, beta, grot, trans, scale = th.split(thetas[i])
        record = {
            "id": int(dataset.arrays["ids"][i]),
            "theta": thetas[i].tolist(),
            "pose": pose.tolist(),
            "shape": beta.tolist(),
            "global_rot": grot.tolist(),
            "translation": trans.tolist(),
            "scale": float(scale[0]),
        }
        with open(os.path.join(args.out, "sample_%05d.json" % i), "w") as fh:
            json.dump(record, fh)
            fh.write("\n")
        mesh = posed_mesh(template, pose, beta).data
        export_obj(mesh, template.faces, os.path.join(args.out, "sample_%05d.obj" % i))
    print("wrote %d predictions to %s" % (len(dataset), args.out))
    return 0


def cmd_export_mesh(args):
    template = load_model(_require(args.model, "model"))
    payload = _load_json(_require(args.theta, "theta"))
    vec = np.asarray(payload["theta"] if isinstance(payload, dict) else payload,
                     dtype=np.float64)
    if vec.shape != (th.THETA_DIM,):
        raise CliError("theta JSON must hold %d values" % th.THETA_DIM)
    pose, beta, _, _, _ = th.split(vec)
    mesh = posed_mesh(template, pose, beta).data
    os.makedirs(args.out, exist_ok=True)
    out = os.path.join(args.out, "mesh.obj")
    export_obj(mesh, template.faces, out)
    print("wrote %s" % out)
    return 0


def cmd_grad_check(args):
    seed = args.seed if args.seed is not None else 0
    report = run_grad_checks(seed=seed)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "grad_check.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    worst = max(report.values())
    print(json.dumps(report, sort_keys=True))
    if worst >= 1e-4:
        raise CliError("gradient check failed: worst relative error %.3g" % worst)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="hmrk")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=False, dataset=False, checkpoint=False, theta=False):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default="out", help="output directory")
        if model:
            p.add_argument("--model", help="body model file")
        if dataset:
            p.add_argument("--dataset", help="dataset file or directory")
        if checkpoint:
            p.add_argument("--checkpoint", help="training checkpoint")
        if theta:
            p.add_argument("--theta", help="JSON file with an 85-D parameter vector")

    common(sub.add_parser("gen-model", help="generate a synthetic body template"))
    common(sub.add_parser("gen-data", help="generate pool + train/val datasets"), model=True)
    p_train = sub.add_parser("train", help="train encoder/regressor and prior")
    common(p_train, model=True, dataset=True, checkpoint=True)
    p_train.add_argument("--mode", choices=("paired", "unpaired", "no_prior_no_3d"))
    common(sub.add_parser("eval", help="evaluate a checkpoint on a dataset"),
           model=True, dataset=True, checkpoint=True)
    common(sub.add_parser("infer", help="predict parameters and meshes"),
           model=True, dataset=True, checkpoint=True)
    common(sub.add_parser("export-mesh", help="pose the model from a theta JSON"),
           model=True, theta=True)
    common(sub.add_parser("grad-check", help="finite-difference audit of all gradients"))
    return parser


_COMMANDS = {
    "gen-model": cmd_gen_model,
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "export-mesh": cmd_export_mesh,
    "grad-check": cmd_grad_check,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except Exception as exc:  # file corruption, bad model files, etc.
        print("error: %s: %s" % (type(exc).__name__, exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
