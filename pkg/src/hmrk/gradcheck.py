"""Finite-difference audit of every differentiable subsystem.

Builds a small instance of each piece (primitives, body model, camera,
losses, the unrolled refinement loop with the discriminator bank) and
compares analytic gradients against central differences. Used by the
grad-check CLI command and the acceptance suite.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import theta as th
from .bodymodel import model_keypoints, posed_mesh, rodrigues
from .camera import compose_projection, project
from .discriminator import DiscriminatorBank
from .losses import (
    discriminator_loss,
    encoder_adv_loss,
    joints3d_loss,
    param_loss,
    reprojection_loss,
)
from .nn import ParameterStore
from .regressor import EncoderNet, RegressorNet, ief_regress
from .synthbody import TemplateConfig, synth_template


def _rand(rng, *shape):
    return ad.Tensor(rng.normal(0.0, 0.7, size=shape), requires_grad=True)


def check_primitives(seed=0, step=1e-6):
    """Max relative FD error per primitive op, sampled away from kinks."""
    rng = np.random.default_rng(seed)
    out = {}

    def run(name, make):
        params, fn = make()
        out[name] = ad.grad_check(fn, params, step=step)

    a = _rand(rng, 3, 4)
    b = _rand(rng, 3, 4)
    run("add", lambda: ([a, b], lambda: ad.tsum(ad.square(a + b))))
    run("sub", lambda: ([a, b], lambda: ad.tsum(ad.square(a - b))))
    run("mul", lambda: ([a, b], lambda: ad.tsum(a * b * a)))
    run("neg", lambda: ([a], lambda: ad.tsum(ad.square(-a))))

    d = ad.Tensor(rng.uniform(0.5, 2.0, (3, 4)), requires_grad=True)
    run("div", lambda: ([a, d], lambda: ad.tsum(ad.square(ad.div(a, d)))))
    run("reciprocal", lambda: ([d], lambda: ad.tsum(ad.reciprocal(d))))

    m1 = _rand(rng, 3, 5)
    m2 = _rand(rng, 5, 2)
    run("matmul", lambda: ([m1, m2], lambda: ad.tsum(ad.square(ad.matmul(m1, m2)))))
    m3 = _rand(rng, 4, 3, 5)  # broadcast over the stacked dim
    run("matmul_batched", lambda: ([m3, m2], lambda: ad.tsum(ad.square(ad.matmul(m3, m2)))))

    r = ad.Tensor(rng.uniform(0.2, 1.5, (3, 4)) * rng.choice([-1.0, 1.0], (3, 4)),
                  requires_grad=True)
    run("relu", lambda: ([r], lambda: ad.tsum(ad.square(ad.relu(r)))))
    run("sigmoid", lambda: ([a], lambda: ad.tsum(ad.square(ad.sigmoid(a)))))
    run("abs", lambda: ([r], lambda: ad.tsum(ad.tabs(r))))
    run("square", lambda: ([a], lambda: ad.tsum(ad.square(a))))
    run("sqrt", lambda: ([d], lambda: ad.tsum(ad.sqrt(d))))
    run("sin", lambda: ([a], lambda: ad.tsum(ad.square(ad.sin(a)))))
    run("cos", lambda: ([a], lambda: ad.tsum(ad.square(ad.cos(a)))))
    run("reshape", lambda: ([a], lambda: ad.tsum(ad.square(ad.reshape(a, (4, 3))))))
    run("transpose", lambda: ([a], lambda: ad.tsum(ad.square(ad.swap_last_axes(a) @ a))))
    run("concat", lambda: ([a, b], lambda: ad.tsum(ad.square(ad.concat([a, b], axis=1)))))
    run("take", lambda: ([a], lambda: ad.tsum(ad.square(a[1:3, 0:2]))))
    run("sum_axis", lambda: ([a], lambda: ad.tsum(ad.square(ad.tsum(a, axis=1)))))
    run("mean_axis", lambda: ([a], lambda: ad.tsum(ad.square(ad.tmean(a, axis=0)))))

    def drop_fn():
        return ad.tsum(ad.square(ad.dropout(a, 0.4, np.random.default_rng(seed + 7))))

    run("dropout", lambda: ([a], drop_fn))
    return out


def _small_template():
    return synth_template(TemplateConfig(target_vertices=120))


def check_body_model(seed=0, step=1e-6):
    rng = np.random.default_rng(seed)
    template = _small_template()
    pose = ad.Tensor(rng.uniform(-0.6, 0.6, th.POSE_DIM), requires_grad=True)
    beta = ad.Tensor(rng.normal(0.0, 0.8, th.SHAPE_DIM), requires_grad=True)
    w_mesh = rng.normal(0.0, 1.0, (3, template.num_vertices))
    w_kp = rng.normal(0.0, 1.0, (3, len(template.keypoint_spec)))

    out = {
        "rodrigues": ad.grad_check(
            lambda: ad.tsum(rodrigues(pose[0:3]) * ad.constant(np.arange(9.0).reshape(3, 3))),
            [pose], step=step),
        "mesh": ad.grad_check(
            lambda: ad.tsum(posed_mesh(template, pose, beta) * ad.constant(w_mesh)),
            [pose, beta], step=step),
        "keypoints": ad.grad_check(
            lambda: ad.tsum(model_keypoints(template, pose, beta) * ad.constant(w_kp)),
            [pose, beta], step=step),
    }
    return out


def check_projection(seed=0, step=1e-6):
    rng = np.random.default_rng(seed)
    pts = _rand(rng, 3, 7)
    rot_aa = ad.Tensor(rng.normal(0.0, 0.6, 3), requires_grad=True)
    scale = ad.Tensor(np.array([0.9]), requires_grad=True)
    trans = _rand(rng, 2, 1)
    w = rng.normal(0.0, 1.0, (2, 7))

    def fn():
        r = rodrigues(rot_aa)
        return ad.tsum(project(pts, scale, r, trans) * ad.constant(w))

    return {"project": ad.grad_check(fn, [pts, rot_aa, scale, trans], step=step)}


def check_losses(seed=0, step=1e-6):
    rng = np.random.default_rng(seed)
    p = 7
    pred2d = _rand(rng, 2, 2, p)
    gt2d = rng.normal(0.0, 0.7, (2, 2, p))
    vis = (rng.random((2, p)) < 0.8).astype(float)
    pred3d = _rand(rng, 2, 3, p)
    gt3d = rng.normal(0.0, 0.7, (2, 3, p))
    pb = _rand(rng, 2, th.SHAPE_DIM)
    pp = ad.Tensor(rng.uniform(-0.7, 0.7, (2, th.POSE_DIM)), requires_grad=True)
    gb = rng.normal(0.0, 0.7, (2, th.SHAPE_DIM))
    gp = rng.uniform(-0.7, 0.7, (2, th.POSE_DIM))
    scores = _rand(rng, 4, 25)
    fake = rng.normal(0.0, 0.7, (4, 25))

    return {
        "reprojection": ad.grad_check(
            lambda: reprojection_loss(pred2d, gt2d, vis), [pred2d], step=step),
        "joints3d": ad.grad_check(
            lambda: joints3d_loss(pred3d, gt3d), [pred3d], step=step),
        "params_rotmat": ad.grad_check(
            lambda: param_loss(pb, pp, gb, gp, rotmat=True), [pb, pp], step=step),
        "params_axis_angle": ad.grad_check(
            lambda: param_loss(pb, pp, gb, gp, rotmat=False), [pb, pp], step=step),
        "encoder_adv": ad.grad_check(
            lambda: encoder_adv_loss([scores, scores * 0.5]), [scores], step=step),
        "discriminator": ad.grad_check(
            lambda: ad.tsum(discriminator_loss(scores, ad.constant(fake))),
            [scores], step=step),
    }


def check_full_graph(seed=0, step=1e-6):
    """End to end: tiny encoder -> T=3 refinement -> projection + prior losses."""
    rng = np.random.default_rng(seed)
    template = _small_template()
    store = ParameterStore()
    init = np.random.default_rng(seed + 1)
    encoder = EncoderNet(store, obs_dim=4, hidden=(6,), feature_dim=6, rng=init)
    regressor = RegressorNet(store, feature_dim=6, rng=init, width=8, dropout=0.0)
    bank = DiscriminatorBank(store, init, embed_width=3, overall_width=6)
    obs = rng.normal(0.0, 1.0, (2, 4))
    theta_bar = th.mean_theta(rng.uniform(-0.3, 0.3, (5, th.POSE_DIM)))
    gt2d = rng.normal(0.0, 0.5, (2, 2, len(template.keypoint_spec)))
    vis = np.ones((2, len(template.keypoint_spec)))

    def fn():
        phi = encoder(ad.constant(obs))
        estimates = ief_regress(regressor, phi, theta_bar, steps=3, train=False)
        _, _, kp2d = compose_projection(estimates[-1], template)
        l_reproj = reprojection_loss(kp2d, gt2d, vis)
        scores = [bank(th.split_tensor(e)[1], th.split_tensor(e)[0]) for e in estimates]
        return l_reproj + encoder_adv_loss(scores)

    params = list(store.tensors().values())
    return {"full_graph": ad.grad_check(fn, params, step=step)}


def run_grad_checks(seed=0, step=1e-6):
    """All subsystems; returns {check_name: max relative error}."""
    report = {}
    for prefix, results in (
        ("primitive", check_primitives(seed, step)),
        ("body", check_body_model(seed, step)),
        ("camera", check_projection(seed, step)),
        ("loss", check_losses(seed, step)),
        ("graph", check_full_graph(seed, step)),
    ):
        for name, err in results.items():
            report["%s/%s" % (prefix, name)] = err
    return report
