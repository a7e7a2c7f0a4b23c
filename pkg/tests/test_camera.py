import numpy as np
import pytest

from hmrk import autodiff as ad
from hmrk import theta as th
from hmrk.bodymodel import rodrigues_np, model_keypoints
from hmrk.camera import CameraParams, compose_projection, project, project_cam
from hmrk.synthbody import TemplateConfig, synth_template


@pytest.fixture(scope="module")
def template():
    return synth_template(TemplateConfig(target_vertices=200))


def test_orthographic_drop():
    out = project_cam(np.array([[1.0], [2.0], [5.0]]), CameraParams())
    assert np.allclose(out.data, [[1.0], [2.0]])


def test_scale_then_translate():
    cam = CameraParams(scale=2.0, trans=np.array([1.0, 1.0]))
    out = project_cam(np.array([[1.0], [2.0], [5.0]]), cam)
    assert np.allclose(out.data, [[3.0], [5.0]])


def test_rotation_before_projection():
    cam = CameraParams(global_rot=np.array([0.0, 0.0, np.pi / 2]))
    out = project_cam(np.array([[1.0], [0.0], [0.0]]), cam)
    assert np.allclose(out.data, [[0.0], [1.0]], atol=1e-12)


def test_depth_shift_invisible():
    rng = np.random.default_rng(0)
    pts = rng.normal(0, 1, (3, 9))
    cam = CameraParams(scale=0.8, global_rot=rng.normal(0, 1, 3), trans=rng.normal(0, 0.2, 2))
    base = project_cam(pts, cam).data
    # shift along the camera's depth axis: X + c * R^T e_z
    r = rodrigues_np(cam.global_rot)
    shifted = pts + 3.7 * (r.T @ np.array([0.0, 0.0, 1.0]))[:, None]
    assert np.allclose(project_cam(shifted, cam).data, base, atol=1e-12)


def test_projection_gradients_match_fd():
    rng = np.random.default_rng(1)
    pts = ad.Tensor(rng.normal(0, 1, (3, 6)), requires_grad=True)
    aa = ad.Tensor(rng.normal(0, 0.7, 3), requires_grad=True)
    s = ad.Tensor(np.array([1.1]), requires_grad=True)
    t = ad.Tensor(rng.normal(0, 0.3, (2, 1)), requires_grad=True)
    w = rng.normal(0, 1, (2, 6))

    def fn():
        from hmrk.bodymodel import rodrigues

        return ad.tsum(project(pts, s, rodrigues(aa), t) * ad.constant(w))

    assert ad.grad_check(fn, [pts, aa, s, t]) < 1e-5


class TestComposeProjection:
    def test_mean_zero_pose_equals_scaled_rest_keypoints(self, template):
        s, t = 0.9, np.array([0.05, -0.1])
        vec = th.pack(np.zeros(69), np.zeros(10), np.zeros(3), t, [s])
        _, _, kp2d = compose_projection(vec, template)
        rest_kp = template.keypoint_matrix() @ template.rest_vertices.T  # (P, 3)
        expect = s * rest_kp.T[:2] + t[:, None]
        assert np.allclose(kp2d.data, expect, atol=1e-9)

    def test_doubling_scale_doubles_about_translation(self, template):
        rng = np.random.default_rng(2)
        pose = rng.uniform(-0.5, 0.5, 69)
        beta = rng.normal(0, 1, 10)
        rot = rng.normal(0, 0.5, 3)
        t = rng.normal(0, 0.2, 2)
        v1 = th.pack(pose, beta, rot, t, [0.7])
        v2 = th.pack(pose, beta, rot, t, [1.4])
        _, _, k1 = compose_projection(v1, template)
        _, _, k2 = compose_projection(v2, template)
        assert np.allclose(k2.data - t[:, None], 2.0 * (k1.data - t[:, None]), atol=1e-9)

    def test_equals_step_by_step_pipeline(self, template):
        rng = np.random.default_rng(3)
        pose = rng.uniform(-0.5, 0.5, 69)
        beta = rng.normal(0, 1, 10)
        cam = CameraParams(scale=0.85, global_rot=rng.normal(0, 0.7, 3),
                           trans=rng.normal(0, 0.2, 2))
        vec = th.pack(pose, beta, cam.global_rot, cam.trans, [cam.scale])
        _, kp3d, kp2d = compose_projection(vec, template)
        kp_body = model_keypoints(template, pose, beta).data
        manual2d = project_cam(kp_body, cam).data
        assert np.allclose(kp2d.data, manual2d, atol=1e-12)
        r = rodrigues_np(cam.global_rot)
        assert np.allclose(kp3d.data, r @ kp_body, atol=1e-12)

    def test_batched_matches_single(self, template):
        rng = np.random.default_rng(4)
        vecs = np.stack([
            th.pack(rng.uniform(-0.5, 0.5, 69), rng.normal(0, 1, 10),
                    rng.normal(0, 0.5, 3), rng.normal(0, 0.2, 2), [rng.uniform(0.6, 1.2)])
            for _ in range(3)
        ])
        _, kp3d_b, kp2d_b = compose_projection(ad.constant(vecs), template)
        for i in range(3):
            _, kp3d, kp2d = compose_projection(vecs[i], template)
            assert np.allclose(kp2d_b.data[i], kp2d.data, atol=1e-12)
            assert np.allclose(kp3d_b.data[i], kp3d.data, atol=1e-12)
