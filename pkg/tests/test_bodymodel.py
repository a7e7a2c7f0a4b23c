import numpy as np
import pytest

from hmrk import autodiff as ad
from hmrk import bodymodel as bm
from hmrk.synthbody import TemplateConfig, synth_template


@pytest.fixture(scope="module")
def template():
    return synth_template(TemplateConfig(target_vertices=240))


def rand_rotation(rng):
    return bm.rodrigues_np(rng.normal(0, 1.2, 3))


class TestRodrigues:
    def test_zero_is_identity(self):
        assert np.allclose(bm.rodrigues_np([0, 0, 0]), np.eye(3), atol=1e-15)

    def test_half_turn_x(self):
        assert np.allclose(bm.rodrigues_np([np.pi, 0, 0]), np.diag([1.0, -1.0, -1.0]), atol=1e-12)

    def test_quarter_turn_z(self):
        expect = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        assert np.allclose(bm.rodrigues_np([0, 0, np.pi / 2]), expect, atol=1e-12)

    def test_proper_rotations_at_random_angles(self):
        rng = np.random.default_rng(0)
        vs = rng.normal(0, 1.5, (50, 3))
        rs = bm.rodrigues_np(vs)
        for r in rs:
            assert np.allclose(r.T @ r, np.eye(3), atol=1e-12)
            assert np.isclose(np.linalg.det(r), 1.0, atol=1e-12)

    def test_tiny_angles_stay_finite_and_accurate(self):
        v = ad.Tensor(np.array([1e-9, -2e-10, 5e-10]), requires_grad=True)
        r = bm.rodrigues(v)
        ad.tsum(r * ad.constant(np.arange(9.0).reshape(3, 3))).backward()
        assert np.all(np.isfinite(v.grad))
        assert np.allclose(r.data, np.eye(3), atol=1e-8)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        v = ad.Tensor(rng.normal(0, 0.8, 3), requires_grad=True)
        w = rng.normal(0, 1, (3, 3))
        err = ad.grad_check(lambda: ad.tsum(bm.rodrigues(v) * ad.constant(w)), [v])
        assert err < 1e-6


class TestShapeVertices:
    def test_zero_beta_is_template(self, template):
        out = bm.shape_vertices(template, np.zeros(10))
        assert np.array_equal(out.data, template.rest_vertices)

    def test_basis_vector_adds_one_column(self, template):
        e1 = np.zeros(10)
        e1[1] = 1.0
        out = bm.shape_vertices(template, e1).data
        n = template.num_vertices
        expect = template.rest_vertices + template.shape_blendshapes[:, 1].reshape(3, n)
        assert np.allclose(out, expect, atol=1e-12)

    def test_superposition(self, template):
        rng = np.random.default_rng(2)
        b1 = rng.normal(0, 1, 10)
        b2 = rng.normal(0, 1, 10)
        rest = template.rest_vertices
        s1 = bm.shape_vertices(template, b1).data - rest
        s2 = bm.shape_vertices(template, b2).data - rest
        s12 = bm.shape_vertices(template, b1 + b2).data - rest
        assert np.allclose(s1 + s2, s12, atol=1e-9)


class TestForwardKinematics:
    def fk(self, template, pose, rot=None):
        joints = template.rest_joints().T[None]  # (1, 3, 24)
        rot_t = None if rot is None else ad.constant(rot[None])
        transforms = bm.forward_kinematics(
            ad.constant(joints), ad.constant(pose[None]), rot_t
        )
        return transforms.data[0]

    def joint_positions(self, template, transforms):
        rest = template.rest_joints()  # (24, 3)
        homo = np.concatenate([rest, np.ones((24, 1))], axis=1)
        return np.einsum("jab,jb->ja", transforms, homo)[:, :3]

    def test_zero_pose_identity(self, template):
        t = self.fk(template, np.zeros(69))
        assert np.allclose(t, np.broadcast_to(np.eye(4), (24, 4, 4)), atol=1e-12)
        pos = self.joint_positions(template, t)
        assert np.allclose(pos, template.rest_joints(), atol=1e-12)

    def test_global_rotation_moves_all_joints_rigidly(self, template):
        rng = np.random.default_rng(3)
        r = rand_rotation(rng)
        t = self.fk(template, np.zeros(69), rot=r)
        pos = self.joint_positions(template, t)
        assert np.allclose(pos, template.rest_joints() @ r.T, atol=1e-12)

    def test_transforms_are_rigid_for_random_poses(self, template):
        rng = np.random.default_rng(4)
        for _ in range(5):
            pose = rng.uniform(-1.0, 1.0, 69)
            t = self.fk(template, pose, rot=rand_rotation(rng))
            rots = t[:, :3, :3]
            for r in rots:
                assert np.allclose(r.T @ r, np.eye(3), atol=1e-9)
                assert np.isclose(np.linalg.det(r), 1.0, atol=1e-9)

    def test_three_joint_chain_against_hand_composition(self, template):
        # rotate a single mid-chain joint; descendants must pivot about it
        rng = np.random.default_rng(5)
        j = 18  # elbow_l, parent 16 (shoulder_l), child 20 (wrist_l)
        aa = rng.normal(0, 0.8, 3)
        pose = np.zeros(69)
        pose[(j - 1) * 3 : j * 3] = aa
        t = self.fk(template, pose)
        pos = self.joint_positions(template, t)
        rest = template.rest_joints()
        r = bm.rodrigues_np(aa)

        def pivot(x):
            return r @ (x - rest[j]) + rest[j]

        # ancestors and unrelated joints stay; j itself is the pivot
        assert np.allclose(pos[16], rest[16], atol=1e-12)
        assert np.allclose(pos[j], rest[j], atol=1e-12)
        # descendants (wrist 20, hand 22) move rigidly about joint j
        assert np.allclose(pos[20], pivot(rest[20]), atol=1e-12)
        assert np.allclose(pos[22], pivot(rest[22]), atol=1e-12)


class TestSkinning:
    def test_zero_pose_returns_shaped_mesh(self, template):
        rng = np.random.default_rng(6)
        beta = rng.normal(0, 1, 10)
        shaped = bm.shape_vertices(template, beta).data
        mesh = bm.posed_mesh(template, np.zeros(69), beta).data
        assert np.abs(mesh - shaped).max() < 1e-9

    def test_one_hot_weights_move_rigidly(self):
        template = synth_template(TemplateConfig(target_vertices=160))
        hard = template.skin_weights.copy()
        hard[:] = 0.0
        dominant = np.argmax(synth_template(TemplateConfig(target_vertices=160)).skin_weights, axis=1)
        hard[np.arange(len(hard)), dominant] = 1.0
        template.skin_weights = hard

        rng = np.random.default_rng(7)
        pose = rng.uniform(-0.7, 0.7, 69)
        joints = template.rest_joints().T[None]
        transforms = bm.forward_kinematics(
            ad.constant(joints), ad.constant(pose[None])
        ).data[0]
        mesh = bm.posed_mesh(template, pose, np.zeros(10)).data
        rest = template.rest_vertices
        homo = np.concatenate([rest, np.ones((1, rest.shape[1]))], axis=0)
        for v in range(0, rest.shape[1], 17):
            j = dominant[v]
            expect = (transforms[j] @ homo[:, v])[:3]
            assert np.allclose(mesh[:, v], expect, atol=1e-12)

    def test_blend_of_two_transforms_is_affine_midpoint(self, template):
        # one vertex weighted half/half between pelvis and a rotated hip
        rng = np.random.default_rng(8)
        pose = np.zeros(69)
        pose[0:3] = [0, 0, np.pi]  # hip_l is joint 1 -> pose block 0
        joints = template.rest_joints().T[None]
        transforms = bm.forward_kinematics(
            ad.constant(joints), ad.constant(pose[None])
        ).data[0]
        v = rng.normal(0, 0.4, 3)
        homo = np.append(v, 1.0)
        blend = 0.5 * transforms[0] + 0.5 * transforms[1]
        image_a = (transforms[0] @ homo)[:3]
        image_b = (transforms[1] @ homo)[:3]
        assert np.allclose((blend @ homo)[:3], 0.5 * image_a + 0.5 * image_b, atol=1e-12)


class TestKeypoints:
    def test_vertex_entry_copies_column(self, template):
        spec = bm.KeypointSpec(rows=[("vertex", 5)])
        mesh = template.rest_vertices
        out = bm.regress_keypoints(ad.constant(mesh), spec.matrix(template.num_vertices))
        assert np.array_equal(out.data[:, 0], mesh[:, 5])

    def test_uniform_row_is_centroid(self, template):
        n = template.num_vertices
        spec = bm.KeypointSpec(rows=[("regress", np.full(n, 1.0 / n))])
        out = bm.regress_keypoints(ad.constant(template.rest_vertices), spec.matrix(n))
        assert np.allclose(out.data[:, 0], template.rest_vertices.mean(axis=1), atol=1e-12)

    def test_default_spec_has_19_entries(self, template):
        assert len(template.keypoint_spec) == 19
        kinds = [k for k, _ in template.keypoint_spec.rows]
        assert kinds.count("regress") == 14
        assert kinds.count("vertex") == 5

    def test_rotation_equivariance(self, template):
        rng = np.random.default_rng(9)
        pose = rng.uniform(-0.8, 0.8, 69)
        beta = rng.normal(0, 1, 10)
        r = rand_rotation(rng)
        kp_r = bm.model_keypoints(template, pose, beta, global_rot=r).data
        kp_i = bm.model_keypoints(template, pose, beta).data
        assert np.abs(kp_r - r @ kp_i).max() < 1e-9


class TestPoseBlendshapes:
    def test_additive_hook_applied_before_skinning(self, template):
        rng = np.random.default_rng(10)
        n = template.num_vertices
        posedirs = rng.normal(0, 1e-3, (3 * n, 9 * 23))
        with_pb = bm.BodyTemplate(
            rest_vertices=template.rest_vertices,
            faces=template.faces,
            shape_blendshapes=template.shape_blendshapes,
            joint_regressor=template.joint_regressor,
            parent=template.parent,
            skin_weights=template.skin_weights,
            keypoint_spec=template.keypoint_spec,
            pose_blendshapes=posedirs,
        )
        # zero pose: every rotation is the identity, so the hook adds nothing
        mesh0 = bm.posed_mesh(with_pb, np.zeros(69), np.zeros(10)).data
        assert np.abs(mesh0 - template.rest_vertices).max() < 1e-12
        # nonzero pose: outputs differ from the plain template
        pose = rng.uniform(-0.5, 0.5, 69)
        a = bm.posed_mesh(with_pb, pose, np.zeros(10)).data
        b = bm.posed_mesh(template, pose, np.zeros(10)).data
        assert np.abs(a - b).max() > 0


class TestModelIO:
    def test_roundtrip_bit_identical(self, template, tmp_path):
        path = tmp_path / "model.bin"
        bm.save_model(template, path)
        loaded = bm.load_model(path)
        assert np.array_equal(loaded.rest_vertices, template.rest_vertices)
        assert np.array_equal(loaded.skin_weights, template.skin_weights)
        assert np.array_equal(loaded.faces, template.faces)
        assert np.array_equal(loaded.shape_blendshapes, template.shape_blendshapes)
        assert loaded.keypoint_spec.rows[-1][0] == "vertex"

    def test_bad_skin_weights_rejected(self, template, tmp_path):
        path = tmp_path / "model.bin"
        bm.save_model(template, path)
        broken = bm.load_model(path)
        broken.skin_weights = broken.skin_weights * 0.9
        with pytest.raises(bm.ModelError, match="skin_weights"):
            bm.validate(broken)

    def test_wrong_joint_count_rejected(self, template, tmp_path):
        path = tmp_path / "model.bin"
        bm.save_model(template, path)
        import json

        with open(path, "rb") as fh:
            header = json.loads(fh.readline())
            body = fh.read()
        header["meta"]["K"] = 21
        import io

        with open(tmp_path / "bad.bin", "wb") as fh:
            fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode())
            fh.write(b"\n")
            fh.write(body)
        with pytest.raises(bm.ModelError, match="K"):
            bm.load_model(tmp_path / "bad.bin")

    def test_truncated_file_rejected(self, template, tmp_path):
        path = tmp_path / "model.bin"
        bm.save_model(template, path)
        raw = path.read_bytes()
        (tmp_path / "trunc.bin").write_bytes(raw[: len(raw) // 2])
        with pytest.raises(bm.ModelError):
            bm.load_model(tmp_path / "trunc.bin")


class TestSynthTemplate:
    def test_deterministic(self):
        a = synth_template(TemplateConfig(seed=3))
        b = synth_template(TemplateConfig(seed=3))
        assert np.array_equal(a.rest_vertices, b.rest_vertices)
        assert np.array_equal(a.skin_weights, b.skin_weights)

    def test_passes_validation(self, template):
        bm.validate(template)

    def test_blendshape_zero_is_uniform_scale(self, template):
        c = 1.7
        coeff = TemplateConfig().uniform_scale_coeff
        beta = np.zeros(10)
        beta[0] = c
        out = bm.shape_vertices(template, beta).data
        assert np.allclose(out, (1 + c * coeff) * template.rest_vertices, atol=1e-12)
