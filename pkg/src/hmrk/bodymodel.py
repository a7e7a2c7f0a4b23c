"""Differentiable articulated body model.

A template mesh is shaped by linear blendshapes, its skeleton is posed by
forward kinematics over per-joint axis-angle rotations, the surface follows
via linear blend skinning, and sparse 3D keypoints are regressed linearly
from the posed vertices. Everything is built from autodiff primitives, so
meshes and keypoints are differentiable in pose and shape.

Conventions: vertices are (3, N) column-major points in meters, y points
down (image-aligned), z grows away from the viewer. Joint 0 is the root;
the 23 articulated joints take axis-angle parameters. Rotating a joint
pivots its whole subtree about the joint's rest position; the root slot of
forward_kinematics rotates about the origin.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import container
from .theta import NUM_JOINTS, POSE_DIM, SHAPE_DIM
from .validation import as_float_array, as_int_array, check_finite

NUM_BONES = NUM_JOINTS + 1  # 24 transforms including root

# SMPL-topology kinematic tree (index = joint, value = parent; root is -1).
PARENTS = np.array(
    [-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21],
    dtype=np.int64,
)

JOINT_NAMES = [
    "pelvis", "hip_l", "hip_r", "spine1", "knee_l", "knee_r", "spine2",
    "ankle_l", "ankle_r", "spine3", "foot_l", "foot_r", "neck", "collar_l",
    "collar_r", "head", "shoulder_l", "shoulder_r", "elbow_l", "elbow_r",
    "wrist_l", "wrist_r", "hand_l", "hand_r",
]

# Body-part id per joint: 0 head, 1 torso, 2 left arm, 3 right arm,
# 4 left leg, 5 right leg. Pixel labels add 1 (0 is background).
PART_OF_JOINT = np.array(
    [1, 4, 5, 1, 4, 5, 1, 4, 5, 1, 4, 5, 0, 1, 1, 0, 2, 3, 2, 3, 2, 3, 2, 3],
    dtype=np.int64,
)
PART_NAMES = ["head", "torso", "arm_l", "arm_r", "leg_l", "leg_r"]

# Keypoint order: 14 regressed body points then 5 face vertex points.
KEYPOINT_NAMES = [
    "ankle_r", "knee_r", "hip_r", "hip_l", "knee_l", "ankle_l",
    "wrist_r", "elbow_r", "shoulder_r", "shoulder_l", "elbow_l", "wrist_l",
    "neck", "head_top",
    "nose", "eye_l", "eye_r", "ear_l", "ear_r",
]
NUM_KEYPOINTS = len(KEYPOINT_NAMES)  # 19
NUM_BODY_KEYPOINTS = 14              # regression entries; 3D metrics use these
HIP_KEYPOINTS = (2, 3)               # root definition for root-relative losses


class ModelError(Exception):
    pass


@dataclass
class KeypointSpec:
    """P keypoints, each a linear regression row over vertices or a vertex id."""

    rows: list = field(default_factory=list)  # ("regress", (N,) weights) | ("vertex", id)
    names: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def matrix(self, n_vertices):
        """Dense (P, N) regression matrix; vertex-id entries become one-hot rows."""
        mat = np.zeros((len(self.rows), n_vertices))
        for i, (kind, value) in enumerate(self.rows):
            if kind == "vertex":
                mat[i, int(value)] = 1.0
            else:
                mat[i] = value
        return mat


@dataclass
class BodyTemplate:
    rest_vertices: np.ndarray       # (3, N)
    faces: np.ndarray               # (F, 3) int
    shape_blendshapes: np.ndarray   # (3N, B); rows in C-order of the (3, N) mesh
    joint_regressor: np.ndarray     # (24, N)
    parent: np.ndarray              # (24,)
    skin_weights: np.ndarray        # (N, 24), rows sum to 1
    keypoint_spec: KeypointSpec
    pose_blendshapes: np.ndarray | None = None  # optional (3N, 9K)

    @property
    def num_vertices(self):
        return self.rest_vertices.shape[1]

    @property
    def num_shape_coeffs(self):
        return self.shape_blendshapes.shape[1]

    def keypoint_matrix(self):
        return self.keypoint_spec.matrix(self.num_vertices)

    def rest_joints(self):
        return self.joint_regressor @ self.rest_vertices.T  # (24, 3)

    def vertex_parts(self):
        """Part id per vertex from its dominant skinning joint."""
        return PART_OF_JOINT[np.argmax(self.skin_weights, axis=1)]


def validate(template):
    """Check every structural invariant; raises ModelError naming the field."""
    t = template
    n = t.rest_vertices.shape[1]
    if t.rest_vertices.shape[0] != 3:
        raise ModelError("rest_vertices: expected (3, N), got %s" % (t.rest_vertices.shape,))
    check_finite(t.rest_vertices, "rest_vertices")
    if t.parent.shape != (NUM_BONES,):
        raise ModelError("parent: expected %d joints (K = %d)" % (NUM_BONES, NUM_JOINTS))
    if t.parent[0] != -1:
        raise ModelError("parent: joint 0 must be the root")
    for j in range(1, NUM_BONES):
        if not 0 <= t.parent[j] < j:
            raise ModelError("parent: entry %d must point to an earlier joint" % j)
    if t.joint_regressor.shape != (NUM_BONES, n):
        raise ModelError("joint_regressor: expected (%d, %d)" % (NUM_BONES, n))
    if t.skin_weights.shape != (n, NUM_BONES):
        raise ModelError("skin_weights: expected (%d, %d)" % (n, NUM_BONES))
    if np.any(t.skin_weights < 0):
        raise ModelError("skin_weights: negative entries")
    sums = t.skin_weights.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise ModelError("skin_weights: row sums deviate from 1 by more than 1e-9")
    if t.faces.ndim != 2 or t.faces.shape[1] != 3:
        raise ModelError("faces: expected (F, 3)")
    if t.faces.size and (t.faces.min() < 0 or t.faces.max() >= n):
        raise ModelError("faces: vertex index out of range")
    if t.shape_blendshapes.ndim != 2 or t.shape_blendshapes.shape[0] != 3 * n:
        raise ModelError("shape_blendshapes: expected (3N, B)")
    if t.shape_blendshapes.shape[1] != SHAPE_DIM:
        raise ModelError("shape_blendshapes: expected B = %d columns" % SHAPE_DIM)
    if t.pose_blendshapes is not None and t.pose_blendshapes.shape != (3 * n, 9 * NUM_JOINTS):
        raise ModelError("pose_blendshapes: expected (3N, %d)" % (9 * NUM_JOINTS))
    for i, (kind, value) in enumerate(t.keypoint_spec.rows):
        if kind == "vertex":
            if not 0 <= int(value) < n:
                raise ModelError("keypoint_spec: vertex id %d out of range at entry %d" % (value, i))
        elif kind == "regress":
            if np.asarray(value).shape != (n,):
                raise ModelError("keypoint_spec: regression row %d has wrong length" % i)
        else:
            raise ModelError("keypoint_spec: unknown entry kind %r" % kind)
    return t


# -- rotations -------------------------------------------------------------

_SMALL_ANGLE = 1e-8


def rodrigues(axis_angle):
    """Axis-angle (..., 3) tensors to rotation matrices (..., 3, 3).

    Uses R = I + a [v]_x + b [v]_x^2 with a = sin(t)/t, b = (1 - cos(t))/t^2
    on the unnormalized vector v, switching both coefficients to their
    second-order series below t = 1e-8 so gradients stay finite at zero.
    """
    v = ad.as_tensor(axis_angle)
    lead = v.shape[:-1]
    m = int(np.prod(lead)) if lead else 1
    v = ad.reshape(v, (m, 3))

    sq = ad.tsum(ad.square(v), axis=1, keepdims=True)          # t^2, (m, 1)
    near_zero = (sq.data < _SMALL_ANGLE**2).astype(np.float64)
    safe = sq + ad.constant(near_zero)                          # avoids 0 division
    angle = ad.sqrt(safe)
    a_exact = ad.div(ad.sin(angle), angle)
    b_exact = ad.div(1.0 - ad.cos(angle), safe)
    a_taylor = 1.0 - sq * (1.0 / 6.0)
    b_taylor = 0.5 - sq * (1.0 / 24.0)
    blend = ad.constant(near_zero)
    keep = ad.constant(1.0 - near_zero)
    a = a_exact * keep + a_taylor * blend
    b = b_exact * keep + b_taylor * blend

    x = v[:, 0:1]
    y = v[:, 1:2]
    z = v[:, 2:3]
    zero = ad.constant(np.zeros((m, 1)))
    k = ad.concat([zero, -z, y, z, zero, -x, -y, x, zero], axis=1)
    k = ad.reshape(k, (m, 3, 3))
    k2 = ad.matmul(k, k)
    eye = ad.constant(np.broadcast_to(np.eye(3), (m, 3, 3)).copy())
    r = eye + ad.reshape(a, (m, 1, 1)) * k + ad.reshape(b, (m, 1, 1)) * k2
    return ad.reshape(r, lead + (3, 3))


def rodrigues_np(axis_angle):
    """Plain-ndarray convenience wrapper around rodrigues()."""
    return rodrigues(ad.constant(np.asarray(axis_angle, dtype=np.float64))).data


# -- shape, kinematics, skinning --------------------------------------------


def shape_vertices(template, beta):
    """Shaped rest mesh: rest + blendshapes . beta. (B?, 10) -> (B?, 3, N)."""
    beta = ad.as_tensor(beta)
    single = beta.ndim == 1
    if single:
        beta = ad.reshape(beta, (1, SHAPE_DIM))
    n = template.num_vertices
    disp = ad.matmul(beta, ad.constant(template.shape_blendshapes.T))  # (B, 3N)
    verts = ad.reshape(disp, (beta.shape[0], 3, n)) + ad.constant(template.rest_vertices)
    return verts[0] if single else verts


def _pose_rotmats(pose):
    """(B, 69) axis-angle to (B, 23, 3, 3)."""
    b = pose.shape[0]
    return rodrigues(ad.reshape(pose, (b, NUM_JOINTS, 3)))


def forward_kinematics(rest_joints, pose, global_rot=None):
    """World rigid transforms per joint.

    rest_joints: (B, 3, 24) tensor of shaped rest joint positions.
    pose: (B, 69) axis-angle for joints 1..23.
    global_rot: optional (B, 3, 3) rotation applied at the root (about the
    origin). Identity when omitted; in the training path the global rotation
    lives in the camera instead.

    Returns (B, 24, 4, 4). By construction the rest-pose inverse is baked
    in: at zero pose and identity global rotation every transform is the
    identity, so skinning reproduces the shaped mesh.
    """
    b = rest_joints.shape[0]
    rots = _pose_rotmats(pose)  # (B, 23, 3, 3)
    bottom = ad.constant(np.broadcast_to(np.array([0.0, 0.0, 0.0, 1.0]), (b, 1, 4)).copy())

    def make_local(r, pivot):
        # rotation about `pivot`: [R | p - R p]
        shift = pivot - ad.matmul(r, pivot)
        top = ad.concat([r, shift], axis=2)  # (B, 3, 4)
        return ad.concat([top, bottom], axis=1)  # (B, 4, 4)

    if global_rot is None:
        global_rot = ad.constant(np.broadcast_to(np.eye(3), (b, 3, 3)).copy())
    origin = ad.constant(np.zeros((b, 3, 1)))
    transforms = [make_local(global_rot, origin)]
    for j in range(1, NUM_BONES):
        pivot = rest_joints[:, :, j : j + 1]
        local = make_local(rots[:, j - 1], pivot)
        transforms.append(ad.matmul(transforms[PARENTS[j]], local))
    stacked = ad.concat([ad.reshape(t, (b, 1, 4, 4)) for t in transforms], axis=1)
    return stacked


def linear_blend_skinning(shaped_vertices, transforms, skin_weights):
    """Pose the mesh: each vertex follows its weight-blended joint transform.

    shaped_vertices: (B, 3, N); transforms: (B, 24, 4, 4) with rest inverse
    baked in; skin_weights: (N, 24) ndarray. Returns (B, 3, N).
    """
    b = shaped_vertices.shape[0]
    n = shaped_vertices.shape[2]
    flat = ad.reshape(transforms, (b, NUM_BONES, 16))
    blended = ad.matmul(ad.constant(skin_weights), flat)        # (B, N, 16)
    blended = ad.reshape(blended, (b, n, 4, 4))
    verts = ad.swap_last_axes(shaped_vertices)                  # (B, N, 3)
    ones = ad.constant(np.ones((b, n, 1)))
    homo = ad.reshape(ad.concat([verts, ones], axis=2), (b, n, 4, 1))
    posed = ad.matmul(blended, homo)                            # (B, N, 4, 1)
    posed = ad.reshape(posed, (b, n, 4))[:, :, 0:3]
    return ad.swap_last_axes(posed)


def regress_keypoints(mesh, keypoint_matrix):
    """Sparse keypoints from the posed mesh: (B?, 3, N) -> (B?, 3, P)."""
    mesh = ad.as_tensor(mesh)
    km = ad.constant(np.asarray(keypoint_matrix, dtype=np.float64).T)  # (N, P)
    return ad.matmul(mesh, km)


def posed_mesh(template, pose, beta, global_rot=None):
    """Full model: (B?, 69), (B?, 10) -> posed mesh (B?, 3, N).

    `global_rot` may be (B?, 3, 3). Applies the optional pose blendshapes
    additively before skinning when the template carries them.
    """
    pose = ad.as_tensor(pose)
    beta = ad.as_tensor(beta)
    single = pose.ndim == 1
    if single:
        pose = ad.reshape(pose, (1, POSE_DIM))
        beta = ad.reshape(beta, (1, SHAPE_DIM))
        if global_rot is not None:
            global_rot = ad.reshape(ad.as_tensor(global_rot), (1, 3, 3))
    if pose.shape[-1] != POSE_DIM:
        raise ModelError("pose: expected %d values, got %s" % (POSE_DIM, pose.shape))
    if beta.shape[-1] != SHAPE_DIM:
        raise ModelError("beta: expected %d values, got %s" % (SHAPE_DIM, beta.shape))
    b = pose.shape[0]
    n = template.num_vertices

    shaped = shape_vertices(template, beta)  # (B, 3, N)
    if template.pose_blendshapes is not None:
        rots = _pose_rotmats(pose)
        eye = ad.constant(np.broadcast_to(np.eye(3), (b, NUM_JOINTS, 3, 3)).copy())
        feats = ad.reshape(rots - eye, (b, 9 * NUM_JOINTS))
        disp = ad.matmul(feats, ad.constant(template.pose_blendshapes.T))
        shaped = shaped + ad.reshape(disp, (b, 3, n))

    joints = ad.matmul(ad.constant(template.joint_regressor), ad.swap_last_axes(shaped))
    rest_joints = ad.swap_last_axes(joints)  # (B, 3, 24)
    transforms = forward_kinematics(rest_joints, pose, global_rot)
    mesh = linear_blend_skinning(shaped, transforms, template.skin_weights)
    return mesh[0] if single else mesh


def model_keypoints(template, pose, beta, global_rot=None):
    """X(pose, beta): posed 3D keypoints (B?, 3, P)."""
    mesh = posed_mesh(template, pose, beta, global_rot)
    return regress_keypoints(mesh, template.keypoint_matrix())


# -- persistence -------------------------------------------------------------

MODEL_KIND = "body-model"


def save_model(template, path):
    validate(template)
    spec = template.keypoint_spec
    kinds = np.array([0 if k == "vertex" else 1 for k, _ in spec.rows], dtype=np.int64)
    vertex_ids = np.array(
        [int(v) if k == "vertex" else -1 for k, v in spec.rows], dtype=np.int64
    )
    reg_rows = np.zeros((len(spec.rows), template.num_vertices))
    for i, (k, v) in enumerate(spec.rows):
        if k == "regress":
            reg_rows[i] = v
    arrays = {
        "rest_vertices": template.rest_vertices,
        "faces": template.faces,
        "shape_blendshapes": template.shape_blendshapes,
        "joint_regressor": template.joint_regressor,
        "parent": template.parent,
        "skin_weights": template.skin_weights,
        "keypoint_kinds": kinds,
        "keypoint_vertex_ids": vertex_ids,
        "keypoint_rows": reg_rows,
    }
    if template.pose_blendshapes is not None:
        arrays["pose_blendshapes"] = template.pose_blendshapes
    meta = {
        "N": template.num_vertices,
        "K": NUM_JOINTS,
        "B": template.num_shape_coeffs,
        "P": len(spec),
        "keypoint_names": spec.names,
    }
    container.save(path, arrays, meta=meta, kind=MODEL_KIND)


def load_model(path):
    try:
        arrays, meta, _ = container.load(path, expect_kind=MODEL_KIND)
    except container.ContainerError as exc:
        raise ModelError(str(exc))
    if meta.get("K") != NUM_JOINTS:
        raise ModelError(
            "model file has K = %r articulated joints; this build fixes K = %d"
            % (meta.get("K"), NUM_JOINTS)
        )
    rows = []
    kinds = arrays["keypoint_kinds"]
    ids = arrays["keypoint_vertex_ids"]
    regs = as_float_array(arrays["keypoint_rows"], "keypoint_rows")
    for i in range(len(kinds)):
        if kinds[i] == 0:
            rows.append(("vertex", int(ids[i])))
        else:
            rows.append(("regress", regs[i]))
    spec = KeypointSpec(rows=rows, names=list(meta.get("keypoint_names", [])))
    template = BodyTemplate(
        rest_vertices=as_float_array(arrays["rest_vertices"], "rest_vertices"),
        faces=as_int_array(arrays["faces"], "faces"),
        shape_blendshapes=as_float_array(arrays["shape_blendshapes"], "shape_blendshapes"),
        joint_regressor=as_float_array(arrays["joint_regressor"], "joint_regressor"),
        parent=as_int_array(arrays["parent"], "parent"),
        skin_weights=as_float_array(arrays["skin_weights"], "skin_weights"),
        keypoint_spec=spec,
        pose_blendshapes=(
            as_float_array(arrays["pose_blendshapes"], "pose_blendshapes")
            if "pose_blendshapes" in arrays
            else None
        ),
    )
    return validate(template)
