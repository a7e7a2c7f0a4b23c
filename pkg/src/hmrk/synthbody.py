"""Procedural low-poly humanoid template generator.

Builds a capsule-limb body over the fixed 24-joint tree: ring strips of
vertices along every bone, smooth two-joint skinning weights, a joint
regressor that reads each joint position back off the rings around it, ten
documented shape blendshapes, and the 19-entry keypoint table (14 regressed
body points + 5 face vertex ids). Deterministic given the config.

Coordinates: meters, pelvis at the origin, y down (head at negative y),
x toward the subject's left as seen by the viewer, z away from the viewer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bodymodel import (
    BodyTemplate,
    JOINT_NAMES,
    KEYPOINT_NAMES,
    KeypointSpec,
    NUM_BONES,
    PARENTS,
    validate,
)
from .theta import NUM_JOINTS

_J = {name: i for i, name in enumerate(JOINT_NAMES)}

# Rest joint positions (x left, y down, z depth), pelvis at origin.
_REST_JOINTS = {
    "pelvis": (0.0, 0.0, 0.0),
    "hip_l": (0.09, 0.06, 0.0),
    "hip_r": (-0.09, 0.06, 0.0),
    "spine1": (0.0, -0.12, 0.0),
    "knee_l": (0.10, 0.48, 0.0),
    "knee_r": (-0.10, 0.48, 0.0),
    "spine2": (0.0, -0.26, 0.0),
    "ankle_l": (0.11, 0.90, 0.0),
    "ankle_r": (-0.11, 0.90, 0.0),
    "spine3": (0.0, -0.40, 0.0),
    "foot_l": (0.12, 0.96, -0.10),
    "foot_r": (-0.12, 0.96, -0.10),
    "neck": (0.0, -0.55, 0.0),
    "collar_l": (0.07, -0.50, 0.0),
    "collar_r": (-0.07, -0.50, 0.0),
    "head": (0.0, -0.66, 0.0),
    "shoulder_l": (0.19, -0.52, 0.0),
    "shoulder_r": (-0.19, -0.52, 0.0),
    "elbow_l": (0.45, -0.52, 0.0),
    "elbow_r": (-0.45, -0.52, 0.0),
    "wrist_l": (0.70, -0.52, 0.0),
    "wrist_r": (-0.70, -0.52, 0.0),
    "hand_l": (0.79, -0.52, 0.0),
    "hand_r": (-0.79, -0.52, 0.0),
}

# Capsule radii (start, end) per bone, indexed by the child joint.
_BONE_RADII = {
    "hip_l": (0.09, 0.08), "hip_r": (0.09, 0.08),
    "knee_l": (0.08, 0.06), "knee_r": (0.08, 0.06),
    "ankle_l": (0.06, 0.045), "ankle_r": (0.06, 0.045),
    "foot_l": (0.045, 0.04), "foot_r": (0.045, 0.04),
    "spine1": (0.11, 0.12), "spine2": (0.12, 0.13), "spine3": (0.13, 0.13),
    "neck": (0.13, 0.05), "head": (0.09, 0.09),
    "collar_l": (0.05, 0.05), "collar_r": (0.05, 0.05),
    "shoulder_l": (0.05, 0.055), "shoulder_r": (0.05, 0.055),
    "elbow_l": (0.055, 0.045), "elbow_r": (0.055, 0.045),
    "wrist_l": (0.045, 0.035), "wrist_r": (0.045, 0.035),
    "hand_l": (0.035, 0.03), "hand_r": (0.035, 0.03),
}

# Default per-joint axis-angle limits (radians) for the unpaired pose pool.
# Rows are (min, max) per axis in joint order 1..23 (root excluded). The
# dominant ranges sit on the z (depth) axis: z rotations swing limbs inside
# the image plane, which keeps most of the pose variation observable under
# an orthographic camera; x/y ranges add bounded out-of-plane motion.
_SWING = (-1.1, 1.1)
_TILT = (-0.2, 0.2)
_SMALL = (-0.12, 0.12)
_JOINT_LIMITS = {
    "hip_l": (_TILT, _SMALL, (-1.0, 0.4)),
    "hip_r": (_TILT, _SMALL, (-0.4, 1.0)),
    "spine1": (_SMALL, _SMALL, _TILT),
    "knee_l": (_SMALL, _SMALL, (0.0, 1.6)),
    "knee_r": (_SMALL, _SMALL, (-1.6, 0.0)),
    "spine2": (_SMALL, _SMALL, _TILT),
    "ankle_l": (_SMALL, _SMALL, _SMALL),
    "ankle_r": (_SMALL, _SMALL, _SMALL),
    "spine3": (_SMALL, _SMALL, _SMALL),
    "foot_l": (_SMALL, (-0.1, 0.1), (-0.1, 0.1)),
    "foot_r": (_SMALL, (-0.1, 0.1), (-0.1, 0.1)),
    "neck": (_SMALL, _TILT, _SMALL),
    "collar_l": ((-0.1, 0.1), (-0.1, 0.1), (-0.1, 0.1)),
    "collar_r": ((-0.1, 0.1), (-0.1, 0.1), (-0.1, 0.1)),
    "head": (_SMALL, _TILT, _TILT),
    "shoulder_l": (_TILT, _TILT, _SWING),
    "shoulder_r": (_TILT, _TILT, _SWING),
    "elbow_l": ((-0.1, 0.1), _TILT, (0.0, 2.2)),
    "elbow_r": ((-0.1, 0.1), _TILT, (-2.2, 0.0)),
    "wrist_l": (_SMALL, _SMALL, _SMALL),
    "wrist_r": (_SMALL, _SMALL, _SMALL),
    "hand_l": ((-0.1, 0.1), (-0.1, 0.1), (-0.1, 0.1)),
    "hand_r": ((-0.1, 0.1), (-0.1, 0.1), (-0.1, 0.1)),
}


def default_joint_limits():
    """(23, 3, 2) min/max axis-angle box per articulated joint."""
    out = np.zeros((NUM_JOINTS, 3, 2))
    for j in range(1, NUM_BONES):
        for axis, (lo, hi) in enumerate(_JOINT_LIMITS[JOINT_NAMES[j]]):
            out[j - 1, axis] = (lo, hi)
    return out


@dataclass
class TemplateConfig:
    target_vertices: int = 600     # vertex budget; actual count is close, not exact
    ring_sides: int = 6
    height_scale: float = 1.0      # scales the whole rest skeleton
    girth_scale: float = 1.0       # scales all capsule radii
    uniform_scale_coeff: float = 0.05  # blendshape 0: (1 + c * this) * rest
    blendshape_magnitude: float = 0.05
    seed: int = 0
    extra: dict = field(default_factory=dict)


def _smoothstep(lo, hi, x):
    t = np.clip((x - lo) / (hi - lo), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _frame(axis):
    """Two unit vectors orthogonal to `axis`."""
    axis = axis / np.linalg.norm(axis)
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 0.0, 1.0])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    return u, v


def synth_template(config=None):
    """Generate a validated BodyTemplate from the config."""
    cfg = config or TemplateConfig()
    joints = np.array([_REST_JOINTS[n] for n in JOINT_NAMES]) * cfg.height_scale  # (24, 3)

    bones = [(int(PARENTS[j]), j) for j in range(1, NUM_BONES)]
    rings_per_bone = max(2, int(round(cfg.target_vertices / (len(bones) * cfg.ring_sides))))

    verts = []
    weights = []
    faces = []
    ring_of_joint = {j: [] for j in range(NUM_BONES)}  # vertex ids regressing joint j
    bone_vertex_info = []  # (child joint, fraction, ring slot) per vertex

    for parent, child in bones:
        name = JOINT_NAMES[child]
        p0, p1 = joints[parent], joints[child]
        axis = p1 - p0
        length = np.linalg.norm(axis)
        u, v = _frame(axis if length > 1e-12 else np.array([0.0, 1.0, 0.0]))
        r0, r1 = (np.array(_BONE_RADII[name]) * cfg.girth_scale)
        grand = int(PARENTS[parent]) if parent > 0 else -1

        base = len(verts)
        n_rings = rings_per_bone + (2 if name == "head" else 0)
        for ring in range(n_rings):
            f = ring / (n_rings - 1)
            center = p0 + f * axis
            radius = r0 + f * (r1 - r0)
            if name == "head":
                # bulb: widen the middle so the head reads as a ball
                radius = radius * (0.6 + 1.5 * np.sin(min(f, 0.95) * np.pi) ** 0.8)
            w_child = 0.5 * _smoothstep(0.7, 1.0, f)
            w_grand = 0.5 * (1.0 - _smoothstep(0.0, 0.3, f)) if grand >= 0 else 0.0
            w_parent = 1.0 - w_child - w_grand
            for s in range(cfg.ring_sides):
                ang = 2.0 * np.pi * s / cfg.ring_sides
                verts.append(center + radius * (np.cos(ang) * u + np.sin(ang) * v))
                wrow = np.zeros(NUM_BONES)
                wrow[child] += w_child
                wrow[parent] += w_parent
                if grand >= 0:
                    wrow[grand] += w_grand
                weights.append(wrow)
                bone_vertex_info.append((child, f, s))
            if ring == 0:
                ring_of_joint[parent].extend(range(base + ring * cfg.ring_sides,
                                                   base + (ring + 1) * cfg.ring_sides))
            if ring == n_rings - 1:
                ring_of_joint[child].extend(range(base + ring * cfg.ring_sides,
                                                  base + (ring + 1) * cfg.ring_sides))
        for ring in range(n_rings - 1):
            a = base + ring * cfg.ring_sides
            b = base + (ring + 1) * cfg.ring_sides
            for s in range(cfg.ring_sides):
                s2 = (s + 1) % cfg.ring_sides
                faces.append((a + s, b + s, b + s2))
                faces.append((a + s, b + s2, a + s2))

    verts = np.array(verts)            # (N, 3)
    weights = np.array(weights)        # (N, 24)
    faces = np.array(faces, dtype=np.int64)
    n = len(verts)

    joint_regressor = np.zeros((NUM_BONES, n))
    for j in range(NUM_BONES):
        ids = ring_of_joint[j]
        joint_regressor[j, ids] = 1.0 / len(ids)

    blend = _build_blendshapes(cfg, verts, joints)

    spec = _build_keypoint_spec(verts, joints, ring_of_joint, bone_vertex_info)

    template = BodyTemplate(
        rest_vertices=np.ascontiguousarray(verts.T),
        faces=faces,
        shape_blendshapes=blend,
        joint_regressor=joint_regressor,
        parent=PARENTS.copy(),
        skin_weights=weights,
        keypoint_spec=spec,
    )
    return validate(template)


def _build_blendshapes(cfg, verts, joints):
    """Ten displacement fields, documented by slot:

    0 uniform scale, 1 height, 2 girth, 3 leg length, 4 arm length,
    5 torso volume, 6 head size, 7 shoulder width, 8 belly, 9 left/right lean.
    Slot 0 is exactly uniform_scale_coeff * rest so shape_vertices(c * e0)
    equals (1 + c * coeff) * rest.
    """
    n = len(verts)
    m = cfg.blendshape_magnitude
    x, y, z = verts[:, 0], verts[:, 1], verts[:, 2]
    shapes = np.zeros((n, 3, 10))

    shapes[:, :, 0] = cfg.uniform_scale_coeff * verts
    shapes[:, 1, 1] = m * y
    shapes[:, 0, 2] = m * x
    shapes[:, 2, 2] = m * z
    legs = _smoothstep(0.0, 0.25, y)
    shapes[:, 1, 3] = m * legs * y
    arm_reach = _smoothstep(0.22, 0.35, np.abs(x))
    shapes[:, 0, 4] = m * arm_reach * x
    torso = _smoothstep(0.15, 0.0, np.abs(y + 0.3)) * (np.abs(x) < 0.2)
    shapes[:, 0, 5] = m * torso * x
    shapes[:, 2, 5] = m * torso * z
    head_y = joints[15, 1]
    head = _smoothstep(0.08, 0.0, np.abs(y - head_y) - 0.06)
    shapes[:, 0, 6] = m * head * x
    shapes[:, 1, 6] = m * head * (y - head_y)
    shapes[:, 2, 6] = m * head * z
    shoulders = _smoothstep(0.06, 0.0, np.abs(y + 0.52) - 0.04)
    shapes[:, 0, 7] = m * shoulders * x
    belly = _smoothstep(0.12, 0.0, np.sqrt(x * x + (y + 0.2) ** 2) - 0.05)
    shapes[:, 2, 8] = m * belly * (z - 0.05)
    shapes[:, 0, 9] = m * np.clip(-y, 0.0, None) * 0.3

    # (n, 3, 10) -> (3N, 10) matching C-order flattening of the (3, N) mesh
    return np.ascontiguousarray(shapes.transpose(1, 0, 2).reshape(3 * n, 10))


def _build_keypoint_spec(verts, joints, ring_of_joint, bone_vertex_info):
    """14 regression keypoints from joint rings + 5 face vertex ids."""
    n = len(verts)
    kp_joint = {
        "ankle_r": "ankle_r", "knee_r": "knee_r", "hip_r": "hip_r",
        "hip_l": "hip_l", "knee_l": "knee_l", "ankle_l": "ankle_l",
        "wrist_r": "wrist_r", "elbow_r": "elbow_r", "shoulder_r": "shoulder_r",
        "shoulder_l": "shoulder_l", "elbow_l": "elbow_l", "wrist_l": "wrist_l",
        "neck": "neck",
    }
    rows = []
    for name in KEYPOINT_NAMES[:14]:
        if name == "head_top":
            # end ring of the head capsule
            ids = ring_of_joint[_J["head"]]
        else:
            ids = ring_of_joint[_J[kp_joint[name]]]
        row = np.zeros(n)
        row[ids] = 1.0 / len(ids)
        rows.append(("regress", row))

    # face vertex ids come off the head capsule: nose = front-most vertex
    # near eye height, eyes flank it, ears sit at the +-x extremes.
    head_vertex_ids = np.array(
        [i for i, (child, f, s) in enumerate(bone_vertex_info)
         if child == _J["head"] and 0.2 < f < 0.9]
    )
    hv = verts[head_vertex_ids]
    nose = head_vertex_ids[np.argmin(hv[:, 2])]
    front = head_vertex_ids[hv[:, 2] < np.median(hv[:, 2])]
    fv = verts[front]
    above_nose = front[fv[:, 1] <= verts[nose, 1] + 1e-9]
    av = verts[above_nose]
    eye_l = above_nose[np.argmax(av[:, 0] - 0.5 * av[:, 2])]
    eye_r = above_nose[np.argmin(av[:, 0] + 0.5 * av[:, 2])]
    ear_l = head_vertex_ids[np.argmax(hv[:, 0])]
    ear_r = head_vertex_ids[np.argmin(hv[:, 0])]
    for vid in (nose, eye_l, eye_r, ear_l, ear_r):
        rows.append(("vertex", int(vid)))

    return KeypointSpec(rows=rows, names=list(KEYPOINT_NAMES))
