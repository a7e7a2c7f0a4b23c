"""Orthographic z-buffer triangle rasterization and OBJ export.

Pixels are sampled at their centers: pixel (row, col) of a size x size image
sees crop coordinates x = (col + 0.5) / size * 2 - 1 and the same for y
(row 0 is the top, y down). A pixel center exactly on a triangle edge
belongs to the triangle only if the edge is a top or left edge, so abutting
triangles never double-fill. Smaller camera-frame z is nearer; exact depth
ties go to the lower face index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import as_float_array, as_int_array


@dataclass
class LabelImage:
    labels: np.ndarray  # (H, W) uint8, 0 = background
    depth: np.ndarray   # (H, W) float64, +inf where background


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _is_top_left(ax, ay, bx, by):
    dy = by - ay
    dx = bx - ax
    return (dy == 0.0 and dx > 0.0) or dy < 0.0


def majority_label(a, b, c):
    """Face label from its three vertex labels: majority, ties to smallest."""
    if a == b or a == c:
        return a
    if b == c:
        return b
    return min(a, b, c)


def render_parts(mesh, faces, vertex_labels, scale, rot, trans, size):
    """Rasterize a labeled body mesh through the weak-perspective camera.

    mesh: (3, N) body-frame vertices; vertex_labels: (N,) ints in 1..6
    (label 0 stays background); scale/rot/trans: camera (rot is 3x3).
    Returns a LabelImage. Deterministic; face order only matters for exact
    depth ties.
    """
    mesh = as_float_array(mesh, "mesh", ndim=2)
    faces = as_int_array(faces, "faces")
    labels_v = as_int_array(vertex_labels, "vertex_labels")

    cam = np.asarray(rot, dtype=np.float64) @ mesh  # (3, N)
    px = (cam[0] * scale + trans[0] + 1.0) * 0.5 * size - 0.5
    py = (cam[1] * scale + trans[1] + 1.0) * 0.5 * size - 0.5
    pz = cam[2]

    labels = np.zeros((size, size), dtype=np.uint8)
    depth = np.full((size, size), np.inf)

    cols, rows = np.meshgrid(np.arange(size, dtype=np.float64),
                             np.arange(size, dtype=np.float64))

    for fi in range(len(faces)):
        i0, i1, i2 = faces[fi]
        x0, y0, z0 = px[i0], py[i0], pz[i0]
        x1, y1, z1 = px[i1], py[i1], pz[i1]
        x2, y2, z2 = px[i2], py[i2], pz[i2]
        area2 = _edge(x0, y0, x1, y1, x2, y2)
        if area2 == 0.0:
            continue
        if area2 < 0.0:
            x1, y1, z1, i1, x2, y2, z2, i2 = x2, y2, z2, i2, x1, y1, z1, i1
            area2 = -area2

        lo_c = max(0, int(np.ceil(min(x0, x1, x2))))
        hi_c = min(size - 1, int(np.floor(max(x0, x1, x2))))
        lo_r = max(0, int(np.ceil(min(y0, y1, y2))))
        hi_r = min(size - 1, int(np.floor(max(y0, y1, y2))))
        if lo_c > hi_c or lo_r > hi_r:
            continue

        pcx = cols[lo_r : hi_r + 1, lo_c : hi_c + 1]
        pcy = rows[lo_r : hi_r + 1, lo_c : hi_c + 1]
        e0 = _edge(x1, y1, x2, y2, pcx, pcy)  # opposite vertex 0
        e1 = _edge(x2, y2, x0, y0, pcx, pcy)
        e2 = _edge(x0, y0, x1, y1, pcx, pcy)
        inside = (
            ((e0 > 0) | ((e0 == 0) & _is_top_left(x1, y1, x2, y2)))
            & ((e1 > 0) | ((e1 == 0) & _is_top_left(x2, y2, x0, y0)))
            & ((e2 > 0) | ((e2 == 0) & _is_top_left(x0, y0, x1, y1)))
        )
        if not inside.any():
            continue
        z = (e0 * z0 + e1 * z1 + e2 * z2) / area2
        label = majority_label(int(labels_v[i0]), int(labels_v[i1]), int(labels_v[i2]))

        tile_d = depth[lo_r : hi_r + 1, lo_c : hi_c + 1]
        tile_l = labels[lo_r : hi_r + 1, lo_c : hi_c + 1]
        win = inside & (z < tile_d)
        tile_d[win] = z[win]
        tile_l[win] = label
    return LabelImage(labels=labels, depth=depth)


def export_obj(mesh, faces, path):
    """Write a Wavefront OBJ (v/f records, faces 1-indexed)."""
    mesh = as_float_array(mesh, "mesh", ndim=2)
    faces = as_int_array(faces, "faces")
    n = mesh.shape[1]
    if faces.size and (faces.min() < 0 or faces.max() >= n):
        raise ValueError("faces reference vertices outside the mesh")
    with open(path, "w") as fh:
        for i in range(n):
            fh.write("v %.8f %.8f %.8f\n" % (mesh[0, i], mesh[1, i], mesh[2, i]))
        for f in faces:
            fh.write("f %d %d %d\n" % (f[0] + 1, f[1] + 1, f[2] + 1))
