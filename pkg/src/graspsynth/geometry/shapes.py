"""Closed triangle meshes for synthetic test objects."""

from __future__ import annotations

import math

import numpy as np

from .mesh import Mesh, make_mesh


def icosphere(radius: float = 1.0, subdivisions: int = 2, center=(0.0, 0.0, 0.0)) -> Mesh:
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.array(verts) * radius + np.asarray(center, dtype=float)
    return make_mesh(v, np.array(faces))


def box_mesh(extents, center=(0.0, 0.0, 0.0)) -> Mesh:
    """Axis-aligned box with full side lengths ``extents``; 12 outward-wound triangles."""
    e = np.asarray(extents, dtype=float) / 2.0
    v = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=float) * e
    faces = np.array([
        [0, 1, 3], [0, 3, 2],  # -x
        [4, 6, 7], [4, 7, 5],  # +x
        [0, 4, 5], [0, 5, 1],  # -y
        [2, 3, 7], [2, 7, 6],  # +y
        [0, 2, 6], [0, 6, 4],  # -z
        [1, 5, 7], [1, 7, 3],  # +z
    ])
    return make_mesh(v + np.asarray(center, dtype=float), faces)


def lathe(profile, segments: int = 48) -> Mesh:
    """Surface of revolution about z.

    ``profile`` is a list of (radius, z) pairs from bottom to top; the ends
    are closed with fans to the axis.
    """
    prof = np.asarray(profile, dtype=float)
    ang = 2 * math.pi * np.arange(segments) / segments
    ring = np.column_stack([np.cos(ang), np.sin(ang)])
    # exact zeros keep the axis-aligned extremes bit-exact
    ring[np.abs(ring) < 1e-15] = 0.0
    verts = []
    for r, z in prof:
        verts.append(np.column_stack([r * ring, np.full(segments, z)]))
    verts = np.vstack(verts)
    bottom = len(verts)
    top = bottom + 1
    verts = np.vstack([verts, [[0, 0, prof[0, 1]], [0, 0, prof[-1, 1]]]])
    faces = []
    for k in range(len(prof) - 1):
        for s in range(segments):
            a = k * segments + s
            b = k * segments + (s + 1) % segments
            c = a + segments
            d = b + segments
            faces += [(a, b, d), (a, d, c)]
    last = (len(prof) - 1) * segments
    for s in range(segments):
        faces.append((bottom, (s + 1) % segments, s))
        faces.append((top, last + s, last + (s + 1) % segments))
    return make_mesh(verts, np.array(faces))


def cylinder_mesh(radius: float, height: float, segments: int = 48, z0: float = 0.0) -> Mesh:
    return lathe([(radius, z0), (radius, z0 + height)], segments)


def mug_mesh(segments: int = 48) -> Mesh:
    """Closed lathed cup: flared body with a rim bead; no handle."""
    profile = [(0.03, 0.0), (0.034, 0.005), (0.036, 0.04), (0.038, 0.08), (0.04, 0.095), (0.036, 0.1)]
    return lathe(profile, segments)


def flashlight_mesh(segments: int = 48) -> Mesh:
    """Capped cylinder with a wider head section."""
    profile = [(0.016, 0.0), (0.018, 0.004), (0.018, 0.12), (0.026, 0.14), (0.026, 0.17), (0.022, 0.175)]
    return lathe(profile, segments)
