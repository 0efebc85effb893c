"""Procedural closed triangle surfaces used by tests, demos and the CLI.

Every generator returns ``(vertices (n, 3), triangles (m, 3))`` with triangles
counterclockwise seen from outside.
"""
from __future__ import annotations

import numpy as np


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Geodesic sphere; ``subdivisions=3`` gives 642 vertices and 1280 triangles."""
    t = (1.0 + 5.0**0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    v = np.array(verts, dtype=float)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array(faces, dtype=np.int64)
    for _ in range(subdivisions):
        v, f = _midpoint_subdivide(v, f)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * radius, f


def _midpoint_subdivide(v, f):
    edges = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
    uniq, inv = np.unique(edges, axis=0, return_inverse=True)
    inv = inv.ravel()
    mids = (v[uniq[:, 0]] + v[uniq[:, 1]]) / 2.0
    m = len(f)
    a, b, c = f[:, 0], f[:, 1], f[:, 2]
    ab, bc, ca = (len(v) + inv[k * m : (k + 1) * m] for k in range(3))
    nf = np.concatenate(
        [np.stack(x, axis=1) for x in ((a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca))]
    )
    return np.vstack([v, mids]), nf


def box(size=(1.0, 1.0, 1.0), n: int | tuple[int, int, int] = 1, center=(0.0, 0.0, 0.0)):
    """Axis-aligned box with each face split into a grid of ``n`` cells per edge."""
    size = np.asarray(size, dtype=float)
    ns = np.broadcast_to(np.asarray(n), (3,)).astype(int)
    index: dict[tuple[int, int, int], int] = {}
    verts: list[tuple[float, float, float]] = []
    tris: list[tuple[int, int, int]] = []

    def vid(ijk):
        if ijk not in index:
            index[ijk] = len(verts)
            verts.append(tuple(ijk[k] / ns[k] for k in range(3)))
        return index[ijk]

    for axis in range(3):
        u, w = (axis + 1) % 3, (axis + 2) % 3
        for side in (0, 1):
            for i in range(ns[u]):
                for j in range(ns[w]):
                    quad = []
                    for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        ijk = [0, 0, 0]
                        ijk[axis] = side * ns[axis]
                        ijk[u], ijk[w] = i + di, j + dj
                        quad.append(vid(tuple(ijk)))
                    if side == 0:
                        quad = quad[::-1]
                    tris.append((quad[0], quad[1], quad[2]))
                    tris.append((quad[0], quad[2], quad[3]))
    v = (np.array(verts) - 0.5) * size + np.asarray(center, dtype=float)
    return v, np.array(tris, dtype=np.int64)


def torus(major: float = 1.0, minor: float = 0.4, nu: int = 48, nv: int = 24):
    """Torus around the z axis; tube radius ``minor``."""
    u = np.arange(nu) * 2 * np.pi / nu
    v = np.arange(nv) * 2 * np.pi / nv
    uu, vv = np.meshgrid(u, v, indexing="ij")
    x = (major + minor * np.cos(vv)) * np.cos(uu)
    y = (major + minor * np.cos(vv)) * np.sin(uu)
    z = minor * np.sin(vv)
    verts = np.stack([x, y, z], axis=-1).reshape(-1, 3)
    i, j = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    a = i * nv + j
    b = ((i + 1) % nu) * nv + j
    c = ((i + 1) % nu) * nv + (j + 1) % nv
    d = i * nv + (j + 1) % nv
    tris = np.concatenate([np.stack([a, b, c], -1).reshape(-1, 3), np.stack([a, c, d], -1).reshape(-1, 3)])
    return verts, tris


def cone(height: float = 2.0, radius: float = 0.3, n: int = 24):
    """Closed cone with apex at vertex 0 (on +z) and a fanned base disk."""
    ang = np.arange(n) * 2 * np.pi / n
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang), np.zeros(n)], axis=1)
    verts = np.vstack([[0, 0, height], ring, [0, 0, 0]])
    k = np.arange(n)
    side = np.stack([np.zeros(n, int), 1 + k, 1 + (k + 1) % n], axis=1)
    base = np.stack([np.full(n, n + 1), 1 + (k + 1) % n, 1 + k], axis=1)
    return verts, np.concatenate([side, base]).astype(np.int64)


def bunny_like(subdivisions: int = 3):
    """Genus-0 star-shaped stand-in for a bunny: a body with a head and two ears.

    Built by radially displacing an icosphere, so it stays closed, manifold and
    free of self-intersections.
    """
    v, f = icosphere(subdivisions)
    d = v / np.linalg.norm(v, axis=1, keepdims=True)

    def bump(axis, width, height):
        axis = np.asarray(axis, float) / np.linalg.norm(axis)
        return height * np.exp(-(1 - d @ axis) / width)

    r = (
        1.0
        + bump((0.6, 0.0, 0.8), 0.08, 0.45)
        + bump((0.35, 0.25, 1.0), 0.01, 0.55)
        + bump((0.35, -0.25, 1.0), 0.01, 0.55)
        + bump((-1.0, 0.0, -0.2), 0.05, 0.15)
    )
    scale = np.array([1.2, 0.8, 0.9])
    return d * r[:, None] * scale, f
