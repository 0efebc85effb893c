"""Buffer layer between the core mesh boundary and the input surface."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from hexoct.mesh import HexMesh, Provenance
from hexoct.surface import TriangleSurface

log = logging.getLogger(__name__)


@dataclass
class BufferBinding:
    """Link from a core boundary vertex to its image on the surface.

    Attributes
    ----------
    core_vertex : int
        Index of the core boundary vertex ``x_i`` in the combined mesh.
    surface_vertex : int
        Index of the buffer vertex placed on the surface.
    point : ndarray
        Closest surface point ``x_i^s`` at construction time.
    triangle : int
        Triangle holding ``point``; used as the closest-point cache.
    hexes : tuple of int
        Buffer hexes attached to the binding.
    """

    core_vertex: int
    surface_vertex: int
    point: np.ndarray
    triangle: int
    hexes: tuple[int, ...]


def build_buffer_layer(core: HexMesh, surface: TriangleSurface) -> tuple[HexMesh, list[BufferBinding]]:
    """Add one hex per core boundary quad, reaching out to the surface.

    The bottom face of each buffer hex is the outward boundary quad; its top
    face joins the closest surface points of the four quad corners. Surface
    points are created once per core boundary vertex and shared by every
    buffer hex around it. The core vertex indices are unchanged.
    """
    faces, _ = core.boundary_faces()
    if len(faces) == 0:
        raise ValueError("core mesh has no boundary")
    bverts = np.unique(faces)
    pts, tri, _ = surface.closest_points(core.vertices[bverts])
    _, first, counts = np.unique(pts, axis=0, return_index=True, return_counts=True)
    if (counts > 1).any():
        log.warning("%d surface points are shared by several core vertices; kept distinct", int((counts > 1).sum()))

    n0 = core.n_vertices
    top_of = np.full(n0, -1, dtype=np.int64)
    top_of[bverts] = n0 + np.arange(len(bverts))
    vertices = np.concatenate([core.vertices, pts])
    buffer_hexes = np.concatenate([faces, top_of[faces]], axis=1)
    h0 = core.n_hexes
    mesh = HexMesh(
        vertices,
        np.concatenate([core.hexes, buffer_hexes]),
        np.concatenate([core.provenance, np.full(len(faces), Provenance.BUFFER, dtype=np.int8)]),
    )

    owner = {int(v): [] for v in bverts}
    for h, quad in enumerate(faces):
        for v in quad:
            owner[int(v)].append(h0 + h)
    bindings = [
        BufferBinding(int(v), int(top_of[v]), pts[i].copy(), int(tri[i]), tuple(owner[int(v)]))
        for i, v in enumerate(bverts)
    ]
    return mesh, bindings


def binding_arrays(bindings: list[BufferBinding]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(core_vertices, surface_vertices, triangles)`` as integer arrays."""
    core = np.array([b.core_vertex for b in bindings], dtype=np.int64)
    surf = np.array([b.surface_vertex for b in bindings], dtype=np.int64)
    tri = np.array([b.triangle for b in bindings], dtype=np.int64)
    return core, surf, tri
