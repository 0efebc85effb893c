"""Shared-vertex hexahedral mesh container and topological helpers."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from hexoct.io import VTK_HEXAHEDRON, write_vtk_cells
from hexoct.quality.metrics import HEX_FACES, min_quality

# hex edges as corner pairs
HEX_EDGES = np.array(
    [(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (7, 4), (0, 4), (1, 5), (2, 6), (3, 7)]
)


class Provenance(IntEnum):
    GRID_DUAL = 0
    TEMPLATE_FACE = 1
    TEMPLATE_EDGE = 2
    CORNER_FILL = 3
    BUFFER = 4


@dataclass
class HexMesh:
    """Hexahedra over a shared vertex array.

    ``hexes[h]`` lists 8 vertex indices: bottom face counterclockwise seen from
    above, then the top face in the same order.
    """

    vertices: np.ndarray
    hexes: np.ndarray
    provenance: np.ndarray = None  # type: ignore[assignment]
    _vertex_hexes: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.hexes = np.asarray(self.hexes, dtype=np.int64).reshape(-1, 8)
        if self.provenance is None:
            self.provenance = np.zeros(len(self.hexes), dtype=np.int8)
        self.provenance = np.asarray(self.provenance, dtype=np.int8)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_hexes(self) -> int:
        return len(self.hexes)

    def copy(self) -> "HexMesh":
        return HexMesh(self.vertices.copy(), self.hexes.copy(), self.provenance.copy())

    # adjacency -----------------------------------------------------------
    def vertex_hexes(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR ``(offsets, hex_ids)`` listing the hexes incident to each vertex."""
        if self._vertex_hexes is None:
            flat = self.hexes.ravel()
            order = np.argsort(flat, kind="stable")
            counts = np.bincount(flat, minlength=self.n_vertices)
            offsets = np.concatenate([[0], np.cumsum(counts)])
            self._vertex_hexes = (offsets, order // 8)
        return self._vertex_hexes

    def hexes_of(self, v: int) -> np.ndarray:
        off, ids = self.vertex_hexes()
        return ids[off[v] : off[v + 1]]

    def edges(self) -> np.ndarray:
        """Unique undirected edges (sorted pairs)."""
        e = self.hexes[:, HEX_EDGES].reshape(-1, 2)
        return np.unique(np.sort(e, axis=1), axis=0)

    def all_faces(self) -> np.ndarray:
        """(6 n, 4) outward-oriented quads, six per hex in hex order."""
        return self.hexes[:, HEX_FACES].reshape(-1, 4)

    def face_counts(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Group faces by vertex set: returns ``(faces, group_id, group_count)``."""
        faces = self.all_faces()
        key = np.sort(faces, axis=1)
        _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        return faces, inv.ravel(), counts

    def boundary_faces(self) -> tuple[np.ndarray, np.ndarray]:
        """Outward quads used by exactly one hex, and the owning hex index."""
        if self.n_hexes == 0:
            return np.zeros((0, 4), dtype=np.int64), np.zeros(0, dtype=np.int64)
        faces, inv, counts = self.face_counts()
        once = counts[inv] == 1
        return faces[once], np.flatnonzero(once) // 6

    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_faces()[0])

    def vertex_neighbors(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR edge-neighbor lists."""
        e = self.edges()
        both = np.concatenate([e, e[:, ::-1]])
        order = np.lexsort((both[:, 1], both[:, 0]))
        both = both[order]
        counts = np.bincount(both[:, 0], minlength=self.n_vertices)
        return np.concatenate([[0], np.cumsum(counts)]), both[:, 1]

    # editing ---------------------------------------------------------------
    def subset(self, keep: np.ndarray) -> tuple["HexMesh", np.ndarray]:
        """Mesh of the selected hexes with unused vertices dropped.

        Returns the new mesh and ``old_to_new`` vertex map (-1 for dropped).
        """
        keep = np.asarray(keep)
        if keep.dtype == bool:
            keep = np.flatnonzero(keep)
        hexes = self.hexes[keep]
        used = np.unique(hexes)
        old_to_new = np.full(self.n_vertices, -1, dtype=np.int64)
        old_to_new[used] = np.arange(len(used))
        return HexMesh(self.vertices[used], old_to_new[hexes], self.provenance[keep]), old_to_new

    # quality -----------------------------------------------------------------
    def quality(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-hex ``(min J, min SJ)`` over corners and body center."""
        if self.n_hexes == 0:
            return np.zeros(0), np.zeros(0)
        return min_quality(self.vertices[self.hexes])

    # output --------------------------------------------------------------------
    def write_vtk(self, path: str | Path, points: np.ndarray | None = None, extra: dict | None = None) -> None:
        _, sj = self.quality()
        data = {"min_sj": sj, "provenance": self.provenance.astype(np.int64)}
        if extra:
            data.update(extra)
        write_vtk_cells(path, self.vertices if points is None else points, self.hexes, VTK_HEXAHEDRON, data)


def boundary_euler_characteristic(mesh: HexMesh) -> int:
    """``V - E + F`` of the boundary quad surface."""
    faces, _ = mesh.boundary_faces()
    if len(faces) == 0:
        return 0
    v = len(np.unique(faces))
    e = np.unique(np.sort(np.stack([faces, np.roll(faces, -1, axis=1)], axis=-1).reshape(-1, 2), axis=1), axis=0)
    return int(v - len(e) + len(faces))


def boundary_is_closed_manifold(mesh: HexMesh) -> bool:
    """Every boundary edge is shared by exactly two boundary quads, with
    opposite directions, and no interior face is used by more than two hexes."""
    faces, inv, counts = mesh.face_counts()
    if (counts > 2).any():
        return False
    bfaces, _ = mesh.boundary_faces()
    if len(bfaces) == 0:
        return True
    directed = np.stack([bfaces, np.roll(bfaces, -1, axis=1)], axis=-1).reshape(-1, 2)
    undirected = np.sort(directed, axis=1)
    _, c = np.unique(undirected, axis=0, return_counts=True)
    if (c != 2).any():
        return False
    _, dc = np.unique(directed, axis=0, return_counts=True)
    return bool((dc == 1).all())


def volume_euler_characteristic(mesh: HexMesh) -> int:
    """``V - E + F - C`` of the hex complex (1 for a mesh of a ball)."""
    faces, inv, counts = mesh.face_counts()
    nf = len(counts)
    return int(len(np.unique(mesh.hexes)) - len(mesh.edges()) + nf - mesh.n_hexes)
