"""2D twin of the octree pipeline: quadtrees and their all-quad duals.

In 2D a single template suffices. Along a transition edge between a block
(four leaf children) and a refined neighbor, the untemplated dual patch is two
triangles with a quad between them; the template replaces it with four
quads using two new points placed at virtual fine-cell centers on the coarse
side.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hexoct import tree as _tree
from hexoct.dualmesh.extract import TransitionRecord, _merge, detect_transitions, dual_cells
from hexoct.io import write_svg_quads
from hexoct.tree import SpaceTree


class Quadtree(SpaceTree):
    dim = 2

    def __init__(self, leaves):
        super().__init__(leaves, 2)

    @classmethod
    def uniform(cls, level: int) -> "Quadtree":
        n = 1 << level
        return cls({(level, i, j): None for i in range(n) for j in range(n)})


@dataclass
class QuadMesh:
    vertices: np.ndarray  # (n, 2)
    quads: np.ndarray  # (m, 4), counterclockwise
    provenance: np.ndarray

    def corner_areas(self) -> np.ndarray:
        """Signed parallelogram area at each quad corner, shape (m, 4)."""
        p = self.vertices[self.quads]
        nxt = np.roll(p, -1, axis=1) - p
        prv = np.roll(p, 1, axis=1) - p
        return nxt[..., 0] * prv[..., 1] - nxt[..., 1] * prv[..., 0]

    def edge_counts(self) -> np.ndarray:
        e = np.stack([self.quads, np.roll(self.quads, -1, axis=1)], axis=-1).reshape(-1, 2)
        _, counts = np.unique(np.sort(e, axis=1), axis=0, return_counts=True)
        return counts

    def write_svg(self, path: str | Path) -> None:
        write_svg_quads(path, self.vertices, self.quads)


def strong_balance_2d(tree: Quadtree) -> Quadtree:
    out, _ = _tree.strong_balance(tree)
    return out


def detect_transitions_2d(tree: Quadtree) -> list[TransitionRecord]:
    return detect_transitions(tree)


def extract_dual_2d(tree: Quadtree, transitions: list[TransitionRecord] | None = None) -> QuadMesh:
    """All-quad dual of a strongly balanced quadtree."""
    cells, tags, res = dual_cells(tree, transitions)
    verts, quads = _merge(cells, res)
    mesh = QuadMesh(verts, quads, tags)
    area = mesh.corner_areas()
    flip = area.sum(axis=1) < 0
    mesh.quads[flip] = mesh.quads[flip][:, ::-1]
    return mesh


def random_quadtree(rng: np.random.Generator, min_level: int = 2, max_level: int = 6, seeds: int = 5) -> Quadtree:
    leaves = _tree.random_leaves(rng, 2, min_level, max_level, seeds)
    return strong_balance_2d(Quadtree(leaves))
