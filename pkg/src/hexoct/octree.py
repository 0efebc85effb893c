"""Feature-adaptive octree construction and strong balancing.

A cell at level ``l`` (``l = 0 .. max_level - base_level``) whose contained
surface vertices have maximum curvature above ``curvature_thresholds[l]``, or
minimum thickness below ``thickness_thresholds[l]`` finest-cell edges, is
refined so that its surface-intersecting descendants reach level
``l + base_level``. Every surface-intersecting leaf reaches at least
``base_level``. Balancing then enforces the 2:1 rule across faces, edges and
vertices together with the pairing rule (siblings refine together).
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from hexoct import tree as _tree
from hexoct.io import VTK_VOXEL, write_vtk_cells
from hexoct.surface import TriangleSurface, triangles_box_overlap
from hexoct.tree import Key, SpaceTree, TreeError

log = logging.getLogger(__name__)


class CellKind(str, Enum):
    INTERIOR = "interior"
    BOUNDARY = "boundary"
    EXTERIOR = "exterior"
    UNKNOWN = "unknown"


class ConfigError(ValueError):
    pass


DEFAULT_CURVATURE = (0.5, 1.0, 2.0, 4.0, 8.0)
DEFAULT_THICKNESS = (16.0, 8.0, 4.0, 2.0, 1.0)


@dataclass(frozen=True)
class RefinementConfig:
    """Refinement thresholds; list entry ``l`` applies to cells at level ``l``.

    Curvature is in inverse root-edge units; thickness thresholds are
    multiples of the finest (``max_level``) cell edge.
    """

    curvature_thresholds: Sequence[float] = DEFAULT_CURVATURE
    thickness_thresholds: Sequence[float] = DEFAULT_THICKNESS
    base_level: int = 5
    max_level: int = 9

    def __post_init__(self):
        object.__setattr__(self, "curvature_thresholds", tuple(float(x) for x in self.curvature_thresholds))
        object.__setattr__(self, "thickness_thresholds", tuple(float(x) for x in self.thickness_thresholds))
        self.validate()

    @property
    def n_thresholds(self) -> int:
        return self.max_level - self.base_level + 1

    def validate(self) -> None:
        if not (0 <= self.base_level <= self.max_level <= 12):
            raise ConfigError(
                f"need 0 <= base_level <= max_level <= 12, got {self.base_level}, {self.max_level}"
            )
        for name in ("curvature_thresholds", "thickness_thresholds"):
            if len(getattr(self, name)) != self.n_thresholds:
                raise ConfigError(
                    f"{name} has {len(getattr(self, name))} entries, expected max_level - base_level + 1 = {self.n_thresholds}"
                )

    @classmethod
    def for_levels(cls, base_level: int, max_level: int) -> "RefinementConfig":
        """Thresholds following the default ladder for any level range.

        Curvature thresholds double per level starting at 0.5; thickness
        thresholds halve per level ending at one finest-cell edge. For levels
        5..9 this reproduces the defaults.
        """
        n = max_level - base_level + 1
        if n < 1:
            raise ConfigError("max_level must be at least base_level")
        curv = tuple(0.5 * 2.0**l for l in range(n))
        thick = tuple(2.0 ** (n - 1 - l) for l in range(n))
        return cls(curv, thick, base_level, max_level)


@dataclass(frozen=True)
class Octant:
    level: int
    origin: np.ndarray
    size: float
    key: Key
    parent_id: Key | None
    child_ids: tuple[Key, ...] | None
    cell_kind: CellKind | None


class Octree(SpaceTree):
    """Leaf-set octree over the unit root cube; leaf tags are :class:`CellKind`."""

    dim = 3

    def __init__(self, leaves, max_level: int | None = None):
        super().__init__(leaves, 3)
        self.max_level = max_level if max_level is not None else (self.depth if self._leaves else 0)

    @classmethod
    def uniform(cls, level: int) -> "Octree":
        n = 1 << level
        keys = {(level, i, j, k): CellKind.UNKNOWN for i in range(n) for j in range(n) for k in range(n)}
        return cls(keys, level)

    @property
    def root(self) -> Key:
        return (0, 0, 0, 0)

    def octant(self, key: Key) -> Octant:
        """Structural record of a leaf or internal node."""
        if key in self._leaves:
            kids = None
            kind = self._leaves[key]
        elif key in self.internal or (key == self.root and key not in self._leaves):
            kids = tuple(_tree.children(key))
            kind = None
        else:
            raise TreeError(f"{key} is not a node of the tree")
        lo, _ = self.bounds(key)
        return Octant(
            key[0], lo, 1.0 / (1 << key[0]), key, _tree.parent(key) if key[0] else None, kids, kind
        )

    def with_leaves(self, leaves):
        out = super().with_leaves(leaves)
        out.max_level = max(self.max_level, out.depth)
        return out

    def dump_vtk(self, path: str | Path) -> None:
        """Write leaves as VTK voxels with their level as cell data."""
        keys = sorted(self._leaves)
        arr = np.asarray(keys, dtype=np.int64)
        size = 1.0 / np.exp2(arr[:, 0])
        lo = arr[:, 1:] * size[:, None]
        bits = np.array(list(itertools.product((0, 1), repeat=3)))[:, ::-1]  # x fastest
        pts = lo[:, None, :] + bits[None, :, :] * size[:, None, None]
        cells = np.arange(len(keys) * 8).reshape(-1, 8)
        kinds = [self._leaves[k] for k in keys]
        kind_code = np.array([list(CellKind).index(k) if isinstance(k, CellKind) else 3 for k in kinds])
        write_vtk_cells(
            path,
            pts.reshape(-1, 3),
            cells,
            VTK_VOXEL,
            {"level": arr[:, 0], "cell_kind": kind_code},
            title="hexoct octree leaves",
        )


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def cell_features(surface: TriangleSurface, lo, hi) -> tuple[float, float] | None:
    """Max curvature and min thickness over surface vertices inside a closed cell.

    Falls back to the vertices of the overlapping triangles when no vertex lies
    inside the cell, so a thin feature crossing a vertex-free cell still counts.
    Returns None when the cell does not touch the surface.
    """
    tris = surface.triangles_in_box(lo, hi)
    if len(tris) == 0:
        return None
    vids = np.unique(surface.triangles[tris])
    pts = surface.vertices[vids]
    inside = ((pts >= lo) & (pts <= hi)).all(axis=1)
    if inside.any():
        vids = vids[inside]
    return float(surface.curvature[vids].max()), float(surface.thickness[vids].min())


def refinement_target(cfg: RefinementConfig, level: int, g: float, t: float) -> int:
    """Level demanded by the feature rule for a surface cell at ``level``."""
    finest = 1.0 / (1 << cfg.max_level)
    l = level
    if l > cfg.max_level - cfg.base_level:
        return cfg.base_level
    target = cfg.base_level
    if g > cfg.curvature_thresholds[l] or t < cfg.thickness_thresholds[l] * finest:
        target = l + cfg.base_level
    return target


def _expand_pairs(counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row index and within-row offset for a CSR layout with ``counts``."""
    rows = np.repeat(np.arange(len(counts)), counts)
    offs = np.arange(int(counts.sum())) - np.repeat(np.cumsum(counts) - counts, counts)
    return rows, offs


def build_initial_octree(surface: TriangleSurface, cfg: RefinementConfig | None = None) -> Octree:
    """Refine around the surface following the curvature and thickness ladders.

    Cells are processed one level at a time. Each cell carries the triangles
    of its parent that might touch it; the separating-axis test trims that list
    for all (cell, triangle) pairs of the level at once.

    The result is not yet balanced. Surface cells are tagged ``boundary``;
    the others ``interior`` or ``exterior`` by the signed distance at their
    center.
    """
    cfg = cfg or RefinementConfig()
    cfg.validate()
    if surface.vertices.min() < 0 or surface.vertices.max() > 1:
        raise ConfigError("surface exceeds the root cube")
    a_all, b_all, c_all = surface.corners()
    tri_v = surface.triangles
    curv, thick = surface.curvature, surface.thickness
    finest = 1.0 / (1 << cfg.max_level)
    bits = np.array(list(itertools.product((0, 1), repeat=3)), dtype=np.int64)

    leaves: dict[Key, CellKind] = {}
    coords = np.zeros((1, 3), dtype=np.int64)
    required = np.array([cfg.base_level])
    pair_cell = np.zeros(surface.n_triangles, dtype=np.int64)
    pair_tri = np.arange(surface.n_triangles)
    for level in range(0, cfg.max_level + 1):
        size = 1.0 / (1 << level)
        keep = np.zeros(len(pair_cell), dtype=bool)
        chunk = 1 << 20
        for s in range(0, len(pair_cell), chunk):
            pc, pt = pair_cell[s : s + chunk], pair_tri[s : s + chunk]
            center = (coords[pc] + 0.5) * size
            keep[s : s + chunk] = triangles_box_overlap(a_all[pt], b_all[pt], c_all[pt], center, size / 2)
        pair_cell, pair_tri = pair_cell[keep], pair_tri[keep]
        n = len(coords)
        hits = np.bincount(pair_cell, minlength=n)
        target = required.copy()
        if level <= cfg.max_level - cfg.base_level and len(pair_cell):
            # per-pair vertex statistics, split into vertices inside the cell and all
            lo = coords[pair_cell] * size
            gmax_in = np.full(n, -np.inf)
            tmin_in = np.full(n, np.inf)
            gmax_all = np.full(n, -np.inf)
            tmin_all = np.full(n, np.inf)
            for k in range(3):
                vid = tri_v[pair_tri, k]
                p = surface.vertices[vid]
                inside = ((p >= lo) & (p <= lo + size)).all(axis=1)
                np.maximum.at(gmax_all, pair_cell, curv[vid])
                np.minimum.at(tmin_all, pair_cell, thick[vid])
                np.maximum.at(gmax_in, pair_cell[inside], curv[vid[inside]])
                np.minimum.at(tmin_in, pair_cell[inside], thick[vid[inside]])
            has_in = np.isfinite(gmax_in)
            g = np.where(has_in, gmax_in, gmax_all)
            t = np.where(has_in, tmin_in, tmin_all)
            fire = (g > cfg.curvature_thresholds[level]) | (t < cfg.thickness_thresholds[level] * finest)
            target = np.where(fire & (hits > 0), np.maximum(target, level + cfg.base_level), target)
        target = np.minimum(target, cfg.max_level)
        split = (hits > 0) & (level < target)
        for idx in np.flatnonzero(~split):
            leaves[(level, *map(int, coords[idx]))] = CellKind.BOUNDARY if hits[idx] else CellKind.UNKNOWN
        if not split.any():
            break
        # children inherit their parent's triangle list
        new_id = np.full(n, -1)
        new_id[split] = np.arange(int(split.sum()))
        parents = coords[split]
        coords = (2 * parents[:, None, :] + bits[None]).reshape(-1, 3)
        required = np.repeat(target[split], 8)
        sel = split[pair_cell]
        pc = new_id[pair_cell[sel]]
        pt = pair_tri[sel]
        pair_cell = (pc[:, None] * 8 + np.arange(8)[None]).ravel()
        pair_tri = np.repeat(pt, 8)
    tree = Octree(leaves, cfg.max_level)
    return classify_leaves(tree, surface, only_unknown=True)


def classify_leaves(tree: Octree, surface: TriangleSurface, only_unknown: bool = False) -> Octree:
    """Tag leaves as boundary (surface overlap), interior or exterior."""
    leaves = dict(tree.leaves)
    keys = [k for k, v in leaves.items() if not only_unknown or v in (None, CellKind.UNKNOWN)]
    if not keys:
        return tree
    rest = []
    for k in keys:
        lo, hi = tree.bounds(k)
        if only_unknown:
            rest.append(k)
            continue
        cand = surface.triangles_in_box(lo, hi)
        if len(cand):
            leaves[k] = CellKind.BOUNDARY
        else:
            rest.append(k)
    if rest:
        sd = surface.signed_distances(tree.centers(rest))
        for k, d in zip(rest, sd):
            leaves[k] = CellKind.INTERIOR if d > 0 else CellKind.EXTERIOR
    return tree.with_leaves(leaves)


def enforce_strong_balance(tree: Octree) -> Octree:
    """Return the minimal refinement of ``tree`` obeying balancing and pairing.

    New leaves inherit the tag of the leaf they were split from.
    """
    out, splits = _tree.strong_balance(tree)
    log.debug("strong balance performed %d splits", splits)
    return out


def leaf_neighbors(tree: Octree, leaf: Key, adjacency: str = "face") -> list[Key]:
    return tree.leaf_neighbors(leaf, adjacency)


def random_octree(
    rng: np.random.Generator, min_level: int = 2, max_level: int = 5, seeds: int = 6, balanced: bool = True
) -> Octree:
    """Random refinement of a uniform tree, optionally strongly balanced."""
    leaves = _tree.random_leaves(rng, 3, min_level, max_level, seeds)
    tree = Octree({k: CellKind.UNKNOWN for k in leaves})
    return enforce_strong_balance(tree) if balanced else tree
