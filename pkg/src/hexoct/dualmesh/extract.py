"""Transition detection and template-based dual extraction.

Terminology used here:

* a *block* is an octant whose eight children are all leaves,
* a *refined* octant is one whose children are all internal (pairing rules
  out mixtures),
* a *transition face* separates a block from a same-size refined octant,
* a *transition edge* is an edge of the block lattice whose four surrounding
  same-size octants are blocks or refined octants, with at least one of each.

Grid points in the interior of a transition face (9 at the fine resolution)
or of a transition edge (3) form the template patches. Every other interior
grid point is a corner of exactly ``2^d`` leaves and yields one dual cell
connecting their centers. Patches at different levels never overlap, and
templates touching each other share only points placed identically by
both, so the final vertex merge works on exact integer coordinates.

All dual vertex coordinates are integers at resolution ``2^(depth + 1)``.
"""
from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass

import numpy as np

from hexoct.dualmesh.templates import (
    QUADRANT_SIGNS,
    TEMPLATE_SIZES,
    classify_edge,
    edge_template,
    face_template,
    quad_template,
)
from hexoct.mesh import HexMesh, Provenance
from hexoct.quality.metrics import FLIP
from hexoct.tree import SpaceTree, UnbalancedTreeError, parent


class TemplateError(RuntimeError):
    """A transition configuration matched none of the templates."""


@dataclass(frozen=True)
class TransitionRecord:
    """One transition face or edge.

    Attributes
    ----------
    kind : ``face`` or ``edge-b`` .. ``edge-e``
    level : level of the octants meeting at the transition
    anchor : integer lattice coordinates (at ``level``) of the coarse block for
        faces, of the edge's lower endpoint for edges
    axis : face normal axis, or edge direction axis
    sign : +1/-1 direction from the coarse block to the refined octant (faces);
        for edges the quarter-turn count of the canonical frame
    refined : for edges, the global quadrants (0..3) that are refined
    leaves : leaves whose centers the template uses
    """

    kind: str
    level: int
    anchor: tuple[int, ...]
    axis: int
    sign: int
    refined: tuple[int, ...] = ()
    leaves: tuple[tuple[int, ...], ...] = ()

    @property
    def n_cells(self) -> int:
        return TEMPLATE_SIZES.get(self.kind, 4)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _octant_state(tree: SpaceTree, key) -> str:
    """``block``, ``refined``, ``leaf`` (or coarser), or ``outside``."""
    if not tree.in_domain(key):
        return "outside"
    internal = tree.internal
    if key not in internal:
        return "leaf"
    first_child = (key[0] + 1,) + tuple(2 * c for c in key[1:])
    return "refined" if first_child in internal else "block"


def _blocks(tree: SpaceTree) -> list:
    return sorted({parent(k) for k in tree.leaves if k[0] > 0})


# ---------------------------------------------------------------------------
# detection
# ---------------------------------------------------------------------------


def detect_transitions(tree: SpaceTree, with_leaves: bool = False) -> list[TransitionRecord]:
    """All transition faces and edges (3D) or transition edges (2D)."""
    dim = tree.dim
    records: list[TransitionRecord] = []
    blocks = _blocks(tree)
    for blk in blocks:
        lvl = blk[0]
        for axis in range(dim):
            for sign in (-1, 1):
                nb = list(blk)
                nb[1 + axis] += sign
                nb = tuple(nb)
                st = _octant_state(tree, nb)
                if st == "refined":
                    records.append(TransitionRecord("face", lvl, blk[1:], axis, sign))
    if dim == 3:
        records.extend(_detect_edges(tree, blocks))
    else:
        # in 2D a face transition is an edge of the quadtree
        records = [
            TransitionRecord("edge", r.level, r.anchor, r.axis, r.sign) for r in records
        ]
    if with_leaves:
        records = _attach_leaves(tree, records)
    return records


def _edge_quadrants(lvl, axis, p):
    """Octants around the lattice edge along ``axis`` starting at point ``p``."""
    v, w = (axis + 1) % 3, (axis + 2) % 3
    out = []
    for sv, sw in QUADRANT_SIGNS:
        key = [lvl, 0, 0, 0]
        key[1 + axis] = p[axis]
        key[1 + v] = p[v] if sv > 0 else p[v] - 1
        key[1 + w] = p[w] if sw > 0 else p[w] - 1
        out.append(tuple(key))
    return out


def _detect_edges(tree, blocks) -> list[TransitionRecord]:
    edges = set()
    for blk in blocks:
        lvl, o = blk[0], blk[1:]
        for axis in range(3):
            v, w = (axis + 1) % 3, (axis + 2) % 3
            for dv in (0, 1):
                for dw in (0, 1):
                    p = list(o)
                    p[v] += dv
                    p[w] += dw
                    edges.add((lvl, axis, tuple(p)))
    out = []
    for lvl, axis, p in sorted(edges):
        quads = _edge_quadrants(lvl, axis, p)
        states = [_octant_state(tree, q) for q in quads]
        if "outside" in states:
            continue
        refined = {q for q, s in enumerate(states) if s == "refined"}
        if not refined:
            continue
        for q, s in enumerate(states):
            if s == "leaf":
                raise UnbalancedTreeError(
                    f"unbalanced tree: leaf {tree.covering_leaf(quads[q])} touches refined octant "
                    f"{quads[min(refined)]} along edge {p} (axis {axis}, level {lvl})"
                )
        if len(refined) == 4:
            continue
        try:
            kind, r = classify_edge(refined)
        except KeyError as exc:
            raise TemplateError(str(exc)) from exc
        out.append(TransitionRecord(kind, lvl, p, axis, r, tuple(sorted(refined))))
    return out


def _attach_leaves(tree, records: list[TransitionRecord]) -> list[TransitionRecord]:
    """Fill ``leaves`` with the leaves whose centers each template uses."""
    depth = tree.depth
    center_of = {}
    for k in tree.leaves:
        c = tuple((2 * x + 1) << (depth - k[0]) for x in k[1:])
        center_of[c] = k
    out = []
    for rec in records:
        pts = _record_points(rec, depth + 1, tree.dim).reshape(-1, tree.dim)
        used = sorted({center_of[t] for t in map(tuple, pts.tolist()) if t in center_of})
        out.append(
            TransitionRecord(rec.kind, rec.level, rec.anchor, rec.axis, rec.sign, rec.refined, tuple(used))
        )
    return out


# ---------------------------------------------------------------------------
# template instantiation
# ---------------------------------------------------------------------------


def _face_frame(rec: TransitionRecord, res: int, dim: int):
    """Origin (integer, resolution ``2^res``) and column frame for a face record."""
    unit = 1 << (res - rec.level)  # block edge
    axis, sign = rec.axis, rec.sign
    origin = np.asarray(rec.anchor, dtype=np.int64) * unit
    if sign > 0:
        origin[axis] += unit
    R = np.zeros((dim, dim), dtype=np.int64)
    others = [(axis + k) % dim for k in range(1, dim)]
    for col, ax in enumerate(others):
        R[ax, col] = 1
    R[axis, dim - 1] = sign
    return origin, R


def _edge_frame(rec: TransitionRecord, res: int):
    unit = 1 << (res - rec.level)
    axis = rec.axis
    v, w = (axis + 1) % 3, (axis + 2) % 3
    origin = np.asarray(rec.anchor, dtype=np.int64) * unit
    ev = np.zeros(3, dtype=np.int64)
    ew = np.zeros(3, dtype=np.int64)
    ev[v] = 1
    ew[w] = 1
    for _ in range(rec.sign):
        ev, ew = ew, -ev
    et = np.zeros(3, dtype=np.int64)
    et[axis] = 1
    return origin, np.stack([et, ev, ew], axis=1)


def _record_points(rec: TransitionRecord, res: int, dim: int) -> np.ndarray:
    """Template cell corner coordinates at resolution ``2^res``."""
    scale = 1 << (res - rec.level - 3)  # one local unit = half a fine leaf
    if dim == 2:
        local = quad_template()
        origin, R = _face_frame(rec, res, 2)
    elif rec.kind == "face":
        local = face_template()
        origin, R = _face_frame(rec, res, 3)
    else:
        local = edge_template(rec.kind)
        origin, R = _edge_frame(rec, res)
    return origin + scale * np.einsum("ij,...j->...i", R, local)


def _patch_points(rec: TransitionRecord, res: int, dim: int) -> np.ndarray:
    """Interior grid points of the transition (resolution ``2^res``)."""
    fine = 1 << (res - rec.level - 2)
    if rec.kind == "face" or dim == 2:
        origin, R = _face_frame(rec, res, dim)
        if dim == 2:
            local = np.array([(k, 0) for k in (1, 2, 3)])
        else:
            local = np.array([(i, j, 0) for i in (1, 2, 3) for j in (1, 2, 3)])
    else:
        origin, R = _edge_frame(rec, res)
        local = np.array([(k, 0, 0) for k in (1, 2, 3)])
    return origin + fine * local @ R.T


def _encode(coords: np.ndarray, bits: int) -> np.ndarray:
    code = np.zeros(len(coords), dtype=np.int64)
    for a in range(coords.shape[1]):
        code = (code << bits) | coords[:, a]
    return code


# ---------------------------------------------------------------------------
# extraction
# ---------------------------------------------------------------------------


def dual_cells(tree: SpaceTree, transitions: list[TransitionRecord] | None = None):
    """Dual cells of a strongly balanced tree as integer corner coordinates.

    Returns ``(cells, tags)`` where ``cells`` has shape ``(n, 2^d, d)`` at
    resolution ``2^(depth + 1)`` and ``tags`` holds a provenance code per cell.
    """
    dim = tree.dim
    if transitions is None:
        transitions = detect_transitions(tree)
    depth = tree.depth
    res = depth + 1
    keys = np.asarray(sorted(tree.leaves), dtype=np.int64).reshape(-1, dim + 1)
    lvl = keys[:, 0]
    coords = keys[:, 1:]
    nslots = 1 << dim
    bits = np.asarray(list(itertools.product((0, 1), repeat=dim)), dtype=np.int64)[:, ::-1]
    # bits[s] is the offset of corner s with the first axis varying fastest

    # every leaf corner at resolution 2^depth, with the slot the leaf occupies around it
    shift = (depth - lvl)[:, None, None]
    corner = (coords[:, None, :] + bits[None, :, :]) << shift
    corner = corner.reshape(-1, dim)
    leaf_of = np.repeat(np.arange(len(keys)), nslots)
    slot = np.tile(np.arange(nslots), len(keys))
    slot = (nslots - 1) - slot  # the leaf lies on the opposite side of its corner
    pbits = depth + 1
    code = _encode(corner, pbits)

    patch = [
        _encode((_patch_points(r, res, dim) // 2).reshape(-1, dim), pbits) for r in transitions
    ]
    patch_codes = np.concatenate(patch) if patch else np.zeros(0, dtype=np.int64)
    if len(np.unique(patch_codes)) != len(patch_codes):
        raise TemplateError("transition patches overlap")

    order = np.argsort(code, kind="stable")
    code_s = code[order]
    uniq, start, counts = np.unique(code_s, return_index=True, return_counts=True)
    upts = corner[order][start]
    interior = ((upts > 0) & (upts < (1 << depth))).all(axis=1)
    in_patch = np.isin(uniq, patch_codes)
    regular = interior & ~in_patch & (counts == nslots)
    odd = interior & ~in_patch & (counts != nslots)
    if odd.any():
        p = upts[np.flatnonzero(odd)[0]]
        raise UnbalancedTreeError(
            f"grid point {tuple(int(c) for c in p)} (resolution 2^{depth}) is shared by "
            f"{counts[np.flatnonzero(odd)[0]]} leaves; the tree is not strongly balanced"
        )

    groups = np.flatnonzero(regular)
    idx = start[groups][:, None] + np.arange(nslots)[None, :]
    members = order[idx]  # rows of (leaf, slot) entries
    leaf_slots = np.full((len(groups), nslots), -1)
    rows = np.repeat(np.arange(len(groups)), nslots)
    leaf_slots[rows, slot[members].ravel()] = leaf_of[members].ravel()
    centers = ((2 * coords + 1) << (depth - lvl)[:, None])  # resolution 2^(depth+1)
    if dim == 3:
        cell_order = [0, 1, 3, 2, 4, 5, 7, 6]
    else:
        cell_order = [0, 1, 3, 2]
    regular_cells = centers[leaf_slots[:, cell_order]]

    cells = [regular_cells]
    tags = [np.full(len(regular_cells), Provenance.GRID_DUAL, dtype=np.int8)]
    for rec in transitions:
        pts = _record_points(rec, res, dim)
        cells.append(pts)
        tag = Provenance.TEMPLATE_FACE if rec.kind == "face" or dim == 2 else Provenance.TEMPLATE_EDGE
        tags.append(np.full(len(pts), tag, dtype=np.int8))
    return np.concatenate(cells), np.concatenate(tags), res


def _merge(cells: np.ndarray, res: int):
    dim = cells.shape[-1]
    flat = cells.reshape(-1, dim)
    code = _encode(flat, res + 1)
    uniq, first, inv = np.unique(code, return_index=True, return_inverse=True)
    verts = flat[first].astype(float) / float(1 << res)
    return verts, inv.reshape(cells.shape[:-1])


def extract_dual(tree: SpaceTree, transitions: list[TransitionRecord] | None = None) -> HexMesh:
    """All-hex dual mesh of a strongly balanced octree."""
    if tree.dim != 3:
        raise ValueError("extract_dual expects an octree; use extract_dual_2d for quadtrees")
    cells, tags, res = dual_cells(tree, transitions)
    verts, hexes = _merge(cells, res)
    mesh = HexMesh(verts, hexes, tags)
    return orient_cells(mesh)


def orient_cells(mesh: HexMesh) -> HexMesh:
    """Flip mirrored hexes so that the body-center Jacobian is positive."""
    from hexoct.quality.metrics import jacobians

    if mesh.n_hexes:
        j, _ = jacobians(mesh.vertices[mesh.hexes])
        flip = j[:, 8] < 0
        mesh.hexes[flip] = mesh.hexes[flip][:, FLIP]
    return mesh


def template_counts(transitions: list[TransitionRecord]) -> Counter:
    return Counter(r.kind for r in transitions)
