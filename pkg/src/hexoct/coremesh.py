"""Core mesh extraction: exterior removal and buffer-zone clearance.

The dual mesh covers the whole root cube. Hexes outside or straddling the
surface are removed by a signed-distance rule, then hexes around boundary
vertices whose quad fans would force an inverted buffer hex are peeled away
until every boundary vertex passes the normal restriction.

Normal restriction
------------------
Let ``x`` be a boundary vertex and ``n_0 .. n_{m-1}`` the unit normals of
the triangles ``(x, a, c)`` taken from the ``m`` boundary quads around
``x``, where ``a`` and ``c`` are the quad neighbors of ``x``, listed in
cyclic fan order. Normals that coincide (a flat stretch of the fan) are
merged into one direction. For every triple ``i < j < k`` of distinct
directions in fan order the scalar triple product ``(n_i x n_j) . n_k``
must be positive. A triple that is coplanar to within round-off carries no
orientation; it passes when its three normals fit in an open half plane.
A vertex whose boundary quads do not form one closed fan (a non-manifold
vertex) always fails.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from hexoct.mesh import HexMesh, boundary_is_closed_manifold
from hexoct.surface import TriangleSurface

log = logging.getLogger(__name__)

PARALLEL_TOL = 1e-9
TRIPLE_TOL = 1e-9


class TopologyError(RuntimeError):
    """Core extraction produced an empty or irreparable mesh."""


# ---------------------------------------------------------------------------
# exterior removal
# ---------------------------------------------------------------------------


def exterior_rule(fmin, fmax):
    """True where a hex with corner distance extremes ``fmin``, ``fmax`` is removed.

    Signed distances are positive inside the surface.
    """
    return np.asarray(fmin) + 0.1 * np.asarray(fmax) < 0


def remove_exterior(mesh: HexMesh, surface: TriangleSurface) -> tuple[HexMesh, np.ndarray]:
    """Drop hexes outside or straddling the surface.

    Returns the compacted mesh and the old-to-new vertex map (``-1`` for
    dropped vertices).
    """
    used = np.unique(mesh.hexes)
    sd = np.zeros(mesh.n_vertices)
    sd[used] = surface.signed_distances(mesh.vertices[used])
    f = sd[mesh.hexes]
    drop = exterior_rule(f.min(axis=1), f.max(axis=1))
    if drop.all():
        raise TopologyError("exterior removal left no hexes; increase max_level")
    log.debug("exterior removal dropped %d of %d hexes", int(drop.sum()), mesh.n_hexes)
    return mesh.subset(~drop)


# ---------------------------------------------------------------------------
# fans and the normal restriction
# ---------------------------------------------------------------------------


@dataclass
class Fan:
    """Boundary quads around one vertex."""

    vertex: int
    faces: np.ndarray  # boundary-face indices in cyclic order
    normals: np.ndarray  # (m, 3) unit normals, same order
    closed: bool  # the quads form exactly one cycle


def fan_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Unit normals of the corner triangles of boundary quads, shape (nf, 4, 3).

    Entry ``[f, p]`` is ``unit((a - x) x (c - x))`` with ``x = faces[f, p]``
    and ``a``, ``c`` its successor and predecessor in the quad. For outward
    counterclockwise quads the normal points outward.
    """
    x = vertices[faces]
    a = np.roll(x, -1, axis=1) - x
    c = np.roll(x, 1, axis=1) - x
    n = np.cross(a, c)
    norm = np.linalg.norm(n, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(norm > 0, n / norm, 0.0)


def build_fans(vertices: np.ndarray, faces: np.ndarray, only: np.ndarray | None = None) -> dict[int, Fan]:
    """Group boundary quads by corner vertex and order each group cyclically.

    Walking from a quad ``(x, a, .., c)`` to the quad whose predecessor of
    ``x`` is ``a`` turns clockwise seen from outside; the cycle is stored in
    the reverse, counterclockwise, order so that a convex corner has a
    positive triple product.
    """
    normals = fan_normals(vertices, faces)
    nf = len(faces)
    vx = faces.ravel()
    succ = np.roll(faces, -1, axis=1).ravel()
    pred = np.roll(faces, 1, axis=1).ravel()
    fid = np.repeat(np.arange(nf), 4)
    pos = np.tile(np.arange(4), nf)
    order = np.argsort(vx, kind="stable")
    vx_s = vx[order]
    starts = np.flatnonzero(np.r_[True, vx_s[1:] != vx_s[:-1]])
    ends = np.r_[starts[1:], len(vx_s)]
    wanted = None if only is None else set(int(v) for v in only)
    fans: dict[int, Fan] = {}
    for s, e in zip(starts, ends):
        v = int(vx_s[s])
        if wanted is not None and v not in wanted:
            continue
        rows = order[s:e]
        by_pred: dict[int, int] = {}
        closed = True
        for r in rows:
            p = int(pred[r])
            if p in by_pred:
                closed = False
            by_pred[p] = int(r)
        cycle = [int(rows[0])]
        seen = {cycle[0]}
        while True:
            nxt = by_pred.get(int(succ[cycle[-1]]))
            if nxt is None:
                closed = False
                break
            if nxt == cycle[0]:
                break
            if nxt in seen:
                closed = False
                break
            seen.add(nxt)
            cycle.append(nxt)
        if len(cycle) != len(rows):
            closed = False
            cycle = [int(r) for r in rows]
        cyc = np.asarray(cycle[:1] + cycle[:0:-1])
        fans[v] = Fan(v, fid[cyc], normals[fid[cyc], pos[cyc]], closed)
    return fans


def _half_plane(ns: np.ndarray) -> bool:
    """Whether some direction has positive dot product with every row of ``ns``."""
    cands = list(ns)
    for i, j in combinations(range(len(ns)), 2):
        s = ns[i] + ns[j]
        ln = np.linalg.norm(s)
        if ln > PARALLEL_TOL:
            cands.append(s / ln)
    return any((ns @ e > PARALLEL_TOL).all() for e in cands)


def distinct_directions(normals: np.ndarray) -> np.ndarray:
    """Fan-ordered representatives of the distinct normal directions."""
    reps: list[np.ndarray] = []
    for n in normals:
        if not any(n @ r > 1.0 - PARALLEL_TOL for r in reps):
            reps.append(n)
    return np.asarray(reps).reshape(-1, 3)


def restriction_holds(normals: np.ndarray, closed: bool = True) -> bool:
    """The normal restriction for one fan, normals in cyclic fan order."""
    if not closed or len(normals) < 3:
        return bool(closed)
    if (np.linalg.norm(normals, axis=1) < 0.5).any():
        return False  # degenerate corner triangle
    reps = distinct_directions(normals)
    m = len(reps)
    if m >= 2 and (reps @ reps.T < -1.0 + PARALLEL_TOL).any():
        return False
    if m < 3:
        return True
    idx = np.array(list(combinations(range(m), 3)))
    a, b, c = reps[idx[:, 0]], reps[idx[:, 1]], reps[idx[:, 2]]
    trip = np.einsum("ij,ij->i", np.cross(a, b), c)
    if (trip < -TRIPLE_TOL).any() and (trip > TRIPLE_TOL).any():
        return False
    flat = np.abs(trip) <= TRIPLE_TOL
    return all(_half_plane(reps[idx[t]]) for t in np.flatnonzero(flat))


def restriction_violations(mesh: HexMesh) -> np.ndarray:
    """Boundary vertices of ``mesh`` that fail the normal restriction."""
    faces, _ = mesh.boundary_faces()
    if len(faces) == 0:
        return np.zeros(0, dtype=np.int64)
    fans = build_fans(mesh.vertices, faces)
    bad = [v for v, fan in fans.items() if not restriction_holds(fan.normals, fan.closed)]
    return np.asarray(sorted(bad), dtype=np.int64)


def check_restriction(mesh: HexMesh) -> bool:
    return len(restriction_violations(mesh)) == 0


# ---------------------------------------------------------------------------
# buffer clearance
# ---------------------------------------------------------------------------


@dataclass
class ClearanceLog:
    """Per-iteration record of the clearance loop."""

    removed: list[np.ndarray] = field(default_factory=list)
    violations: list[int] = field(default_factory=list)

    @property
    def n_removed(self) -> int:
        return int(sum(len(r) for r in self.removed))


def clear_buffer(
    mesh: HexMesh,
    surface: TriangleSurface | None = None,
    *,
    dump_dir: str | Path | None = None,
    log_out: ClearanceLog | None = None,
) -> HexMesh:
    """Peel boundary hexes until every boundary vertex passes the restriction.

    Each round scans all boundary vertices. For each violating vertex, the
    attached hex with the most boundary faces is chosen (lowest index on
    ties); all chosen hexes are removed together and the scan repeats.

    ``surface`` is accepted for interface symmetry; the restriction itself is
    purely combinatorial on the core boundary.

    Raises
    ------
    TopologyError
        If the mesh empties, or the iteration cap of ``10 * n_hexes`` rounds
        is reached.
    """
    cur = mesh
    cap = 10 * max(mesh.n_hexes, 1)
    for it in range(cap):
        faces, owner = cur.boundary_faces()
        bad = restriction_violations(cur)
        if len(bad) == 0:
            if not boundary_is_closed_manifold(cur):
                raise TopologyError("core boundary is not a closed 2-manifold after clearance")
            return cur
        nbf = np.bincount(owner, minlength=cur.n_hexes)
        chosen = set()
        for v in bad:
            hs = cur.hexes_of(int(v))
            # most boundary faces first, then lowest index
            best = hs[np.lexsort((hs, -nbf[hs]))[0]]
            chosen.add(int(best))
        chosen_arr = np.asarray(sorted(chosen), dtype=np.int64)
        if log_out is not None:
            log_out.removed.append(chosen_arr)
            log_out.violations.append(len(bad))
        if dump_dir is not None:
            d = Path(dump_dir)
            d.mkdir(parents=True, exist_ok=True)
            cur.write_vtk(d / f"clear_{it:04d}.vtk", extra={"removed": np.isin(np.arange(cur.n_hexes), chosen_arr).astype(np.int64)})
        keep = np.ones(cur.n_hexes, dtype=bool)
        keep[chosen_arr] = False
        if not keep.any():
            raise TopologyError("buffer clearance emptied the core mesh; increase max_level")
        log.debug("clearance round %d: %d violating vertices, %d hexes removed", it, len(bad), len(chosen_arr))
        cur, _ = cur.subset(keep)
    raise TopologyError(f"buffer clearance did not converge within {cap} rounds")
