"""Closed triangle surfaces and the geometric queries used by the mesher.

The input is validated, oriented outward and normalized so its bounding box
is centered in the unit root cube ``[0, 1]^3`` and spans 90% of it. All
lengths below are in these normalized units.

Two per-vertex feature fields are precomputed:

* curvature ``G``: norm of the cotangent-weighted umbrella vector divided by
  ``4 A_i`` with ``A_i`` the mixed Voronoi area,
* thickness ``T``: distance travelled by an inward ray from the vertex before
  it hits the opposite side of the solid.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from hexoct.io import MeshReadError, read_mesh

log = logging.getLogger(__name__)

DOMAIN_FILL = 0.9
_RAY_EPS = 1e-10


class SurfaceError(ValueError):
    """Input surface violates the closed-manifold contract."""


# ---------------------------------------------------------------------------
# validation and normalization
# ---------------------------------------------------------------------------


def validate_closed_manifold(triangles: np.ndarray) -> None:
    """Raise :class:`SurfaceError` unless every edge has exactly two consistently
    oriented incident triangles."""
    tris = np.asarray(triangles, dtype=np.int64)
    bad = np.flatnonzero(
        (tris[:, 0] == tris[:, 1]) | (tris[:, 1] == tris[:, 2]) | (tris[:, 0] == tris[:, 2])
    )
    if len(bad):
        raise SurfaceError(f"degenerate triangle {bad[0]} repeats a vertex index")
    sorted_tris = np.sort(tris, axis=1)
    _, first, counts = np.unique(sorted_tris, axis=0, return_index=True, return_counts=True)
    if (counts > 1).any():
        raise SurfaceError(f"duplicate triangle {first[np.argmax(counts > 1)]}")

    directed = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    owner = np.tile(np.arange(len(tris)), 3)
    undirected = np.sort(directed, axis=1)
    _, inv, counts = np.unique(undirected, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    per_edge = counts[inv]
    if (per_edge == 1).any():
        e = np.flatnonzero(per_edge == 1)[0]
        raise SurfaceError(f"open boundary edge {tuple(directed[e])} in triangle {owner[e]}")
    if (per_edge > 2).any():
        e = np.flatnonzero(per_edge > 2)[0]
        raise SurfaceError(f"non-manifold edge {tuple(undirected[e])} in triangle {owner[e]}")
    _, dinv, dcount = np.unique(directed, axis=0, return_inverse=True, return_counts=True)
    dup = dcount[dinv.ravel()] > 1
    if dup.any():
        e = np.flatnonzero(dup)[0]
        raise SurfaceError(f"inconsistent orientation at edge {tuple(directed[e])} in triangle {owner[e]}")


def signed_volume(vertices: np.ndarray, triangles: np.ndarray) -> float:
    a, b, c = (vertices[triangles[:, k]] for k in range(3))
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


@dataclass(frozen=True)
class Normalization:
    """Affine map ``domain = scale * original + offset``."""

    scale: float
    offset: np.ndarray

    def to_domain(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) * self.scale + self.offset

    def to_original(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.offset) / self.scale

    @classmethod
    def fit(cls, vertices: np.ndarray, fill: float = DOMAIN_FILL) -> "Normalization":
        lo, hi = vertices.min(axis=0), vertices.max(axis=0)
        extent = float((hi - lo).max())
        if extent <= 0:
            raise SurfaceError("surface has zero extent")
        scale = fill / extent
        offset = 0.5 - scale * (lo + hi) / 2.0
        return cls(scale, offset)


# ---------------------------------------------------------------------------
# differential quantities
# ---------------------------------------------------------------------------


def _triangle_geometry(vertices, triangles):
    p = vertices[triangles]  # (m, 3, 3)
    # edge opposite corner k runs between corners k+1 and k+2
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    dbl_area = np.linalg.norm(cross, axis=1)
    return p, e, cross, dbl_area


def compute_vertex_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Area-weighted unit vertex normals."""
    _, _, cross, _ = _triangle_geometry(vertices, triangles)
    normals = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(normals, triangles[:, k], cross)
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    return normals / np.where(norm > 0, norm, 1.0)


def compute_curvature(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Per-vertex ``||sum_j (cot a_ij + cot b_ij)(P_j - P_i)|| / (4 A_i)``.

    ``A_i`` is the mixed area: Voronoi area inside non-obtuse triangles,
    half or quarter of the triangle area for obtuse ones.
    """
    p, e, _, dbl_area = _triangle_geometry(vertices, triangles)
    extent = float(np.ptp(vertices, axis=0).max()) or 1.0
    tiny = np.flatnonzero(dbl_area <= 1e-14 * extent**2)
    if len(tiny):
        raise SurfaceError(f"degenerate triangle {tiny[0]} has zero area")
    # angle at corner k lies between edges e[k+1] and e[k+2] (sign handled below)
    cots = np.empty((len(triangles), 3))
    for k in range(3):
        u = -e[:, (k + 2) % 3]
        v = e[:, (k + 1) % 3]
        cots[:, k] = np.einsum("ij,ij->i", u, v) / dbl_area

    umbrella = np.zeros_like(vertices)
    for k in range(3):
        i = triangles[:, (k + 1) % 3]
        j = triangles[:, (k + 2) % 3]
        w = cots[:, k][:, None]
        d = vertices[j] - vertices[i]
        np.add.at(umbrella, i, w * d)
        np.add.at(umbrella, j, -w * d)

    area = dbl_area / 2.0
    sq = np.einsum("ijk,ijk->ij", e, e)  # squared length of edge opposite corner k
    obtuse = cots < 0
    any_obtuse = obtuse.any(axis=1)
    mixed = np.zeros(len(vertices))
    for k in range(3):
        # Voronoi part at corner k: edges adjacent to k are opposite k+1 and k+2
        vor = (sq[:, (k + 1) % 3] * cots[:, (k + 1) % 3] + sq[:, (k + 2) % 3] * cots[:, (k + 2) % 3]) / 8.0
        contrib = np.where(any_obtuse, np.where(obtuse[:, k], area / 2.0, area / 4.0), vor)
        np.add.at(mixed, triangles[:, k], contrib)
    small = np.flatnonzero(mixed < 1e-12)
    if len(small):
        raise SurfaceError(f"vertex {small[0]} has mixed area below 1e-12")
    return np.linalg.norm(umbrella, axis=1) / (4.0 * mixed)


def ray_triangle_hits(origins, directions, a, b, c):
    """Moller-Trumbore for paired arrays; returns ``(t, u, v, det)``."""
    e1 = b - a
    e2 = c - a
    pvec = np.cross(directions, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / det
        tvec = origins - a
        u = np.einsum("ij,ij->i", tvec, pvec) * inv
        qvec = np.cross(tvec, e1)
        v = np.einsum("ij,ij->i", directions, qvec) * inv
        t = np.einsum("ij,ij->i", e2, qvec) * inv
    return t, u, v, det


def compute_thickness(
    vertices: np.ndarray, triangles: np.ndarray, normals: np.ndarray, chunk: int = 2_000_000
) -> np.ndarray:
    """Inward ray distance from each vertex to the nearest non-incident triangle."""
    nv, nt = len(vertices), len(triangles)
    a, b, c = (vertices[triangles[:, k]] for k in range(3))
    out = np.full(nv, np.inf)
    step = max(1, chunk // max(nt, 1))
    for start in range(0, nv, step):
        vids = np.arange(start, min(nv, start + step))
        vi = np.repeat(vids, nt)
        ti = np.tile(np.arange(nt), len(vids))
        t, u, v, det = ray_triangle_hits(vertices[vi], -normals[vi], a[ti], b[ti], c[ti])
        incident = (triangles[ti] == vi[:, None]).any(axis=1)
        with np.errstate(invalid="ignore"):
            ok = (
                ~incident
                & (np.abs(det) > 1e-18)
                & (u >= -1e-12)
                & (v >= -1e-12)
                & (u + v <= 1 + 1e-12)
                & (t > 1e-12)
            )
        tt = np.where(ok, t, np.inf).reshape(len(vids), nt)
        out[vids] = tt.min(axis=1)
    misses = np.flatnonzero(~np.isfinite(out))
    if len(misses):
        log.warning("thickness ray found no hit for %d vertices (first %d)", len(misses), misses[0])
    return out


# ---------------------------------------------------------------------------
# point/triangle and box/triangle primitives
# ---------------------------------------------------------------------------


def closest_on_triangles(p, a, b, c):
    """Closest points on triangles ``(a, b, c)`` to ``p`` (paired arrays).

    Region classification after Ericson, Real-Time Collision Detection.
    """
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = vb / denom
        w = vc / denom
        out = a + ab * v[:, None] + ac * w[:, None]
        # order reversed so higher-priority regions overwrite
        m = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
        wbc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        out = np.where(m[:, None], b + (c - b) * wbc[:, None], out)
        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        out = np.where(m[:, None], a + ac * (d2 / (d2 - d6))[:, None], out)
        m = (d6 >= 0) & (d5 <= d6)
        out = np.where(m[:, None], c, out)
        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        out = np.where(m[:, None], a + ab * (d1 / (d1 - d3))[:, None], out)
        m = (d3 >= 0) & (d4 <= d3)
        out = np.where(m[:, None], b, out)
        m = (d1 <= 0) & (d2 <= 0)
        out = np.where(m[:, None], a, out)
    return out


def triangles_box_overlap(a, b, c, center, half) -> np.ndarray:
    """Separating-axis overlap test of triangles against closed boxes.

    Parameters
    ----------
    a, b, c : (m, 3) arrays
        Triangle corners.
    center : (3,) or (m, 3) array
        Box centers (one box for all triangles, or one per triangle).
    half : scalar, (3,), (m,) or (m, 3) array
        Box half extents.
    """
    a = np.asarray(a, dtype=float)
    center = np.broadcast_to(np.asarray(center, dtype=float), a.shape)
    half = np.asarray(half, dtype=float)
    if half.ndim == 1 and half.shape[0] == len(a) and len(a) != 3:
        half = half[:, None]
    half = np.broadcast_to(half, a.shape)
    v0, v1, v2 = a - center, b - center, c - center
    # box face normals
    sep = (np.minimum(np.minimum(v0, v1), v2) > half).any(axis=1)
    sep |= (np.maximum(np.maximum(v0, v1), v2) < -half).any(axis=1)
    edges = (v1 - v0, v2 - v1, v0 - v2)
    # triangle plane
    n = np.cross(edges[0], edges[1])
    r = np.einsum("ij,ij->i", np.abs(n), half)
    s = np.einsum("ij,ij->i", n, v0)
    sep |= np.abs(s) > r
    # nine edge cross products: axis = edge x unit(ax)
    for e in edges:
        for ax in range(3):
            u, w = (ax + 1) % 3, (ax + 2) % 3
            # components of e x unit_ax: (e_w at u with sign +, e_u at w with sign -)
            au, aw = e[:, w], -e[:, u]
            p0 = v0[:, u] * au + v0[:, w] * aw
            p1 = v1[:, u] * au + v1[:, w] * aw
            p2 = v2[:, u] * au + v2[:, w] * aw
            rad = np.abs(au) * half[:, u] + np.abs(aw) * half[:, w]
            sep |= (np.minimum(np.minimum(p0, p1), p2) > rad) | (np.maximum(np.maximum(p0, p1), p2) < -rad)
    return ~sep


# ---------------------------------------------------------------------------
# the surface object
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClosestPoint:
    point: np.ndarray
    triangle: int
    distance: float


@dataclass(frozen=True, eq=False)
class TriangleSurface:
    """Immutable closed triangle surface in normalized domain coordinates."""

    vertices: np.ndarray
    triangles: np.ndarray
    vertex_normals: np.ndarray
    curvature: np.ndarray
    thickness: np.ndarray
    normalization: Normalization
    _kd: cKDTree = field(repr=False)
    _radius: float = field(repr=False)
    _ray_grid: "_RayGrid" = field(repr=False)

    # construction ----------------------------------------------------------
    @classmethod
    def from_arrays(
        cls,
        vertices: np.ndarray,
        triangles: np.ndarray,
        normalize: bool = True,
        features: bool = True,
    ) -> "TriangleSurface":
        """Validate, orient outward, normalize and precompute feature fields."""
        verts = np.asarray(vertices, dtype=float)
        tris = np.asarray(triangles, dtype=np.int64)
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise SurfaceError("non-triangle faces")
        validate_closed_manifold(tris)
        used = np.unique(tris)
        if len(used) != len(verts):
            remap = np.full(len(verts), -1)
            remap[used] = np.arange(len(used))
            verts, tris = verts[used], remap[tris]
        if signed_volume(verts, tris) < 0:
            log.info("input triangles are oriented inward; flipping")
            tris = tris[:, ::-1].copy()
        norm = Normalization.fit(verts) if normalize else Normalization(1.0, np.zeros(3))
        verts = norm.to_domain(verts)
        if verts.min() < 0.05 - 1e-9 or verts.max() > 0.95 + 1e-9:
            raise SurfaceError("surface exceeds the root cube margin")
        normals = compute_vertex_normals(verts, tris)
        if features:
            curv = compute_curvature(verts, tris)
            thick = compute_thickness(verts, tris, normals)
        else:
            curv = np.zeros(len(verts))
            thick = np.full(len(verts), np.inf)
        centroids = verts[tris].mean(axis=1)
        radius = float(np.linalg.norm(verts[tris] - centroids[:, None], axis=2).max())
        for arr in (verts, tris, normals, curv, thick):
            arr.setflags(write=False)
        return cls(
            verts, tris, normals, curv, thick, norm, cKDTree(centroids), radius, _RayGrid(verts, tris)
        )

    # basic accessors ---------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def corners(self, tri_ids=None):
        t = self.triangles if tri_ids is None else self.triangles[tri_ids]
        return self.vertices[t[:, 0]], self.vertices[t[:, 1]], self.vertices[t[:, 2]]

    def mean_edge_length(self, tri: int) -> float:
        p = self.vertices[self.triangles[tri]]
        return float(np.linalg.norm(p - np.roll(p, 1, axis=0), axis=1).mean())

    # box queries -------------------------------------------------------------
    def triangles_in_box(self, lo, hi, candidates=None) -> np.ndarray:
        """Indices of triangles overlapping the closed box ``[lo, hi]``."""
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        center, half = (lo + hi) / 2, (hi - lo) / 2
        if candidates is None:
            candidates = np.asarray(
                self._kd.query_ball_point(center, float(np.linalg.norm(half)) + self._radius),
                dtype=np.int64,
            )
        candidates = np.asarray(candidates, dtype=np.int64)
        if len(candidates) == 0:
            return candidates
        a, b, c = self.corners(candidates)
        return candidates[triangles_box_overlap(a, b, c, center, half)]

    # closest point -------------------------------------------------------------
    def closest_on(self, points: np.ndarray, tri_ids: np.ndarray) -> np.ndarray:
        """Closest points of ``points[k]`` on triangle ``tri_ids[k]``."""
        a, b, c = self.corners(np.asarray(tri_ids))
        return closest_on_triangles(np.asarray(points, float), a, b, c)

    def closest_points(self, points: np.ndarray, k: int = 16) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Exact global closest points for a batch.

        Returns ``(points (n, 3), triangles (n,), distances (n,))``.
        """
        q = np.atleast_2d(np.asarray(points, dtype=float))
        n = len(q)
        k = min(k, self.n_triangles)
        dist_c, idx = self._kd.query(q, k=k)
        dist_c = dist_c.reshape(n, k)
        idx = idx.reshape(n, k)
        qq = np.repeat(q, k, axis=0)
        cand = self.closest_on(qq, idx.ravel())
        d = np.linalg.norm(cand - qq, axis=1).reshape(n, k)
        best = d.argmin(axis=1)
        rows = np.arange(n)
        out_tri = idx[rows, best]
        out_pt = cand.reshape(n, k, 3)[rows, best]
        out_d = d[rows, best]
        # certificate: every triangle with a closer point has its centroid within
        # out_d + radius of q; if the k-th centroid is farther, nothing was missed
        unsure = np.flatnonzero((dist_c[:, -1] <= out_d + self._radius) & (k < self.n_triangles))
        for r in unsure:
            ids = np.asarray(self._kd.query_ball_point(q[r], out_d[r] + self._radius + 1e-15), dtype=np.int64)
            pts = self.closest_on(np.repeat(q[r][None], len(ids), axis=0), ids)
            dd = np.linalg.norm(pts - q[r], axis=1)
            j = int(np.argmin(dd))
            if dd[j] < out_d[r]:
                out_tri[r], out_pt[r], out_d[r] = ids[j], pts[j], dd[j]
        return out_pt, out_tri, out_d

    def closest_point(self, q, hint: int | None = None) -> ClosestPoint:
        """Nearest surface point to ``q``; a hint restricts the search to a box.

        With a hint, only triangles overlapping the box centered at ``q`` with
        half extent five times the hint triangle's mean edge length are
        searched. The result is accepted only when it is provably global (the
        found distance does not exceed the half extent); otherwise a global
        search runs.
        """
        q = np.asarray(q, dtype=float)
        if hint is not None:
            half = 5.0 * self.mean_edge_length(int(hint))
            ids = self.triangles_in_box(q - half, q + half)
            if len(ids):
                pts = self.closest_on(np.repeat(q[None], len(ids), axis=0), ids)
                dd = np.linalg.norm(pts - q, axis=1)
                j = int(np.argmin(dd))
                if dd[j] <= half:
                    return ClosestPoint(pts[j], int(ids[j]), float(dd[j]))
        pts, tri, d = self.closest_points(q[None])
        return ClosestPoint(pts[0], int(tri[0]), float(d[0]))

    # inside/outside ------------------------------------------------------------
    def contains(self, points: np.ndarray) -> np.ndarray:
        """Ray-parity inside test for a batch of points."""
        return self._ray_grid.inside(np.atleast_2d(np.asarray(points, dtype=float)))

    def signed_distances(self, points: np.ndarray) -> np.ndarray:
        """Distance to the surface, positive inside and negative outside."""
        q = np.atleast_2d(np.asarray(points, dtype=float))
        _, _, d = self.closest_points(q)
        inside = self.contains(q)
        return np.where(inside, d, -d)

    def signed_distance(self, q) -> float:
        return float(self.signed_distances(np.asarray(q, float)[None])[0])


class _RayGrid:
    """Bucket triangles by their projection along a fixed ray direction.

    Rays are cast from the query points along ``direction``; only the triangles
    whose projected bounding box covers the query's projected cell are tested.
    Hits that graze an edge or vertex trigger a re-cast of that point along a
    deterministically rotated direction.
    """

    _BASE_DIRECTION = np.array([0.8316, 0.4412, 0.3371])
    _MAX_RETRIES = 8

    def __init__(self, vertices: np.ndarray, triangles: np.ndarray):
        self.vertices = vertices
        self.triangles = triangles
        rng = np.random.default_rng(20240611)
        dirs = [self._BASE_DIRECTION / np.linalg.norm(self._BASE_DIRECTION)]
        for _ in range(self._MAX_RETRIES):
            d = rng.normal(size=3)
            dirs.append(d / np.linalg.norm(d))
        self.directions = dirs
        self._grid = self._build(dirs[0])

    def _frame(self, d):
        helper = np.array([0.0, 0.0, 1.0]) if abs(d[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        b1 = np.cross(d, helper)
        b1 /= np.linalg.norm(b1)
        return np.stack([b1, np.cross(d, b1)])

    def _build(self, d):
        basis = self._frame(d)
        proj = self.vertices @ basis.T  # (n, 2)
        tp = proj[self.triangles]  # (m, 3, 2)
        tlo, thi = tp.min(axis=1), tp.max(axis=1)
        lo, hi = proj.min(axis=0), proj.max(axis=0)
        res = int(np.clip(np.sqrt(len(self.triangles)) / 1.5, 1, 256))
        size = (hi - lo) / res + 1e-15
        c0 = np.clip(((tlo - lo) / size).astype(int), 0, res - 1)
        c1 = np.clip(((thi - lo) / size).astype(int), 0, res - 1)
        cells, owners = [], []
        for t in range(len(self.triangles)):
            xs = np.arange(c0[t, 0], c1[t, 0] + 1)
            ys = np.arange(c0[t, 1], c1[t, 1] + 1)
            cc = (xs[:, None] * res + ys[None, :]).ravel()
            cells.append(cc)
            owners.append(np.full(len(cc), t))
        cells = np.concatenate(cells)
        owners = np.concatenate(owners)
        order = np.argsort(cells, kind="stable")
        cells, owners = cells[order], owners[order]
        start = np.searchsorted(cells, np.arange(res * res))
        stop = np.searchsorted(cells, np.arange(res * res), side="right")
        return basis, lo, size, res, start, stop, owners

    def _cast(self, q, d, grid):
        """Crossing counts and a degeneracy flag per point."""
        basis, lo, size, res, start, stop, owners = grid
        pq = q @ basis.T
        cell_xy = np.floor((pq - lo) / size).astype(int)
        outside = ((cell_xy < 0) | (cell_xy >= res)).any(axis=1)
        cell = np.clip(cell_xy, 0, res - 1)
        cid = cell[:, 0] * res + cell[:, 1]
        cnt = np.where(outside, 0, stop[cid] - start[cid])
        qi = np.repeat(np.arange(len(q)), cnt)
        offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        ti = owners[np.repeat(start[cid], cnt) + offs]
        a, b, c = (self.vertices[self.triangles[ti, k]] for k in range(3))
        t, u, v, det = ray_triangle_hits(q[qi], np.broadcast_to(d, (len(qi), 3)), a, b, c)
        eps = _RAY_EPS
        inside_tri = (u > eps) & (v > eps) & (u + v < 1 - eps)
        near_edge = (u > -eps) & (v > -eps) & (u + v < 1 + eps) & ~inside_tri
        scale = np.linalg.norm(np.cross(b - a, c - a), axis=1)
        parallel = np.abs(det) <= 1e-12 * scale
        hit = inside_tri & (t > eps) & ~parallel
        degenerate = ((near_edge & (t > -eps)) | (inside_tri & (np.abs(t) <= eps))) & ~parallel
        crossings = np.bincount(qi[hit], minlength=len(q))
        bad = np.zeros(len(q), dtype=bool)
        bad[qi[degenerate]] = True
        return crossings, bad

    def inside(self, q: np.ndarray) -> np.ndarray:
        result = np.zeros(len(q), dtype=bool)
        todo = np.arange(len(q))
        for attempt, d in enumerate(self.directions):
            grid = self._grid if attempt == 0 else self._build(d)
            crossings, bad = self._cast(q[todo], d, grid)
            result[todo] = crossings % 2 == 1
            todo = todo[bad]
            if len(todo) == 0:
                return result
        raise SurfaceError(f"ray parity undecidable for point {q[todo[0]].tolist()}")


# ---------------------------------------------------------------------------
# functional interface
# ---------------------------------------------------------------------------


def load_surface(path: str | Path) -> TriangleSurface:
    """Read, validate and normalize a surface file (OBJ, OFF or STL)."""
    try:
        verts, tris = read_mesh(path)
    except MeshReadError as exc:
        raise SurfaceError(str(exc)) from exc
    return TriangleSurface.from_arrays(verts, tris)


def vertex_curvature(surface: TriangleSurface, v: int) -> float:
    return float(surface.curvature[v])


def vertex_thickness(surface: TriangleSurface, v: int) -> float:
    return float(surface.thickness[v])


def tri_cell_intersect(surface: TriangleSurface, lo, hi) -> bool:
    """True when some triangle overlaps the closed axis-aligned box ``[lo, hi]``."""
    return bool(len(surface.triangles_in_box(lo, hi)))


def closest_point(surface: TriangleSurface, q, hint: int | None = None) -> ClosestPoint:
    return surface.closest_point(q, hint)


def signed_distance(surface: TriangleSurface, q) -> float:
    return surface.signed_distance(q)
