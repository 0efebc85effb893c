"""Quality improvement by gradient descent coupled with smart Laplacian smoothing.

The energy is

    E = E_GF - E_SJ - E_J
    E_GF = sum over surface-layer vertices of |x_i - x_i^s|^2
    E_SJ = sum over hexes with min J >= 0 and min SJ < eps of min SJ
    E_J  = sum over hexes with min J < 0 of min J

where ``x_i^s`` is the closest point on the cached triangle of ``x_i`` and
``eps`` is the current scaled-Jacobian threshold. Each min term contributes
the gradient of its achieving sample (lowest sample index on ties). Every
vertex is updated by ``x -> x - alpha * grad E`` in one synchronized pass,
so interior vertices move only while an incident hex sits below ``eps``.

Lengths are measured in a frame where ``length_unit`` (by default the finest
octree cell edge) is 1, which makes the fixed step ``alpha`` independent of
how the input was scaled.

Every ``maintenance_period`` iterations the closest-triangle cache is
refreshed, the outer two vertex layers are smoothed, and the threshold is
raised in steps of ``sj_increment`` while every hex meets it and every
surface-layer vertex is within ``snap_tolerance`` of the surface. The run
ends when the worst scaled Jacobian stops improving for ``plateau_periods``
periods, ``max_iterations`` is reached, or (with ``stop_at_target``) once a
snapped configuration reaches ``target_sj``. The returned mesh is the best
configuration seen with all surface-layer vertices pulled onto their closest
points.
"""
from __future__ import annotations

import logging
import sys
from dataclasses import dataclass, field
from typing import Callable, TextIO

import numpy as np

from hexoct.mesh import HexMesh
from hexoct.quality.buffer import BufferBinding, binding_arrays
from hexoct.quality.metrics import jacobians, min_sample_gradients
from hexoct.surface import TriangleSurface, closest_on_triangles

log = logging.getLogger(__name__)

# vertices are re-evaluated once they drift this far (frame units) since the
# last quality evaluation of their hexes
_LAZY_TOL = 1e-7


class OptimizerDivergence(RuntimeError):
    pass


@dataclass
class OptimizerConfig:
    alpha: float = 0.8e-3
    sj_threshold: float = 0.01
    sj_increment: float = 0.01
    maintenance_period: int = 1000
    snap_tolerance: float = 1e-6
    max_iterations: int = 2_000_000
    plateau_periods: int = 10
    divergence_periods: int = 3
    target_sj: float = 0.5
    stop_at_target: bool = False
    length_unit: float | None = None
    verbose: bool = False

    def validate(self) -> None:
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.maintenance_period < 1 or self.max_iterations < 1:
            raise ValueError("maintenance_period and max_iterations must be positive")
        if self.sj_increment < 0 or self.snap_tolerance <= 0:
            raise ValueError("sj_increment must be >= 0 and snap_tolerance > 0")
        if self.length_unit is not None and self.length_unit <= 0:
            raise ValueError("length_unit must be positive")


@dataclass
class OptimizerState:
    """Mutable optimizer state; ``mesh`` vertices are in frame units."""

    mesh: HexMesh
    surface_vertices: np.ndarray
    triangles: np.ndarray
    scale: float
    eps: float
    iteration: int = 0
    E_gf: float = 0.0
    E_sj: float = 0.0
    E_j: float = 0.0
    m: int = 0
    n: int = 0
    history: list[dict] = field(default_factory=list)

    @property
    def energy(self) -> float:
        return self.E_gf - self.E_sj - self.E_j

    @classmethod
    def from_mesh(
        cls, mesh: HexMesh, bindings: list[BufferBinding], cfg: OptimizerConfig, scale: float | None = None
    ) -> "OptimizerState":
        _, surf, tri = binding_arrays(bindings)
        if scale is None:
            unit = cfg.length_unit if cfg.length_unit is not None else _default_unit(mesh, bindings)
            scale = 1.0 / unit
        work = HexMesh(mesh.vertices * scale, mesh.hexes.copy(), mesh.provenance.copy())
        return cls(work, surf, tri, float(scale), float(cfg.sj_threshold))


def _default_unit(mesh: HexMesh, bindings: list[BufferBinding]) -> float:
    """Shortest edge of the core boundary quads."""
    hexes = mesh.hexes[np.unique(np.concatenate([b.hexes for b in bindings]))]
    bottom = mesh.vertices[hexes[:, :4]]
    return float(np.linalg.norm(bottom - np.roll(bottom, -1, axis=1), axis=-1).min())


# ---------------------------------------------------------------------------
# energy
# ---------------------------------------------------------------------------


def _closest(surface: TriangleSurface, points: np.ndarray, tri: np.ndarray, scale: float) -> np.ndarray:
    return surface.closest_on(points / scale, tri) * scale


def _quality_gradient(points: np.ndarray, eps: float):
    """Quality part of the energy for hexes with corner coordinates ``points``.

    Returns ``(E_sj, E_j, m, n, rows, grad)`` where ``rows`` selects the
    contributing hexes and ``grad`` (len(rows), 8, 3) is the gradient of
    ``-E_SJ - E_J`` with respect to their corners.
    """
    q = min_sample_gradients(points)
    min_j, min_s = q["min_j"], q["min_sj"]
    neg = min_j < 0
    pos = ~neg & (min_s < eps)
    grad = np.where(neg[:, None, None], -q["grad_j"], -q["grad_sj"])
    rows = np.flatnonzero(neg | pos)
    return float(min_s[pos].sum()), float(min_j[neg].sum()), int(pos.sum()), int(neg.sum()), rows, grad[rows]


def energy_and_gradient(
    state: OptimizerState, bindings: list[BufferBinding] | None, surface: TriangleSurface, cfg: OptimizerConfig
) -> tuple[float, np.ndarray]:
    """Energy and its gradient at the current state, in frame units.

    Updates ``E_gf``, ``E_sj``, ``E_j``, ``m`` and ``n`` on ``state``.
    ``bindings`` is accepted for interface symmetry; the surface vertices
    and triangle cache are read from ``state``.
    """
    P = state.mesh.vertices
    H = state.mesh.hexes
    sv = state.surface_vertices
    grad = np.zeros_like(P)
    diff = P[sv] - _closest(surface, P[sv], state.triangles, state.scale)
    state.E_gf = float((diff**2).sum())
    grad[sv] += 2.0 * diff
    e_sj, e_j, m, n, rows, g = _quality_gradient(P[H], state.eps)
    np.add.at(grad, H[rows], g)
    state.E_sj, state.E_j, state.m, state.n = e_sj, e_j, m, n
    return state.energy, grad


# ---------------------------------------------------------------------------
# smart Laplacian
# ---------------------------------------------------------------------------


def _outer_layers(mesh: HexMesh, surface_vertices: np.ndarray) -> np.ndarray:
    """Vertices one edge away from the surface layer, excluding it."""
    off, nb = mesh.vertex_neighbors()
    is_surf = np.zeros(mesh.n_vertices, dtype=bool)
    is_surf[surface_vertices] = True
    rows = np.repeat(np.arange(mesh.n_vertices), np.diff(off))
    return np.unique(nb[is_surf[rows] & ~is_surf[nb]])


def _color_classes(mesh: HexMesh, verts: np.ndarray) -> list[np.ndarray]:
    """Greedy coloring of ``verts`` so that no two vertices of one class share a hex."""
    voff, vh = mesh.vertex_hexes()
    used = np.zeros(mesh.n_hexes, dtype=np.int64)  # bit mask of colors per hex
    colors = np.empty(len(verts), dtype=np.int64)
    for i, v in enumerate(verts):
        hs = vh[voff[v] : voff[v + 1]]
        taken = int(np.bitwise_or.reduce(used[hs])) if len(hs) else 0
        c = 0
        while taken >> c & 1:
            c += 1
        colors[i] = c
        used[hs] |= 1 << c
    return [verts[colors == c] for c in range(int(colors.max(initial=-1)) + 1)]


class SmartLaplacian:
    """Smoothing of the two outermost vertex layers with a quality guard.

    Surface-layer candidates are the closest surface points to the mean of
    the neighboring surface-layer vertices; second-layer candidates are the
    mean of all neighbors. Candidates are computed from the positions at the
    start of the pass. Vertices are then visited in classes that share no
    hex, so each class is checked in one batch exactly as if its vertices
    were visited one by one. A move stands if every hex around the vertex
    then has min SJ above ``eps``, or if the vertex is the surface-layer
    vertex farthest from the surface (lowest index on ties). When every
    surface-layer vertex is on the surface, no vertex is exempt.
    """

    def __init__(self, mesh: HexMesh, surface_vertices: np.ndarray):
        self.mesh = mesh
        self.sv = np.asarray(surface_vertices)
        self.second = _outer_layers(mesh, self.sv)
        self.off, self.nb = mesh.vertex_neighbors()
        self.voff, self.vh = mesh.vertex_hexes()
        self.slot = np.full(mesh.n_vertices, -1, dtype=np.int64)
        self.slot[self.sv] = np.arange(len(self.sv))
        jobs = np.concatenate([self.sv, self.second])
        self.classes = _color_classes(mesh, jobs)
        is_surf = self.slot >= 0
        rows = np.repeat(np.arange(mesh.n_vertices), np.diff(self.off))
        keep = ~is_surf[rows] | is_surf[self.nb]  # surface vertices average surface neighbors only
        self.avg_rows, self.avg_cols = rows[keep], self.nb[keep]

    def candidates(self, P: np.ndarray, surface: TriangleSurface, state: OptimizerState):
        n = len(P)
        sums = np.zeros_like(P)
        np.add.at(sums, self.avg_rows, P[self.avg_cols])
        cnt = np.bincount(self.avg_rows, minlength=n)
        cand = P.copy()
        has = cnt > 0
        cand[has] = sums[has] / cnt[has, None]
        tri = np.full(n, -1, dtype=np.int64)
        if len(self.sv):
            pts, t, _ = surface.closest_points(cand[self.sv] / state.scale)
            cand[self.sv] = pts * state.scale
            tri[self.sv] = t
        return cand, tri

    def __call__(self, state: OptimizerState, surface: TriangleSurface, eps: float) -> int:
        P = state.mesh.vertices
        H = state.mesh.hexes
        cand, tri = self.candidates(P, surface, state)
        farthest = -1
        if len(self.sv):
            dist = np.linalg.norm(P[self.sv] - _closest(surface, P[self.sv], state.triangles, state.scale), axis=1)
            # with every vertex on the surface there is no farthest one to exempt
            if dist.max() > 0:
                farthest = int(self.sv[np.argmax(dist)])
        moves = 0
        for verts in self.classes:
            verts = verts[(cand[verts] != P[verts]).any(axis=1)]
            if not len(verts):
                continue
            counts = self.voff[verts + 1] - self.voff[verts]
            owner = np.repeat(np.arange(len(verts)), counts)
            starts = np.repeat(self.voff[verts], counts)
            hs = self.vh[starts + np.arange(len(owner)) - np.repeat(np.cumsum(counts) - counts, counts)]
            pts = P[H[hs]]
            at = H[hs] == verts[owner][:, None]
            pts[at] = cand[verts[owner]]
            _, sj = jacobians(pts)
            worst = np.full(len(verts), np.inf)
            np.minimum.at(worst, owner, sj.min(axis=1))
            ok = (worst > eps) | (verts == farthest)
            acc = verts[ok]
            P[acc] = cand[acc]
            s = self.slot[acc]
            on = s >= 0
            state.triangles[s[on]] = tri[acc[on]]
            moves += len(acc)
        return moves


def smart_laplacian(state: OptimizerState, surface: TriangleSurface, eps: float) -> int:
    """One smoothing pass over the outer two layers; returns the number of moves."""
    return SmartLaplacian(state.mesh, state.surface_vertices)(state, surface, eps)


# ---------------------------------------------------------------------------
# main loop
# ---------------------------------------------------------------------------


def _merit(e_gf: float, min_j: np.ndarray, min_s: np.ndarray, eps: float) -> float:
    """Continuous companion of E: equals E up to a constant for a fixed active set."""
    neg = min_j < 0
    return e_gf + float(np.maximum(eps - min_s[~neg], 0.0).sum()) - float(min_j[neg].sum())


def _csr_rows(offsets: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Concatenated index ranges ``offsets[r] .. offsets[r + 1]`` for each row."""
    counts = offsets[rows + 1] - offsets[rows]
    starts = np.repeat(offsets[rows] - np.cumsum(counts) + counts, counts)
    return starts + np.arange(int(counts.sum()))


class Optimizer:
    """Runs the coupled gradient / smart-Laplacian loop on a buffered mesh."""

    def __init__(
        self,
        mesh: HexMesh,
        bindings: list[BufferBinding],
        surface: TriangleSurface,
        cfg: OptimizerConfig | None = None,
        out: TextIO | None = None,
        scale: float | None = None,
    ):
        self.cfg = cfg or OptimizerConfig()
        self.cfg.validate()
        self.surface = surface
        self.bindings = bindings
        self.state = OptimizerState.from_mesh(mesh, bindings, self.cfg, scale)
        self.out = out if out is not None else (sys.stdout if self.cfg.verbose else None)
        self.laplacian = SmartLaplacian(self.state.mesh, self.state.surface_vertices)
        self.best_sj = -np.inf
        self.best_points: np.ndarray | None = None
        self.plateau_reached = False
        self._abc: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None

    # -- helpers -------------------------------------------------------------
    def _cache_corners(self) -> None:
        st = self.state
        a, b, c = self.surface.corners(st.triangles)
        self._abc = (a * st.scale, b * st.scale, c * st.scale)

    def _closest_cached(self, rows: np.ndarray | None = None) -> np.ndarray:
        """Closest points of surface vertices (all, or ``rows`` of them) on their cached triangles."""
        st = self.state
        a, b, c = self._abc
        pts = st.mesh.vertices[st.surface_vertices]
        if rows is None:
            return closest_on_triangles(pts, a, b, c)
        return closest_on_triangles(pts[rows], a[rows], b[rows], c[rows])

    def _snapped(self) -> tuple[np.ndarray, float]:
        st = self.state
        P = st.mesh.vertices
        cp = self._closest_cached()
        dmax = float(np.linalg.norm(P[st.surface_vertices] - cp, axis=1).max(initial=0.0))
        snapped = P.copy()
        snapped[st.surface_vertices] = cp
        return snapped, dmax

    def _egf(self) -> float:
        st = self.state
        d = st.mesh.vertices[st.surface_vertices] - self._closest_cached()
        return float((d**2).sum())

    def _emit(self, record: dict) -> None:
        self.state.history.append(record)
        if self.out is not None:
            self.out.write(" ".join(f"{k}={v}" for k, v in record.items()) + "\n")
            self.out.flush()

    def _refresh_cache(self) -> None:
        st = self.state
        _, tri, _ = self.surface.closest_points(st.mesh.vertices[st.surface_vertices] / st.scale)
        st.triangles = tri.astype(np.int64)
        self._cache_corners()

    # -- run -------------------------------------------------------------------
    def run(self, callback: Callable[[OptimizerState], None] | None = None) -> OptimizerState:
        cfg, st = self.cfg, self.state
        P = st.mesh.vertices
        H = st.mesh.hexes
        sv = st.surface_vertices
        alpha = cfg.alpha

        drift = np.zeros(len(P))
        stall = 0
        rises = 0
        best_period_sj = -np.inf

        voff, vh = st.mesh.vertex_hexes()
        slot = np.full(len(P), -1, dtype=np.int64)
        slot[sv] = np.arange(len(sv))
        min_j, min_s = self._maintain(period=0)
        phi_start = _merit(self._egf(), min_j, min_s, st.eps)
        live = np.ones(len(sv), dtype=bool)
        diff = np.zeros((len(sv), 3))

        while st.iteration < cfg.max_iterations:
            # one gradient step, touching only vertices with a nonzero gradient
            rows = np.flatnonzero(live)
            ids = [sv[rows]]
            vals = [2.0 * (P[sv[rows]] - self._closest_cached(rows))]
            active = np.flatnonzero((min_j < 0) | (min_s < st.eps))
            if len(active):
                _, _, _, _, act_rows, g = _quality_gradient(P[H[active]], st.eps)
                ids.append(H[active[act_rows]].ravel())
                vals.append(g.reshape(-1, 3))
            ids = np.concatenate(ids)
            vals = np.concatenate(vals)
            verts, inv = np.unique(ids, return_inverse=True)
            grad = np.zeros((len(verts), 3))
            np.add.at(grad, inv.ravel(), vals)
            step = alpha * grad
            P[verts] -= step
            st.iteration += 1
            size = np.abs(step).max(axis=1)
            # a surface vertex whose fitting step has died out and that no hex
            # pushes is left alone until the next maintenance
            live[:] = False
            sl = slot[verts]
            on = sl >= 0
            live[sl[on]] = size[on] > 1e-15
            drift[verts] += size
            moved = verts[drift[verts] > _LAZY_TOL]
            if len(moved):
                dirty = np.unique(vh[_csr_rows(voff, moved)])
                jj, ss = jacobians(P[H[dirty]])
                min_j[dirty] = jj.min(axis=1)
                min_s[dirty] = ss.min(axis=1)
                drift[moved] = 0.0

            if st.iteration % cfg.maintenance_period:
                continue

            # maintenance --------------------------------------------------------
            with np.errstate(over="ignore", invalid="ignore"):
                jj, ss = jacobians(P[H])
                phi_end = _merit(self._egf(), jj.min(axis=1), ss.min(axis=1), st.eps)
            if not (np.isfinite(P).all() and np.isfinite(phi_end)):
                raise OptimizerDivergence(f"non-finite positions or energy at iteration {st.iteration}")
            rises = rises + 1 if phi_end > phi_start + 1e-3 * max(1.0, abs(phi_start)) else 0
            if rises >= cfg.divergence_periods:
                raise OptimizerDivergence(
                    f"energy rose for {rises} consecutive periods (iteration {st.iteration})"
                )
            min_j, min_s = self._maintain(st.iteration // cfg.maintenance_period)
            drift[:] = 0.0
            live[:] = True
            phi_start = _merit(self._egf(), min_j, min_s, st.eps)
            if callback is not None:
                callback(st)

            if cfg.stop_at_target and self.best_sj >= cfg.target_sj:
                break
            cur = float(min_s.min())
            if cur > best_period_sj + 1e-6:
                best_period_sj = cur
                stall = 0
            else:
                stall += 1
            if stall >= cfg.plateau_periods:
                self.plateau_reached = True
                break
        return self._finish()

    def _maintain(self, period: int) -> tuple[np.ndarray, np.ndarray]:
        """Cache refresh, smoothing, snapping and threshold update.

        Period 0 is the setup before the first step; it smooths only when
        some hex fails the starting threshold, so a mesh that already meets
        it is left untouched.
        Returns per-hex ``(min J, min SJ)`` at the new positions.
        """
        cfg, st = self.cfg, self.state
        self._refresh_cache()
        smooth = period > 0
        if not smooth:
            _, s0 = jacobians(st.mesh.vertices[st.mesh.hexes])
            smooth = bool((s0.min(axis=1) < st.eps).any())
        moves = self.laplacian(st, self.surface, st.eps) if smooth else 0
        if moves:
            self._refresh_cache()
        P, H = st.mesh.vertices, st.mesh.hexes
        snapped, dmax = self._snapped()
        if dmax < cfg.snap_tolerance:
            P[:] = snapped
            dmax = 0.0
        j, s = jacobians(P[H])
        min_j, min_s = j.min(axis=1), s.min(axis=1)
        # best on-surface configuration so far
        if dmax == 0.0:
            snap_sj = float(min_s.min())
        else:
            touched = np.flatnonzero(np.isin(H, st.surface_vertices).any(axis=1))
            _, ss = jacobians(snapped[H[touched]])
            rest = np.ones(len(H), dtype=bool)
            rest[touched] = False
            snap_sj = float(min(ss.min(initial=np.inf), min_s[rest].min(initial=np.inf)))
        if snap_sj > self.best_sj:
            self.best_sj = snap_sj
            self.best_points = snapped.copy()
        met = dmax < cfg.snap_tolerance and bool((min_s >= st.eps).all())
        if met and cfg.sj_increment > 0:
            worst = float(min_s.min())
            while worst >= st.eps:
                st.eps = round(st.eps + cfg.sj_increment, 12)
        st.E_gf = self._egf()
        neg = min_j < 0
        act = ~neg & (min_s < st.eps)
        st.E_sj = float(min_s[act].sum())
        st.E_j = float(min_j[neg].sum())
        st.m, st.n = int(act.sum()), int(neg.sum())
        self._emit(
            {
                "iteration": st.iteration,
                "E": f"{st.energy:.6g}",
                "min_sj": f"{float(min_s.min()):.6f}",
                "eps_sj": f"{st.eps:.2f}",
                "max_dist": f"{dmax / st.scale:.3g}",
                "negative": st.n,
                "laplacian_moves": moves,
            }
        )
        return min_j, min_s

    def _finish(self) -> OptimizerState:
        st = self.state
        if self.best_points is not None:
            st.mesh.vertices[:] = self.best_points
        else:
            self._refresh_cache()
            snapped, _ = self._snapped()
            st.mesh.vertices[:] = snapped
        if self.best_sj < self.cfg.target_sj:
            log.warning("optimizer stopped at min SJ %.4f below the target %.2f", self.best_sj, self.cfg.target_sj)
        return st

    def result_mesh(self) -> HexMesh:
        st = self.state
        return HexMesh(st.mesh.vertices / st.scale, st.mesh.hexes.copy(), st.mesh.provenance.copy())


def optimize(
    mesh: HexMesh,
    bindings: list[BufferBinding],
    surface: TriangleSurface,
    cfg: OptimizerConfig | None = None,
    out: TextIO | None = None,
) -> HexMesh:
    """Run the quality loop and return the improved mesh in domain units."""
    opt = Optimizer(mesh, bindings, surface, cfg, out)
    opt.run()
    return opt.result_mesh()
