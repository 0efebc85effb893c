"""Acceptance criteria, one test each.

Every test records a single PASS/FAIL line with the measured value, its
tolerance and the runtime against its budget. The lines are printed as they
happen and collected again in the terminal summary.
"""
import dataclasses
import itertools
import math
import time

import numpy as np
import pytest

import oracles
from conftest import ACCEPTANCE
from hexoct.coremesh import clear_buffer, exterior_rule, remove_exterior
from hexoct.dualmesh import TEMPLATE_SIZES, detect_transitions, edge_template, extract_dual, face_template
from hexoct.io import read_mesh, read_vtk_cells
from hexoct.mesh import Provenance
from hexoct.octree import CellKind, Octree, enforce_strong_balance, random_octree
from hexoct.quadtree2d import detect_transitions_2d, extract_dual_2d, random_quadtree
from hexoct.quality import OptimizerConfig, OptimizerState, build_buffer_layer, energy_and_gradient, jacobians
from hexoct.surface import TriangleSurface
from hexoct.tree import random_leaves
from test_coremesh import _dual_for
from test_dualmesh import _edge_config, _refine_block, _uniform, check_hex_mesh, expected_hexes
from test_optimizer import _tied_or_switching
from test_quadtree2d import check_quad_mesh, expected_quads

E2E_RUNS = [("sphere", 3, 4), ("cube", 3, 4), ("sphere", 4, 5), ("cube", 4, 5)]
TOPOLOGY_RUNS = [("sphere", 3, 4, 2), ("cube", 3, 4, 2), ("bunny", 3, 4, 2), ("torus", 3, 4, 0)]


def record(number, ok, detail, seconds, budget):
    ok = bool(ok) and seconds < budget
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}  [{seconds:.1f} s, budget {budget:g} s]"
    print(line)
    ACCEPTANCE.append(line)
    return ok


def test_criterion_01_template_floor():
    t0 = time.perf_counter()
    sizes = {"face": len(face_template())}
    sizes.update({k: len(edge_template(k)) for k in ("edge-b", "edge-c", "edge-d", "edge-e")})
    # instantiate every kind on axis-aligned transitions inside real trees
    leaves = _uniform(3)
    _refine_block(leaves, (2, 1, 1, 1))
    trees = [Octree(leaves)] + [enforce_strong_balance(_edge_config(q)) for q in [(0, 1), (1, 2, 3), (0, 2)]]
    seen, worst, counts_ok = set(), math.inf, True
    for tree in trees:
        trans = detect_transitions(tree)
        mesh = extract_dual(tree, trans)
        seen |= {r.kind for r in trans}
        counts_ok &= mesh.n_hexes == expected_hexes(tree, trans)
        tmpl = np.isin(mesh.provenance, [Provenance.TEMPLATE_FACE, Provenance.TEMPLATE_EDGE])
        _, sj = jacobians(mesh.vertices[mesh.hexes[tmpl]])
        worst = min(worst, float(sj.min()))
    dt = time.perf_counter() - t0
    ok = (
        sizes == {"face": 13, "edge-b": 5, "edge-c": 4, "edge-d": 3, "edge-e": 3}
        and sizes == TEMPLATE_SIZES
        and seen == set(TEMPLATE_SIZES)
        and counts_ok
        and abs(worst - 0.258) <= 1e-3
    )
    detail = f"sizes {'/'.join(str(sizes[k]) for k in sorted(sizes, key=list(TEMPLATE_SIZES).index))}, min SJ {worst:.6f} (0.258 +- 1e-3)"
    assert record(1, ok, detail, dt, 1.0)


def test_criterion_02_all_hex():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    failures = 0
    for _ in range(500):
        tree = random_octree(rng, 2, 5, seeds=int(rng.integers(1, 8)))
        trans = detect_transitions(tree)
        mesh = extract_dual(tree, trans)
        try:
            check_hex_mesh(tree, mesh)
            assert mesh.n_hexes == expected_hexes(tree, trans)
        except AssertionError:
            failures += 1
    dt = time.perf_counter() - t0
    assert record(2, failures == 0, f"500 random octrees, {failures} non-conforming", dt, 60.0)


def test_criterion_03_all_quad():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    failures = 0
    for _ in range(1000):
        tree = random_quadtree(rng, 2, 6, seeds=int(rng.integers(1, 8)))
        trans = detect_transitions_2d(tree)
        mesh = extract_dual_2d(tree, trans)
        try:
            check_quad_mesh(tree, mesh)
            assert len(mesh.quads) == expected_quads(tree, trans)
        except AssertionError:
            failures += 1
    dt = time.perf_counter() - t0
    assert record(3, failures == 0, f"1000 random quadtrees, {failures} non-conforming", dt, 10.0)


def test_criterion_04_balance_fixed_point():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    failures = 0
    for _ in range(100):
        leaves = random_leaves(rng, 3, 1, 5, int(rng.integers(1, 6)))
        out = enforce_strong_balance(Octree({k: CellKind.UNKNOWN for k in leaves}))
        good = oracles.balance_ok(out.leaves) and oracles.pairing_ok(out.leaves) and oracles.refines(out.leaves, leaves)
        good = good and dict(enforce_strong_balance(out).leaves) == dict(out.leaves)
        failures += not good
    dt = time.perf_counter() - t0
    assert record(4, failures == 0, f"100 random refinements, {failures} failing balance/pairing/idempotence", dt, 30.0)


def test_criterion_05_metric():
    t0 = time.perf_counter()
    cube = np.array(list(itertools.product((0, 1), repeat=3)), dtype=float)[[0, 4, 6, 2, 1, 5, 7, 3]]
    _, sj_cube = jacobians(cube[None])
    bad = cube.copy()
    bad[4] = [0.5, 0.5, 0.0]
    _, sj_bad = jacobians(bad[None])
    rng = np.random.default_rng(5)
    pts = cube[None] + rng.uniform(-0.25, 0.25, (1000, 8, 3))
    j0, s0 = jacobians(pts)
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    j1, s1 = jacobians(pts @ q.T + rng.uniform(-10, 10, 3))
    drift = max(np.abs(s1 - s0).max(), np.abs(j1 - j0).max())
    dt = time.perf_counter() - t0
    ok = np.array_equal(sj_cube, np.ones((1, 9))) and abs(sj_bad[0, 0]) < 1e-12 and drift < 1e-9
    detail = f"cube SJ all 1: {np.array_equal(sj_cube, np.ones((1, 9)))}, degenerate corner {sj_bad[0, 0]:.1e} (1e-12), rigid drift {drift:.1e} (1e-9)"
    assert record(5, ok, detail, dt, 1.0)


def test_criterion_06_gradient():
    t0 = time.perf_counter()
    surface, dual = _dual_for(3, 4)
    mesh, bindings = build_buffer_layer(clear_buffer(remove_exterior(dual, surface)[0], surface), surface)
    rng = np.random.default_rng(6)
    h, worst, checked = 1e-6, 0.0, 0
    for _ in range(100):
        pert = dataclasses.replace(mesh)
        pert.vertices = mesh.vertices + rng.normal(scale=0.015, size=mesh.vertices.shape)
        cfg = OptimizerConfig(sj_threshold=float(rng.uniform(0.2, 0.9)), length_unit=1 / 8)
        st = OptimizerState.from_mesh(pert, bindings, cfg)
        _, grad = energy_and_gradient(st, bindings, surface, cfg)
        P = st.mesh.vertices
        excluded = np.zeros(len(P), dtype=bool)
        excluded[st.mesh.hexes[_tied_or_switching(P[st.mesh.hexes], st.eps, 1e-4)].ravel()] = True
        candidates = np.flatnonzero(~excluded & (np.linalg.norm(grad, axis=1) > 1e-3))
        for v in rng.choice(candidates, size=min(4, len(candidates)), replace=False):
            fd = np.zeros(3)
            for d in range(3):
                keep = P[v, d]
                P[v, d] = keep + h
                ep, _ = energy_and_gradient(st, bindings, surface, cfg)
                P[v, d] = keep - h
                em, _ = energy_and_gradient(st, bindings, surface, cfg)
                P[v, d] = keep
                fd[d] = (ep - em) / (2 * h)
            worst = max(worst, np.linalg.norm(fd - grad[v]) / np.linalg.norm(grad[v]))
            checked += 1
    dt = time.perf_counter() - t0
    ok = worst <= 1e-5 and checked >= 300
    assert record(6, ok, f"{checked} vertices on 100 perturbed buffer meshes, worst relative error {worst:.1e} (1e-5)", dt, 30.0)


def _distance_to_input(e2e, name, points):
    """Distance from ``points`` (input frame) to the input surface, relative to its extent.

    Both are moved into the unit cube by ``x / 4 + 0.5``: the power-of-two
    scale is exact and the shift rounds at the 1e-16 level.
    """
    v, f = read_mesh(e2e.surface(name))
    surface = TriangleSurface.from_arrays(v / 4 + 0.5, f, normalize=False)
    _, _, dist = surface.closest_points(points / 4 + 0.5)
    return 4 * float(dist.max()) / float((v.max(axis=0) - v.min(axis=0)).max())


@pytest.mark.slow
@pytest.mark.parametrize("name,base,top", E2E_RUNS, ids=lambda x: str(x))
def test_criterion_07_quality_floor(e2e, name, base, top):
    mesh, report, _, seconds = e2e(name, base, top)
    _, sj = jacobians(mesh.vertices[mesh.hexes])
    min_sj = float(sj.min())
    bverts = np.unique(oracles.boundary_quads(mesh.hexes))
    rel = _distance_to_input(e2e, name, mesh.vertices[bverts])
    ok = min_sj >= 0.5 and report.min_sj == pytest.approx(min_sj, abs=1e-12) and rel <= 1e-12
    detail = f"{name} levels {base}-{top}: min SJ {min_sj:.4f} (>= 0.5), max surface distance {rel:.1e} of the extent (1e-12)"
    assert record(7, ok, detail, seconds, 300.0)


@pytest.mark.slow
@pytest.mark.parametrize("name,base,top", E2E_RUNS, ids=lambda x: str(x))
def test_criterion_08_clearance_restriction(e2e, name, base, top):
    _, _, dump, seconds = e2e(name, base, top)
    t0 = time.perf_counter()
    pts, cells, _ = read_vtk_cells(dump / "core.vtk")
    fans = oracles.vertex_fans(pts, oracles.boundary_quads(cells))
    bad = [v for v, (n, closed) in fans.items() if not oracles.restriction_oracle(n, closed)]
    dt = time.perf_counter() - t0
    detail = f"{name} levels {base}-{top}: {len(fans)} boundary vertices, {len(bad)} violating the triple-product rule"
    assert record(8, not bad, detail, seconds + dt, 300.0)


def test_criterion_09_exterior_rule():
    t0 = time.perf_counter()
    cases = [(0.01, 0.3, False), (-0.3, -0.01, True), (-0.05, 0.4, True)]
    got = [bool(exterior_rule(a, b)) for a, b, _ in cases]
    # the straddling case evaluates to exactly -0.01 before the sign test
    ok = got == [c[2] for c in cases] and -0.05 + 0.1 * 0.4 < 0
    dt = time.perf_counter() - t0
    assert record(9, ok, f"inside kept, outside removed, straddling -0.05/0.4 removed: {got}", dt, 1.0)


@pytest.mark.slow
def test_criterion_10_topology(e2e):
    total, results = 0.0, []
    for name, base, top, chi in TOPOLOGY_RUNS:
        mesh, report, _, seconds = e2e(name, base, top)
        got = oracles.quad_surface_euler(oracles.boundary_quads(mesh.hexes))
        total += seconds
        results.append((name, got, chi, report.boundary_euler))
    ok = all(g == c == r for _, g, c, r in results)
    detail = ", ".join(f"{n} chi {g} (expect {c})" for n, g, c, _ in results)
    assert record(10, ok, detail, total, 600.0)
