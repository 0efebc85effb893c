import itertools
import math

import numpy as np
import pytest

import oracles
from hexoct import shapes
from hexoct.io import read_vtk_cells
from hexoct.octree import (
    CellKind,
    ConfigError,
    Octree,
    RefinementConfig,
    build_initial_octree,
    enforce_strong_balance,
    leaf_neighbors,
    random_octree,
)
from hexoct.surface import TriangleSurface
from hexoct.tree import TreeError, random_leaves, refine_to


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def test_default_thresholds():
    cfg = RefinementConfig()
    assert cfg.curvature_thresholds == (0.5, 1.0, 2.0, 4.0, 8.0)
    assert cfg.thickness_thresholds == (16.0, 8.0, 4.0, 2.0, 1.0)
    assert (cfg.base_level, cfg.max_level) == (5, 9)
    assert RefinementConfig.for_levels(5, 9) == cfg


def test_threshold_ladder_for_other_ranges():
    cfg = RefinementConfig.for_levels(2, 4)
    assert cfg.curvature_thresholds == (0.5, 1.0, 2.0)
    assert cfg.thickness_thresholds == (4.0, 2.0, 1.0)


@pytest.mark.parametrize("bad", [dict(curvature_thresholds=(1, 2)), dict(thickness_thresholds=(1,) * 6)])
def test_wrong_threshold_length(bad):
    with pytest.raises(ConfigError, match="expected"):
        RefinementConfig(**bad)


def test_levels_out_of_range():
    with pytest.raises(ConfigError):
        RefinementConfig((1.0,), (1.0,), base_level=13, max_level=13)


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def _boundary_leaves(tree):
    return [k for k, v in tree.leaves.items() if v == CellKind.BOUNDARY]


def test_disabled_thresholds_give_uniform_base_level(sphere3):
    cfg = RefinementConfig((math.inf,) * 3, (0.0,) * 3, base_level=3, max_level=5)
    tree = build_initial_octree(sphere3, cfg)
    bnd = _boundary_leaves(tree)
    assert bnd and {k[0] for k in bnd} == {3}
    assert max(k[0] for k in tree.leaves) == 3
    tree.check_structure()


def _slab(thickness_in_finest, max_level):
    # plates of 0.8 x 0.8 at a gap measured in finest cells, placed by hand
    gap = thickness_in_finest / (1 << max_level)
    v, f = shapes.box(size=(0.8, 0.8, gap), n=(8, 8, 1), center=(0.5, 0.5, 0.5))
    return TriangleSurface.from_arrays(v, f, normalize=False)


def test_thin_slab_reaches_max_level():
    # 0.75 finest cells: the thickness rule fires at every ladder step
    s = _slab(0.75, 5)
    tree = build_initial_octree(s, RefinementConfig.for_levels(2, 5))
    assert tree.leaf_at_point([0.5, 0.5, 0.5 + 0.3 / 32])[0] == 5
    assert tree.leaf_at_point([0.3, 0.6, 0.5 - 0.3 / 32])[0] == 5


def test_slab_of_one_and_a_half_cells_stops_one_level_short():
    # T < 2 finest edges first fires at ladder step 2 (level 4 here), T < 1 never does
    s = _slab(1.5, 5)
    tree = build_initial_octree(s, RefinementConfig.for_levels(2, 5))
    centers = {k: tree.centers([k])[0] for k in _boundary_leaves(tree)}
    # away from the rim, where diagonal normals see other walls
    levels = {k[0] for k, c in centers.items() if (np.abs(c - 0.5) < [0.2, 0.2, 0.05]).all()}
    assert levels == {4}


def _expected_level(surface, cfg, leaf):
    """Brute-force evaluation of the refinement rule along the leaf's ancestry."""
    n = cfg.max_level - cfg.base_level + 1
    finest = 1.0 / (1 << cfg.max_level)
    target = cfg.base_level
    for l in range(0, min(leaf[0], n - 1) + 1):
        shift = leaf[0] - l
        anc = [c >> shift for c in leaf[1:]]
        size = 1.0 / (1 << l)
        lo, hi = np.array(anc) * size, (np.array(anc) + 1) * size
        tris = surface.triangles_in_box(lo, hi)
        if len(tris) == 0:
            break
        vids = np.unique(surface.triangles[tris])
        inside = [v for v in vids if ((surface.vertices[v] >= lo) & (surface.vertices[v] <= hi)).all()]
        use = inside if inside else list(vids)
        g = max(surface.curvature[v] for v in use)
        t = min(surface.thickness[v] for v in use)
        if g > cfg.curvature_thresholds[l] or t < cfg.thickness_thresholds[l] * finest:
            target = max(target, l + cfg.base_level)
    return min(target, cfg.max_level)


def test_spiked_sphere_refinement_matches_rule():
    v, f = shapes.icosphere(3)
    v = v.copy()
    apex = int(np.argmax(v[:, 2]))
    v[apex] *= 1.6
    s = TriangleSurface.from_arrays(v, f)
    cfg = RefinementConfig((4.0, 4.0, 4.0, 8.0), (0.0,) * 4, base_level=3, max_level=6)
    tree = build_initial_octree(s, cfg)
    # smooth part of the sphere stays below every threshold, the spike exceeds all
    assert s.curvature[apex] > 8.0
    equator = int(np.argmax(v[:, 0]))
    assert s.curvature[equator] < 4.0
    assert tree.leaf_at_point(s.vertices[apex])[0] == 6
    assert tree.leaf_at_point(s.vertices[equator])[0] == 3
    for leaf in _boundary_leaves(tree):
        assert leaf[0] == _expected_level(s, cfg, leaf), leaf


def test_leaf_tags_match_winding_number(sphere3):
    tree = build_initial_octree(sphere3, RefinementConfig.for_levels(3, 4))
    for k, tag in tree.leaves.items():
        lo, hi = tree.bounds(k)
        touches = len(sphere3.triangles_in_box(lo, hi)) > 0
        assert (tag == CellKind.BOUNDARY) == touches
        if not touches:
            w = oracles.winding_number((lo + hi) / 2, sphere3.vertices, sphere3.triangles)
            assert (tag == CellKind.INTERIOR) == (w > 0.5)


def test_octant_records():
    tree = enforce_strong_balance(Octree({k: CellKind.UNKNOWN for k in random_leaves(np.random.default_rng(1), 3, 1, 3, 3)}))
    for key in itertools.islice(tree.leaves, 20):
        o = tree.octant(key)
        assert o.size == 1.0 / (1 << key[0])
        assert o.child_ids is None
    for key in itertools.islice(tree.internal, 20):
        o = tree.octant(key)
        assert len(o.child_ids) == 8
        assert all(c[0] == key[0] + 1 for c in o.child_ids)
        assert sum(tree.octant(c).size ** 3 for c in o.child_ids) == pytest.approx(o.size**3)


def test_dump_vtk(tmp_path):
    tree = Octree.uniform(2)
    tree.dump_vtk(tmp_path / "t.vtk")
    pts, cells, types = read_vtk_cells(tmp_path / "t.vtk")
    assert len(cells) == 64 and set(types) == {11}
    assert np.allclose(pts.min(axis=0), 0) and np.allclose(pts.max(axis=0), 1)


# ---------------------------------------------------------------------------
# strong balance
# ---------------------------------------------------------------------------


def test_uniform_tree_unchanged():
    tree = Octree.uniform(2)
    from hexoct.tree import strong_balance

    out, splits = strong_balance(tree)
    assert splits == 0
    assert dict(out.leaves) == dict(tree.leaves)


def test_deep_leaf_next_to_coarse_block_cascades():
    leaves = {(2, i, j, k): None for i in range(4) for j in range(4) for k in range(4)}
    refine_to(leaves, (4, 7, 7, 7))
    tree = Octree(leaves)
    assert not oracles.balance_ok(leaves) or not oracles.pairing_ok(leaves)
    out = enforce_strong_balance(tree)
    assert oracles.balance_ok(out.leaves) and oracles.pairing_ok(out.leaves)
    # the deep leaf's level-3 parent is refined together with all seven siblings
    siblings = [(3, 2 + a, 2 + b, 2 + c) for a, b, c in itertools.product((0, 1), repeat=3)]
    assert all(sib in out.internal for sib in siblings)
    # and the coarse level-2 block next to them had to split as well
    assert (2, 2, 2, 2) in out.internal
    assert oracles.refines(out.leaves, leaves)


@pytest.mark.parametrize("seed", range(100))
def test_random_balance_fixed_point(seed):
    rng = np.random.default_rng(seed)
    leaves = random_leaves(rng, 3, 1, 5, int(rng.integers(1, 6)))
    tree = Octree({k: CellKind.UNKNOWN for k in leaves})
    out = enforce_strong_balance(tree)
    assert oracles.balance_ok(out.leaves)
    assert oracles.pairing_ok(out.leaves)
    assert oracles.refines(out.leaves, leaves)
    again = enforce_strong_balance(out)
    assert dict(again.leaves) == dict(out.leaves)
    # insertion order does not matter
    keys = list(leaves)
    rng.shuffle(keys)
    shuffled = enforce_strong_balance(Octree({k: CellKind.UNKNOWN for k in keys}))
    assert set(shuffled.leaves) == set(out.leaves)


def test_new_leaves_inherit_tags():
    leaves = {(1, i, j, k): CellKind.INTERIOR for i in range(2) for j in range(2) for k in range(2)}
    leaves[(1, 1, 1, 1)] = CellKind.EXTERIOR
    refine_to(leaves, (3, 0, 0, 0))
    for k in list(leaves):
        if k[0] > 1:
            leaves[k] = CellKind.BOUNDARY
    out = enforce_strong_balance(Octree(leaves))
    for k, tag in out.leaves.items():
        if all(c >> (k[0] - 1) == 1 for c in k[1:]):
            assert tag == CellKind.EXTERIOR


# ---------------------------------------------------------------------------
# neighbors
# ---------------------------------------------------------------------------


def test_center_leaf_face_neighbors():
    tree = Octree.uniform(2)
    assert len(leaf_neighbors(tree, (2, 1, 1, 1), "face")) == 6
    assert len(leaf_neighbors(tree, (2, 1, 1, 1), "edge")) == 18
    assert len(leaf_neighbors(tree, (2, 1, 1, 1), "vertex")) == 26


def test_corner_leaf_vertex_neighbors():
    tree = Octree.uniform(2)
    assert len(leaf_neighbors(tree, (2, 0, 0, 0), "vertex")) == 7


def test_face_neighbors_on_finer_block():
    leaves = {(1, i, j, k): None for i in range(2) for j in range(2) for k in range(2)}
    refine_to(leaves, (2, 2, 0, 0))
    tree = Octree(leaves)
    got = leaf_neighbors(tree, (1, 0, 0, 0), "face")
    finer = [k for k in got if k[0] == 2]
    assert sorted(finer) == sorted((2, 2, j, k) for j in range(2) for k in range(2))


def test_non_leaf_argument():
    tree = Octree.uniform(2)
    with pytest.raises(TreeError):
        leaf_neighbors(tree, (1, 0, 0, 0))


@pytest.mark.parametrize("seed", range(5))
def test_neighbors_match_brute_force(seed):
    tree = random_octree(np.random.default_rng(seed), 1, 4, seeds=3)
    keys, lo, hi = oracles.leaf_boxes(tree.leaves)
    need = {"face": 2, "edge": 1, "vertex": 0}
    for i in range(0, len(keys), max(1, len(keys) // 25)):
        shared = np.minimum(hi[i], hi) - np.maximum(lo[i], lo)
        touch = (shared >= 0).all(axis=1)
        touch[i] = False
        dims = (shared > 0).sum(axis=1)
        for adj, d in need.items():
            expect = {keys[j] for j in np.flatnonzero(touch & (dims >= d))}
            assert set(leaf_neighbors(tree, keys[i], adj)) == expect
