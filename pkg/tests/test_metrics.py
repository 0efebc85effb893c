import numpy as np
import pytest

import oracles
from hexoct.dualmesh import face_template
from hexoct.quality import hex_quality, jacobians, min_quality
from hexoct.quality.metrics import FLIP, jacobian_gradients, min_sample_gradients, orient_positive

CUBE = np.array(
    [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]],
    dtype=float,
)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_hexes(rng, n, jitter=0.25):
    return CUBE[None] + rng.uniform(-jitter, jitter, size=(n, 8, 3))


def test_unit_cube():
    q = hex_quality(CUBE, np.arange(8)[None], 0)
    assert np.array_equal(q.corner_jacobians, np.ones(9))
    assert np.array_equal(q.corner_scaled_jacobians, np.ones(9))
    assert q.min_sj == 1.0 and q.min_j == 1.0


def test_degenerate_corner_is_zero():
    p = CUBE.copy()
    # edge 0-4 pulled into the plane spanned by edges 0-1 and 0-3
    p[4] = [0.5, 0.5, 0.0]
    _, sj = jacobians(p[None])
    assert abs(sj[0, 0]) < 1e-12


def test_coincident_corners_give_sentinel():
    p = CUBE.copy()
    p[1] = p[0]
    _, sj = jacobians(p[None])
    assert sj[0, 0] == -1.0
    assert min_quality(p[None])[1][0] == -1.0


def test_matches_oracle_on_random_hexes():
    rng = np.random.default_rng(0)
    pts = random_hexes(rng, 500, 0.4)
    _, sj = min_quality(pts)
    expect = np.array([oracles.hex_min_sj(p) for p in pts])
    assert np.allclose(sj, expect, atol=1e-12)


def test_rigid_invariance():
    rng = np.random.default_rng(1)
    pts = random_hexes(rng, 1000)
    j0, sj0 = jacobians(pts)
    for _ in range(5):
        r = random_rotation(rng)
        t = rng.uniform(-10, 10, 3)
        j1, sj1 = jacobians(pts @ r.T + t)
        assert np.abs(sj1 - sj0).max() < 1e-9
        assert np.abs(j1 - j0).max() < 1e-9


@pytest.mark.parametrize("s", [0.5, 2.0, 8.0])
def test_scaling(s):
    pts = random_hexes(np.random.default_rng(2), 200)
    j0, sj0 = jacobians(pts)
    j1, sj1 = jacobians(pts * s)
    # powers of two scale exactly in floating point
    assert np.array_equal(sj1, sj0)
    assert np.array_equal(j1, j0 * s**3)


def test_bounds_and_sign():
    pts = random_hexes(np.random.default_rng(3), 2000, 0.9)
    j, sj = jacobians(pts)
    assert (sj >= -1).all() and (sj <= 1).all()
    assert np.array_equal(np.sign(j.min(axis=1)), np.sign(sj[np.arange(len(j)), j.argmin(axis=1)]))


def test_mirror_flips_sign():
    j, _ = jacobians(CUBE[FLIP][None])
    assert (j < 0).all()
    fixed = orient_positive(CUBE, FLIP[None])
    assert np.array_equal(fixed[0], np.arange(8))


def test_face_template_worst_hex():
    cells = face_template().astype(float)
    fixed = orient_positive(cells.reshape(-1, 3), np.arange(len(cells) * 8).reshape(-1, 8))
    _, sj = min_quality(cells.reshape(-1, 3)[fixed])
    assert sj.min() == pytest.approx(0.258, abs=1e-3)
    assert (sj > 0).all()


def test_sample_gradients_by_finite_differences():
    rng = np.random.default_rng(4)
    pts = random_hexes(rng, 30)
    j, sj, dj, dsj = jacobian_gradients(pts)
    h = 1e-6
    for k in range(8):
        for d in range(3):
            plus, minus = pts.copy(), pts.copy()
            plus[:, k, d] += h
            minus[:, k, d] -= h
            jp, sjp = jacobians(plus)
            jm, sjm = jacobians(minus)
            assert np.allclose((jp - jm) / (2 * h), dj[:, :, k, d], atol=1e-6)
            assert np.allclose((sjp - sjm) / (2 * h), dsj[:, :, k, d], atol=1e-6)


def test_min_sample_gradients_pick_the_minimum():
    pts = random_hexes(np.random.default_rng(5), 50)
    out = min_sample_gradients(pts)
    j, sj, dj, dsj = jacobian_gradients(pts)
    rows = np.arange(len(pts))
    assert np.array_equal(out["min_sj"], sj.min(axis=1))
    assert np.array_equal(out["min_j"], j.min(axis=1))
    assert np.allclose(out["grad_sj"], dsj[rows, out["arg_sj"]])
    assert np.allclose(out["grad_j"], dj[rows, out["arg_j"]])


def test_ties_resolve_to_lowest_sample():
    out = min_sample_gradients(CUBE[None])
    assert out["arg_sj"][0] == 0 and out["arg_j"][0] == 0
