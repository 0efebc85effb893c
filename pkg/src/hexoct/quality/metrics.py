"""Jacobian and scaled-Jacobian evaluation for trilinear hexahedra.

Corner ordering follows the usual convention: ``0-1-2-3`` is the bottom face
counterclockwise seen from above, ``4-5-6-7`` the top face aligned with it.
Every hex is sampled at its eight corners and at the body center, giving nine
values per element.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Right-handed edge triples leaving each corner.
CORNER_EDGES = np.array(
    [
        (1, 3, 4),
        (2, 0, 5),
        (3, 1, 6),
        (0, 2, 7),
        (7, 5, 0),
        (4, 6, 1),
        (5, 7, 2),
        (6, 4, 3),
    ]
)

# Opposite face pairs (minus side, plus side) for the body-center frame.
CENTER_FACES = (
    ((0, 3, 7, 4), (1, 2, 6, 5)),
    ((0, 1, 5, 4), (3, 2, 6, 7)),
    ((0, 1, 2, 3), (4, 5, 6, 7)),
)

HEX_FACES = np.array(
    [
        (0, 3, 2, 1),
        (4, 5, 6, 7),
        (0, 1, 5, 4),
        (1, 2, 6, 5),
        (2, 3, 7, 6),
        (3, 0, 4, 7),
    ]
)

FLIP = np.array([4, 5, 6, 7, 0, 1, 2, 3])

_DEGENERATE_TOL = 1e-14


def _center_weights() -> np.ndarray:
    """(3, 8) matrix mapping the 8 corners to the three body-center vectors."""
    w = np.zeros((3, 8))
    for axis, (minus, plus) in enumerate(CENTER_FACES):
        w[axis, list(plus)] += 0.25
        w[axis, list(minus)] -= 0.25
    return w


CENTER_WEIGHTS = _center_weights()


def sample_frames(points: np.ndarray) -> np.ndarray:
    """Edge frames at the 9 sample locations.

    Parameters
    ----------
    points : (n, 8, 3) array
        Corner coordinates of ``n`` hexes.

    Returns
    -------
    (n, 9, 3, 3) array whose ``[h, s, i]`` row is edge vector ``e_i`` of sample
    ``s`` (corners 0-7, then the body center).
    """
    points = np.asarray(points, dtype=float)
    out = np.empty((len(points), 9, 3, 3))
    np.subtract(np.take(points, CORNER_EDGES, axis=1), points[:, :, None, :], out=out[:, :8])
    np.matmul(CENTER_WEIGHTS, points, out=out[:, 8])
    return out


def jacobians(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(J, SJ)``, each of shape (n, 9).

    Samples with a zero-length edge vector get ``SJ = -1``.
    """
    frames = sample_frames(points)
    det = _det(frames)
    lengths = np.sqrt((frames * frames).sum(axis=-1))
    prod = lengths.prod(axis=-1)
    degenerate = lengths.min(axis=-1) < _DEGENERATE_TOL
    with np.errstate(divide="ignore", invalid="ignore"):
        sj = np.where(degenerate, -1.0, det / np.where(degenerate, 1.0, prod))
    return det, np.clip(sj, -1.0, 1.0)


def min_quality(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-hex ``(min J, min SJ)`` over the nine samples."""
    j, sj = jacobians(points)
    return j.min(axis=1), sj.min(axis=1)


@dataclass(frozen=True)
class HexQuality:
    corner_jacobians: np.ndarray
    corner_scaled_jacobians: np.ndarray
    min_j: float
    min_sj: float


def hex_quality(vertices: np.ndarray, hexes: np.ndarray, h: int) -> HexQuality:
    """Quality record for hex ``h`` of a mesh given as vertex/connectivity arrays."""
    pts = np.asarray(vertices, dtype=float)[np.asarray(hexes)[h]][None]
    j, sj = jacobians(pts)
    return HexQuality(j[0], sj[0], float(j[0].min()), float(sj[0].min()))


def _cross(a, b):
    """Cross product over the last axis (faster than ``np.cross`` for small batches)."""
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def _det_and_cofactors(frames):
    e0, e1, e2 = frames[..., 0, :], frames[..., 1, :], frames[..., 2, :]
    c0, c1, c2 = _cross(e1, e2), _cross(e2, e0), _cross(e0, e1)
    det = (e0 * c0).sum(axis=-1)
    return det, np.stack([c0, c1, c2], axis=-2)


def _det(frames):
    e0, e1, e2 = frames[..., 0, :], frames[..., 1, :], frames[..., 2, :]
    return (
        e0[..., 0] * (e1[..., 1] * e2[..., 2] - e1[..., 2] * e2[..., 1])
        + e0[..., 1] * (e1[..., 2] * e2[..., 0] - e1[..., 0] * e2[..., 2])
        + e0[..., 2] * (e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0])
    )


def _scatter_frame_gradient(dframes: np.ndarray) -> np.ndarray:
    """Chain d(value)/d(edge vectors) of shape (n, 9, 3, 3) back to corners (n, 9, 8, 3)."""
    n = dframes.shape[0]
    out = np.zeros((n, 9, 8, 3))
    idx = np.arange(8)
    for i in range(3):
        out[:, idx, CORNER_EDGES[:, i], :] += dframes[:, :8, i, :]
        out[:, idx, idx, :] -= dframes[:, :8, i, :]
    out[:, 8] = np.einsum("ak,nad->nkd", CENTER_WEIGHTS, dframes[:, 8])
    return out


def jacobian_gradients(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Sample values and their corner gradients.

    Returns ``(J, SJ, dJ, dSJ)`` with ``J, SJ`` of shape (n, 9) and gradients of
    shape (n, 9, 8, 3): derivative of each sample w.r.t. each corner position.
    """
    frames = sample_frames(points)
    det, cof = _det_and_cofactors(frames)
    lengths = np.linalg.norm(frames, axis=-1)
    safe = np.maximum(lengths, _DEGENERATE_TOL)
    prod = safe.prod(axis=-1)
    sj = det / prod
    dsj_frames = (cof - (det[..., None] / safe**2)[..., None] * frames) / prod[..., None, None]
    d_j = _scatter_frame_gradient(cof)
    d_sj = _scatter_frame_gradient(dsj_frames)
    degenerate = lengths.min(axis=-1) < _DEGENERATE_TOL
    sj = np.where(degenerate, -1.0, sj)
    return det, sj, d_j, d_sj


def _frame_map() -> np.ndarray:
    """``T[s, i, k]``: derivative of edge vector ``i`` of sample ``s`` w.r.t. corner ``k``."""
    t = np.zeros((9, 3, 8))
    for c in range(8):
        for i in range(3):
            t[c, i, CORNER_EDGES[c, i]] += 1.0
            t[c, i, c] -= 1.0
    t[8] = CENTER_WEIGHTS
    return t


FRAME_MAP = _frame_map()


def min_sample_gradients(points: np.ndarray) -> dict[str, np.ndarray]:
    """Minima over the nine samples and the gradients of the achieving samples.

    Ties resolve to the lowest sample index. Returns a dict with ``min_j``,
    ``min_sj`` (n,), ``arg_j``, ``arg_sj`` (n,) and ``grad_j``, ``grad_sj``
    (n, 8, 3).
    """
    frames = sample_frames(points)
    n = len(frames)
    rows = np.arange(n)
    det = _det(frames)
    lengths = np.sqrt((frames * frames).sum(axis=-1))
    degenerate = lengths.min(axis=-1) < _DEGENERATE_TOL
    safe = np.maximum(lengths, _DEGENERATE_TOL)
    prod = safe.prod(axis=-1)
    sj = np.where(degenerate, -1.0, np.clip(det / prod, -1.0, 1.0))
    arg_j = det.argmin(axis=1)
    arg_sj = sj.argmin(axis=1)

    fj = frames[rows, arg_j]
    _, cof_j = _det_and_cofactors(fj)
    grad_j = np.einsum("nik,nid->nkd", FRAME_MAP[arg_j], cof_j)

    fs = frames[rows, arg_sj]
    det_s, cof_s = _det_and_cofactors(fs)
    ls = safe[rows, arg_sj]
    ps = prod[rows, arg_sj]
    dfs = (cof_s - (det_s[:, None] / ls**2)[..., None] * fs) / ps[:, None, None]
    dfs[degenerate[rows, arg_sj]] = 0.0
    grad_sj = np.einsum("nik,nid->nkd", FRAME_MAP[arg_sj], dfs)
    return {
        "min_j": det[rows, arg_j],
        "min_sj": sj[rows, arg_sj],
        "arg_j": arg_j,
        "arg_sj": arg_sj,
        "grad_j": grad_j,
        "grad_sj": grad_sj,
    }


def orient_positive(points: np.ndarray, hexes: np.ndarray) -> np.ndarray:
    """Reorder hexes whose body-center Jacobian is negative (mirror images)."""
    hexes = np.array(hexes, dtype=np.int64, copy=True)
    if len(hexes) == 0:
        return hexes
    j, _ = jacobians(np.asarray(points)[hexes])
    flip = j[:, 8] < 0
    hexes[flip] = hexes[flip][:, FLIP]
    return hexes
