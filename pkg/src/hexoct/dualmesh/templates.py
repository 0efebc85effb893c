"""Transition templates in canonical local frames.

Local coordinates are measured in half fine-leaf units, so every template
point is an integer triple. A fine leaf of the transition has edge length 2,
a coarse leaf edge length 4, and the octree block owning the transition has
edge length 8.

Face template frame ``(u, v, w)``: the transition face is ``[0, 8]^2`` in the
plane ``w = 0``; the coarse block lies at ``w < 0`` and the refined block at
``w > 0``.

Edge template frame ``(t, v, w)``: the transition edge runs along ``t`` from 0
to 8. The four blocks around it are numbered counterclockwise in the
``(v, w)`` plane: ``Q0 = (+v, +w)``, ``Q1 = (-v, +w)``, ``Q2 = (-v, -w)``,
``Q3 = (+v, -w)``. Rotating the frame by a quarter turn about ``t`` maps
``Q_q`` to ``Q_{q+1}``, so every configuration reduces to one of four
canonical refinement patterns.

New template points sit at the centers of virtual fine cells on the coarse
side: the side points next to a transition edge and the interior points of
the face template's middle layer. With this placement the worst scaled
Jacobian over all templates is ``1/sqrt(15) ~= 0.2582``, reached by the two
side hexes of the face template.
"""
from __future__ import annotations

import numpy as np

QUADRANT_SIGNS = ((1, 1), (-1, 1), (-1, -1), (1, -1))

# canonical refined-quadrant sets per edge kind
EDGE_KINDS = {
    "edge-b": frozenset({0}),
    "edge-c": frozenset({0, 1}),
    "edge-d": frozenset({1, 2, 3}),
    "edge-e": frozenset({0, 2}),
}

TEMPLATE_SIZES = {"face": 13, "edge-b": 5, "edge-c": 4, "edge-d": 3, "edge-e": 3}


def _fine(q: int, k: int) -> tuple[int, int, int]:
    sv, sw = QUADRANT_SIGNS[q]
    return (1 + 2 * k, sv, sw)


def _coarse(q: int, k: int) -> tuple[int, int, int]:
    sv, sw = QUADRANT_SIGNS[q]
    return (2 + 4 * k, 2 * sv, 2 * sw)


def _side(q: int, k: int) -> tuple[int, int, int]:
    """New point inside coarse quadrant ``q`` next to the edge, ``k = 0, 1``."""
    sv, sw = QUADRANT_SIGNS[q]
    return (3 + 2 * k, sv, sw)


def face_template() -> np.ndarray:
    """13 hexes of the face transition, shape (13, 8, 3)."""

    def coarse(i, j):
        return (2 + 4 * i, 2 + 4 * j, -2)

    def fine(k, l):
        return (1 + 2 * k, 1 + 2 * l, 1)

    g: dict[tuple[int, int], tuple[int, int, int]] = {
        (0, 0): coarse(0, 0),
        (3, 0): coarse(1, 0),
        (0, 3): coarse(0, 1),
        (3, 3): coarse(1, 1),
    }
    for k in range(2):
        g[(1 + k, 0)] = (3 + 2 * k, 1, -1)
        g[(1 + k, 3)] = (3 + 2 * k, 7, -1)
        g[(0, 1 + k)] = (1, 3 + 2 * k, -1)
        g[(3, 1 + k)] = (7, 3 + 2 * k, -1)
    for i in range(2):
        for j in range(2):
            g[(1 + i, 1 + j)] = (3 + 2 * i, 3 + 2 * j, 0)

    hexes = []
    for p in range(3):
        for q in range(3):
            hexes.append(
                [fine(p, q), fine(p + 1, q), fine(p + 1, q + 1), fine(p, q + 1),
                 g[p, q], g[p + 1, q], g[p + 1, q + 1], g[p, q + 1]]
            )
    hexes.append([g[0, 0], g[1, 0], g[2, 0], g[3, 0], g[0, 1], g[1, 1], g[2, 1], g[3, 1]])
    hexes.append([g[0, 3], g[1, 3], g[2, 3], g[3, 3], g[0, 2], g[1, 2], g[2, 2], g[3, 2]])
    hexes.append([g[0, 0], g[3, 0], g[3, 3], g[0, 3], g[0, 1], g[3, 1], g[3, 2], g[0, 2]])
    hexes.append([g[0, 1], g[3, 1], g[3, 2], g[0, 2], g[1, 1], g[2, 1], g[2, 2], g[1, 2]])
    return np.asarray(hexes, dtype=np.int64)


def edge_template(kind: str) -> np.ndarray:
    """Hexes of an edge transition in canonical orientation, shape (n, 8, 3)."""
    f, c, s = _fine, _coarse, _side
    if kind == "edge-b":
        a1, b1, a3, b3 = s(1, 0), s(1, 1), s(3, 0), s(3, 1)
        n1, n2 = s(2, 0), s(2, 1)
        hexes = [
            [f(0, 0), c(1, 0), c(2, 0), c(3, 0), f(0, 1), a1, n1, a3],
            [f(0, 1), a1, n1, a3, f(0, 2), b1, n2, b3],
            [f(0, 2), b1, n2, b3, f(0, 3), c(1, 1), c(2, 1), c(3, 1)],
            [c(1, 0), a1, b1, c(1, 1), c(2, 0), n1, n2, c(2, 1)],
            [c(3, 0), a3, b3, c(3, 1), c(2, 0), n1, n2, c(2, 1)],
        ]
    elif kind == "edge-c":
        a2, b2, a3, b3 = s(2, 0), s(2, 1), s(3, 0), s(3, 1)
        hexes = [
            [f(0, 0), f(1, 0), c(2, 0), c(3, 0), f(0, 1), f(1, 1), a2, a3],
            [f(0, 1), f(1, 1), a2, a3, f(0, 2), f(1, 2), b2, b3],
            [f(0, 2), f(1, 2), b2, b3, f(0, 3), f(1, 3), c(2, 1), c(3, 1)],
            [c(2, 0), a2, b2, c(2, 1), c(3, 0), a3, b3, c(3, 1)],
        ]
    elif kind == "edge-d":
        n1, n2 = s(0, 0), s(0, 1)
        hexes = [
            [c(0, 0), f(1, 0), f(2, 0), f(3, 0), n1, f(1, 1), f(2, 1), f(3, 1)],
            [n1, f(1, 1), f(2, 1), f(3, 1), n2, f(1, 2), f(2, 2), f(3, 2)],
            [n2, f(1, 2), f(2, 2), f(3, 2), c(0, 1), f(1, 3), f(2, 3), f(3, 3)],
        ]
    elif kind == "edge-e":
        n1, n2, m1, m2 = s(1, 0), s(1, 1), s(3, 0), s(3, 1)
        hexes = [
            [f(0, 0), c(1, 0), f(2, 0), c(3, 0), f(0, 1), n1, f(2, 1), m1],
            [f(0, 1), n1, f(2, 1), m1, f(0, 2), n2, f(2, 2), m2],
            [f(0, 2), n2, f(2, 2), m2, f(0, 3), c(1, 1), f(2, 3), c(3, 1)],
        ]
    else:
        raise KeyError(f"unknown edge template kind {kind!r}")
    return np.asarray(hexes, dtype=np.int64)


def classify_edge(refined: frozenset[int] | set[int]) -> tuple[str, int]:
    """Kind and quarter-turn count ``r`` for a set of refined quadrants.

    Local quadrant ``q`` of the canonical template corresponds to global
    quadrant ``(q + r) % 4``.
    """
    refined = frozenset(refined)
    for kind, pattern in EDGE_KINDS.items():
        for r in range(4):
            if frozenset((q - r) % 4 for q in refined) == pattern:
                return kind, r
    raise KeyError(f"refinement pattern {sorted(refined)} matches no edge template")


def quad_template() -> np.ndarray:
    """The single 2D transition template, shape (4, 4, 2).

    Frame ``(u, w)``: transition edge ``[0, 8]`` on ``w = 0`` with the coarse
    side at ``w < 0``.
    """
    p1, p2 = (2, -2), (6, -2)
    fk = [(1 + 2 * k, 1) for k in range(4)]
    a, b = (3, -1), (5, -1)
    return np.asarray(
        [[p1, fk[0], fk[1], a], [a, fk[1], fk[2], b], [b, fk[2], fk[3], p2], [p1, a, b, p2]],
        dtype=np.int64,
    )
