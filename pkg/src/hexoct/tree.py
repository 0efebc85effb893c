"""Dimension-generic linear 2^d-trees over the unit cube.

Cells are addressed by integer keys ``(level, i, j[, k])``; a cell at level
``l`` spans ``[i, i+1] / 2^l`` along each axis. A tree is stored as the set of
its leaves (with a per-leaf tag); internal nodes are implied by the leaves.
The octree and the 2D quadtree twin share this code.
"""
from __future__ import annotations

import itertools
from collections import defaultdict
from typing import Iterable, Iterator, Mapping

import numpy as np

Key = tuple  # (level, *coords)


class TreeError(ValueError):
    """Structural problem with a tree (non-leaf argument, bad key, ...)."""


class UnbalancedTreeError(TreeError):
    """Two adjacent leaves differ by two or more levels."""


def parent(key: Key) -> Key:
    return (key[0] - 1,) + tuple(c >> 1 for c in key[1:])


def children(key: Key) -> list[Key]:
    dim = len(key) - 1
    lvl = key[0] + 1
    base = [2 * c for c in key[1:]]
    return [
        (lvl,) + tuple(base[a] + bits[a] for a in range(dim))
        for bits in itertools.product((0, 1), repeat=dim)
    ]


def child_order(dim: int) -> list[tuple[int, ...]]:
    """Bit offsets of children in the order returned by :func:`children`."""
    return list(itertools.product((0, 1), repeat=dim))


def ancestor(key: Key, level: int) -> Key:
    shift = key[0] - level
    return (level,) + tuple(c >> shift for c in key[1:])


def neighbor_offsets(dim: int) -> list[tuple[int, ...]]:
    return [d for d in itertools.product((-1, 0, 1), repeat=dim) if any(d)]


class SpaceTree:
    """Immutable view of a leaf set with lookup helpers.

    Parameters
    ----------
    leaves : mapping from key to a tag (any hashable; cell kind for octrees)
    dim : spatial dimension (2 or 3)
    """

    dim: int = 3

    def __init__(self, leaves: Mapping[Key, object] | Iterable[Key], dim: int | None = None):
        if dim is not None:
            self.dim = dim
        if not isinstance(leaves, Mapping):
            leaves = {k: None for k in leaves}
        self._leaves = dict(leaves)
        for k in self._leaves:
            if len(k) != self.dim + 1:
                raise TreeError(f"key {k} does not match dimension {self.dim}")
        self._internal: set[Key] | None = None

    # ------------------------------------------------------------------
    @property
    def leaves(self) -> Mapping[Key, object]:
        return self._leaves

    def __len__(self) -> int:
        return len(self._leaves)

    def __iter__(self) -> Iterator[Key]:
        return iter(self._leaves)

    def __eq__(self, other) -> bool:
        return isinstance(other, SpaceTree) and self.dim == other.dim and set(self._leaves) == set(other._leaves)

    def __hash__(self):
        return hash(frozenset(self._leaves))

    @property
    def depth(self) -> int:
        return max(k[0] for k in self._leaves)

    @property
    def min_level(self) -> int:
        return min(k[0] for k in self._leaves)

    def level_counts(self) -> dict[int, int]:
        out: dict[int, int] = defaultdict(int)
        for k in self._leaves:
            out[k[0]] += 1
        return dict(sorted(out.items()))

    def is_leaf(self, key: Key) -> bool:
        return key in self._leaves

    @property
    def internal(self) -> set[Key]:
        """All proper ancestors of leaves."""
        if self._internal is None:
            internal: set[Key] = set()
            for k in self._leaves:
                p = k
                while p[0] > 0:
                    p = parent(p)
                    if p in internal:
                        break
                    internal.add(p)
            self._internal = internal
        return self._internal

    def is_internal(self, key: Key) -> bool:
        return key in self.internal

    def in_domain(self, key: Key) -> bool:
        n = 1 << key[0]
        return key[0] >= 0 and all(0 <= c < n for c in key[1:])

    def covering_leaf(self, key: Key) -> Key | None:
        """Leaf equal to or containing cell ``key``; None when the cell is
        subdivided further (or lies outside the domain)."""
        if not self.in_domain(key):
            return None
        lvl = key[0]
        for level in range(lvl, -1, -1):
            a = ancestor(key, level)
            if a in self._leaves:
                return a
        return None

    def leaf_at_point(self, point) -> Key:
        """Leaf containing a point of the unit cube (half-open cells)."""
        p = np.clip(np.asarray(point, dtype=float), 0.0, np.nextafter(1.0, 0.0))
        depth = self.depth
        idx = tuple(int(c) for c in np.floor(p * (1 << depth)))
        leaf = self.covering_leaf((depth,) + idx)
        if leaf is None:
            raise TreeError(f"no leaf found at {point}")
        return leaf

    def bounds(self, key: Key) -> tuple[np.ndarray, np.ndarray]:
        size = 1.0 / (1 << key[0])
        lo = np.asarray(key[1:], dtype=float) * size
        return lo, lo + size

    def centers(self, keys: Iterable[Key] | None = None) -> np.ndarray:
        keys = list(self._leaves if keys is None else keys)
        arr = np.asarray(keys, dtype=float).reshape(len(keys), self.dim + 1)
        return (arr[:, 1:] + 0.5) / np.exp2(arr[:, :1])

    def descendant_leaves(self, key: Key) -> list[Key]:
        if key in self._leaves:
            return [key]
        if key not in self.internal:
            return []
        out = []
        for c in children(key):
            out.extend(self.descendant_leaves(c))
        return out

    # ------------------------------------------------------------------
    def leaf_neighbors(self, leaf: Key, adjacency: str = "face") -> list[Key]:
        """Leaves sharing a face, an edge or a vertex with ``leaf``.

        ``face`` requires a shared (d-1)-dimensional patch, ``edge`` at least a
        shared edge and ``vertex`` any contact. Results are sorted by their
        lattice position at the finest level, then by level.
        """
        if leaf not in self._leaves:
            raise TreeError(f"{leaf} is not a leaf")
        need = {"face": self.dim - 1, "edge": 1, "vertex": 0}.get(adjacency)
        if need is None:
            raise TreeError(f"unknown adjacency {adjacency!r}")
        lvl = leaf[0]
        found: set[Key] = set()
        for d in neighbor_offsets(self.dim):
            nb = (lvl,) + tuple(c + o for c, o in zip(leaf[1:], d))
            if not self.in_domain(nb):
                continue
            cov = self.covering_leaf(nb)
            if cov is not None:
                found.add(cov)
            else:
                found.update(self._touching_leaves(nb, leaf))
        lo, hi = self._int_box(leaf)
        result = []
        for k in found:
            klo, khi = self._int_box(k)
            shared = np.minimum(hi, khi) - np.maximum(lo, klo)
            if (shared < 0).any():
                continue
            if int((shared > 0).sum()) >= need:
                result.append(k)
        depth = max(self.depth, lvl)
        return sorted(result, key=lambda k: (tuple(c << (depth - k[0]) for c in k[1:]), k[0]))

    def _int_box(self, key: Key, depth: int = 24):
        s = 1 << (depth - key[0])
        lo = np.asarray(key[1:], dtype=np.int64) * s
        return lo, lo + s

    def _touching_leaves(self, node: Key, leaf: Key) -> list[Key]:
        lo, hi = self._int_box(leaf)
        out = []
        stack = [node]
        while stack:
            n = stack.pop()
            nlo, nhi = self._int_box(n)
            if (np.minimum(hi, nhi) - np.maximum(lo, nlo) < 0).any():
                continue
            if n in self._leaves:
                out.append(n)
            elif n in self.internal:
                stack.extend(children(n))
        return out

    # ------------------------------------------------------------------
    def balance_violations(self) -> list[tuple[Key, Key]]:
        """Adjacent leaf pairs (any contact) differing by two or more levels."""
        bad = []
        for leaf in self._leaves:
            lvl = leaf[0]
            for d in neighbor_offsets(self.dim):
                nb = (lvl,) + tuple(c + o for c, o in zip(leaf[1:], d))
                cov = self.covering_leaf(nb)
                if cov is not None and cov[0] < lvl - 1:
                    bad.append((leaf, cov))
        return bad

    def pairing_violations(self) -> list[Key]:
        """Internal nodes whose children mix leaves and internal nodes."""
        bad = []
        for p in self.internal:
            kids = children(p)
            nleaf = sum(k in self._leaves for k in kids)
            if 0 < nleaf < len(kids):
                bad.append(p)
        return bad

    def is_strongly_balanced(self) -> bool:
        return not self.balance_violations() and not self.pairing_violations()

    def check_structure(self) -> None:
        """Leaves must tile the unit cube exactly."""
        total = sum(2.0 ** (-self.dim * k[0]) for k in self._leaves)
        if abs(total - 1.0) > 1e-12:
            raise TreeError(f"leaves cover volume {total}, expected 1")
        for k in self._leaves:
            if k[0] > 0 and parent(k) in self._leaves:
                raise TreeError(f"leaf {k} has a leaf ancestor")

    def with_leaves(self, leaves: Mapping[Key, object]) -> "SpaceTree":
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone._leaves = dict(leaves)
        clone._internal = None
        return clone


# ---------------------------------------------------------------------------
# refinement and balancing on raw leaf dictionaries
# ---------------------------------------------------------------------------


def split_leaf(leaves: dict, key: Key, tag=None) -> list[Key]:
    value = leaves.pop(key)
    kids = children(key)
    for c in kids:
        leaves[c] = value if tag is None else tag
    return kids


def refine_to(leaves: dict, key: Key) -> None:
    """Split ancestors so that cell ``key`` becomes a leaf (no pairing)."""
    for level in range(0, key[0]):
        a = ancestor(key, level)
        if a in leaves:
            split_leaf(leaves, a)
    if key not in leaves:
        raise TreeError(f"cell {key} lies below existing leaves")


def _unique_rows(arr: np.ndarray) -> np.ndarray:
    """Sorted unique rows of a non-negative integer array."""
    if len(arr) == 0:
        return arr
    bitsz = max(int(arr.max()).bit_length(), 1)
    code = np.unique(_encode(arr, bitsz))
    dim = arr.shape[1]
    mask = (1 << bitsz) - 1
    return np.stack([(code >> (bitsz * (dim - 1 - a))) & mask for a in range(dim)], axis=1)


def strong_balance(tree: SpaceTree) -> tuple[SpaceTree, int]:
    """Minimal refinement satisfying the balancing and pairing rules.

    Returns the balanced tree and the number of leaves split.

    The tree is described by its set ``I`` of internal nodes. Pairing forces
    ``I`` to be closed under siblings; balancing forces, for every ``Y`` in
    ``I`` at level ``m``, the level ``m - 1`` cells touching ``Y`` to be in
    ``I`` as well (otherwise a child of ``Y`` would touch a leaf two levels
    coarser). Both rules map level ``m`` to levels ``m`` and ``m - 1`` only, so
    one sweep from the finest level to the root yields the smallest closed set
    containing the input's internal nodes. Every node added is forced, hence the
    result is the unique minimal fixed point.
    """
    dim = tree.dim
    internal = tree.internal
    if not internal:
        return tree.with_leaves(dict(tree.leaves)), 0
    by_level: dict[int, list] = defaultdict(list)
    for k in internal:
        by_level[k[0]].append(k[1:])
    top = max(by_level)
    levels: dict[int, np.ndarray] = {
        m: np.asarray(v, dtype=np.int64).reshape(-1, dim) for m, v in by_level.items()
    }
    offsets = np.asarray(neighbor_offsets(dim) + [(0,) * dim], dtype=np.int64)
    bits = np.asarray(child_order(dim), dtype=np.int64)
    closed: dict[int, np.ndarray] = {}
    carry = np.zeros((0, dim), dtype=np.int64)
    for m in range(top, -1, -1):
        cur = levels.get(m, np.zeros((0, dim), dtype=np.int64))
        cur = _unique_rows(np.vstack([cur, carry]))
        if m > 0 and len(cur):
            # sibling closure
            par = _unique_rows(cur >> 1)
            cur = (2 * par[:, None, :] + bits[None, :, :]).reshape(-1, dim)
            # coarse neighbors of every node: level m-1 cells touching it
            n_up = 1 << (m - 1)
            touch = ((2 * cur[:, None, :] + bits[None, :, :]).reshape(-1, 1, dim) + offsets[None, :, :]) >> 2
            touch = touch.reshape(-1, dim)
            ok = ((touch >= 0) & (touch < n_up)).all(axis=1)
            carry = _unique_rows(np.vstack([par, touch[ok]]))
        else:
            carry = np.zeros((0, dim), dtype=np.int64)
        closed[m] = cur
    # leaves are the children of internal nodes that are not internal themselves
    old = tree.leaves
    old_by_level: dict[int, list] = defaultdict(list)
    for k in old:
        old_by_level[k[0]].append(k)
    old_codes = {
        m: _encode(np.asarray([k[1:] for k in ks], dtype=np.int64), m) for m, ks in old_by_level.items()
    }
    old_sorted = {m: np.sort(c) for m, c in old_codes.items()}
    leaves: dict = {}
    internal_set: set = set()
    splits = 0
    for m, arr in closed.items():
        internal_set.update((m,) + tuple(r) for r in arr.tolist())
        if m in old_sorted:
            splits += int(np.isin(_encode(arr, m), old_sorted[m]).sum())
        kids = (2 * arr[:, None, :] + bits[None]).reshape(-1, dim)
        nxt = closed.get(m + 1)
        if nxt is not None and len(nxt):
            kids = kids[~np.isin(_encode(kids, m + 1), _encode(nxt, m + 1))]
        # tag from the input leaf that covers each new leaf
        src_level = np.full(len(kids), -1)
        for lv in range(m + 1, -1, -1):
            if lv not in old_sorted:
                continue
            todo = src_level < 0
            if not todo.any():
                break
            anc = kids[todo] >> (m + 1 - lv)
            hit = np.isin(_encode(anc, lv), old_sorted[lv])
            idx = np.flatnonzero(todo)[hit]
            src_level[idx] = lv
        for row, lv in zip(kids.tolist(), src_level.tolist()):
            key = (m + 1,) + tuple(row)
            src = (lv,) + tuple(c >> (m + 1 - lv) for c in row)
            leaves[key] = old.get(src)
    out = tree.with_leaves(leaves)
    out._internal = internal_set
    return out, splits


def _encode(coords: np.ndarray, level: int) -> np.ndarray:
    """Injective integer code of cell coordinates at one level."""
    code = np.zeros(len(coords), dtype=np.int64)
    for a in range(coords.shape[1]):
        code = (code << level) | coords[:, a]
    return code


def random_leaves(rng: np.random.Generator, dim: int, min_level: int, max_level: int, seeds: int) -> dict:
    """Uniform tree at ``min_level`` refined toward random seed points.

    Each seed picks a random point and a random target level in
    ``(min_level, max_level]`` and splits the leaf containing the point until
    it reaches that level. The result is generally neither balanced nor paired.
    """
    n = 1 << min_level
    leaves = {(min_level,) + idx: None for idx in itertools.product(range(n), repeat=dim)}
    for _ in range(seeds):
        target = int(rng.integers(min_level + 1, max_level + 1)) if max_level > min_level else min_level
        p = rng.random(dim)
        idx = tuple(int(c) for c in np.floor(p * (1 << target)))
        key = (target,) + idx
        if any(ancestor(key, lv) in leaves for lv in range(0, target + 1)):
            refine_to(leaves, key)
    return leaves
