"""Mesh file readers and writers.

Readers return raw ``(vertices, faces)`` arrays; validation happens in
:mod:`hexoct.surface`. Writers cover the legacy VTK unstructured grid format
(hexahedra and voxels) and a small SVG dump for 2D quad meshes.
"""
from __future__ import annotations

import logging
import struct
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

VTK_VOXEL = 11
VTK_HEXAHEDRON = 12


class MeshReadError(ValueError):
    """Raised when an input file cannot be parsed as a triangle mesh."""


def read_mesh(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read an OBJ, OFF or STL file into ``(vertices (n, 3), faces (m, 3))``."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise MeshReadError(f"unreadable file {path}: {exc}") from exc
    suffix = path.suffix.lower()
    if suffix == ".obj":
        return _read_obj(data.decode("utf-8", errors="replace"))
    if suffix == ".off":
        return _read_off(data.decode("utf-8", errors="replace"))
    if suffix == ".stl":
        return _read_stl(data)
    raise MeshReadError(f"unsupported file extension {suffix!r} for {path}")


def _triangles_only(faces: list[list[int]]) -> np.ndarray:
    for idx, face in enumerate(faces):
        if len(face) != 3:
            raise MeshReadError(f"non-triangle face {idx} with {len(face)} vertices")
    if not faces:
        raise MeshReadError("mesh contains no faces")
    return np.asarray(faces, dtype=np.int64)


def _read_obj(text: str) -> tuple[np.ndarray, np.ndarray]:
    verts, faces = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            try:
                verts.append([float(x) for x in parts[1:4]])
            except ValueError as exc:
                raise MeshReadError(f"bad vertex on line {lineno}") from exc
        elif parts[0] == "f":
            idx = []
            for token in parts[1:]:
                i = int(token.split("/")[0])
                idx.append(i - 1 if i > 0 else len(verts) + i)
            faces.append(idx)
    faces_arr = _triangles_only(faces)
    verts_arr = np.asarray(verts, dtype=float).reshape(-1, 3)
    _check_indices(faces_arr, len(verts_arr))
    return verts_arr, faces_arr


def _read_off(text: str) -> tuple[np.ndarray, np.ndarray]:
    tokens = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.extend(line.split())
    if not tokens or not tokens[0].endswith("OFF"):
        raise MeshReadError("missing OFF header")
    pos = 1
    nv, nf = int(tokens[pos]), int(tokens[pos + 1])
    pos += 3
    verts = np.asarray(tokens[pos : pos + 3 * nv], dtype=float).reshape(nv, 3)
    pos += 3 * nv
    faces = []
    for _ in range(nf):
        k = int(tokens[pos])
        faces.append([int(t) for t in tokens[pos + 1 : pos + 1 + k]])
        pos += 1 + k
    faces_arr = _triangles_only(faces)
    _check_indices(faces_arr, nv)
    return verts, faces_arr


def _read_stl(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    if len(data) >= 84:
        (count,) = struct.unpack_from("<I", data, 80)
        if 84 + 50 * count == len(data):
            rec = np.frombuffer(
                data,
                dtype=np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")]),
                count=count,
                offset=84,
            )
            return _dedup_stl(rec["v"].astype(float))
    text = data.decode("utf-8", errors="replace")
    coords = [
        [float(x) for x in line.split()[1:4]]
        for line in text.splitlines()
        if line.strip().startswith("vertex")
    ]
    if not coords or len(coords) % 3:
        raise MeshReadError("malformed ASCII STL")
    return _dedup_stl(np.asarray(coords).reshape(-1, 3, 3))


def _dedup_stl(tri_coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pts = tri_coords.reshape(-1, 3)
    diag = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0))) or 1.0
    tol = 1e-8 * diag
    keys = np.round((pts - pts.min(axis=0)) / tol).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    return pts[first], inverse.reshape(-1, 3).astype(np.int64)


def _check_indices(faces: np.ndarray, nv: int) -> None:
    bad = np.flatnonzero((faces < 0).any(axis=1) | (faces >= nv).any(axis=1))
    if len(bad):
        raise MeshReadError(f"face {bad[0]} references a missing vertex")


def write_obj(path: str | Path, vertices: np.ndarray, faces: np.ndarray) -> None:
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in np.asarray(vertices)]
    lines += ["f " + " ".join(str(i + 1) for i in f) for f in np.asarray(faces)]
    Path(path).write_text("\n".join(lines) + "\n")


def write_vtk_cells(
    path: str | Path,
    points: np.ndarray,
    cells: np.ndarray,
    cell_type: int = VTK_HEXAHEDRON,
    cell_data: dict[str, np.ndarray] | None = None,
    title: str = "hexoct mesh",
) -> None:
    """Write a legacy ASCII VTK unstructured grid with uniform cell type."""
    points = np.asarray(points, dtype=float)
    cells = np.asarray(cells, dtype=np.int64).reshape(len(cells), -1)
    npc = cells.shape[1] if len(cells) else 8
    out = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {len(points)} double",
    ]
    out += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in points]
    out.append(f"CELLS {len(cells)} {len(cells) * (npc + 1)}")
    out += [f"{npc} " + " ".join(map(str, c)) for c in cells]
    out.append(f"CELL_TYPES {len(cells)}")
    out += [str(cell_type)] * len(cells)
    if cell_data:
        out.append(f"CELL_DATA {len(cells)}")
        for name, values in cell_data.items():
            values = np.asarray(values)
            if values.dtype.kind in "iub":
                out += [f"SCALARS {name} int 1", "LOOKUP_TABLE default"]
                out += [str(int(v)) for v in values]
            else:
                out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                out += [f"{v:.17g}" for v in values]
    Path(path).write_text("\n".join(out) + "\n")


def read_vtk_cells(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Minimal reader for files produced by :func:`write_vtk_cells`.

    Returns ``(points, cells, cell_types)``.
    """
    lines = Path(path).read_text().splitlines()
    i = 0
    while not lines[i].startswith("POINTS"):
        i += 1
    n = int(lines[i].split()[1])
    pts = np.array([[float(x) for x in lines[i + 1 + k].split()] for k in range(n)])
    i += n + 1
    while not lines[i].startswith("CELLS"):
        i += 1
    m = int(lines[i].split()[1])
    cells = np.array([[int(x) for x in lines[i + 1 + k].split()[1:]] for k in range(m)])
    i += m + 1
    types = np.array([int(lines[i + 1 + k]) for k in range(m)])
    return pts, cells, types


def write_svg_quads(path: str | Path, vertices: np.ndarray, quads: np.ndarray, size: int = 800) -> None:
    """Draw a 2D quad mesh as an SVG wireframe (y axis pointing up)."""
    v = np.asarray(vertices, dtype=float)
    lo, hi = v.min(axis=0), v.max(axis=0)
    scale = (size - 20) / max(float((hi - lo).max()), 1e-12)
    xy = (v - lo) * scale + 10
    xy[:, 1] = size - xy[:, 1]
    polys = []
    for q in np.asarray(quads):
        pts = " ".join(f"{xy[k, 0]:.3f},{xy[k, 1]:.3f}" for k in q)
        polys.append(f'<polygon points="{pts}" fill="#dde8f5" stroke="#223" stroke-width="0.6"/>')
    body = "\n".join(polys)
    Path(path).write_text(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">\n{body}\n</svg>\n'
    )
