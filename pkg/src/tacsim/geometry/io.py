"""Readers and writers for TetGen, legacy VTK and OBJ meshes."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .mesh import MeshError, TetMesh, TriMesh

logger = logging.getLogger(__name__)

VTK_TETRA = 10
TET_FORMATS = ("tetgen", "vtk")


def _data_lines(path: Path):
    for line in path.read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            yield line.split()


def _tetgen_paths(path: Path) -> tuple[Path, Path]:
    base = path.with_suffix("") if path.suffix in (".node", ".ele") else path
    return base.with_suffix(".node"), base.with_suffix(".ele")


def _read_tetgen(path: Path):
    node_path, ele_path = _tetgen_paths(path)
    for p in (node_path, ele_path):
        if not p.exists():
            raise FileNotFoundError(p)
    try:
        rows = list(_data_lines(node_path))
        n, dim = int(rows[0][0]), int(rows[0][1])
        if dim != 3:
            raise MeshError(f"{node_path}: expected 3D nodes, got dimension {dim}")
        body = rows[1:n + 1]
        ids = np.array([int(r[0]) for r in body])
        verts = np.array([[float(c) for c in r[1:4]] for r in body])
        base = int(ids.min()) if len(ids) else 0
        if base not in (0, 1) or not np.array_equal(ids, np.arange(base, base + n)):
            raise MeshError(f"{node_path}: node ids must be consecutive from 0 or 1")

        rows = list(_data_lines(ele_path))
        m, per = int(rows[0][0]), int(rows[0][1])
        if per != 4:
            raise MeshError(f"{ele_path}: only 4-node tetrahedra are supported, got {per}")
        tets = np.array([[int(c) for c in r[1:5]] for r in rows[1:m + 1]], dtype=np.int64) - base
    except (IndexError, ValueError) as exc:
        if isinstance(exc, MeshError):
            raise
        raise MeshError(f"cannot parse TetGen mesh {path}: {exc}") from exc
    if len(verts) != n or len(tets) != m:
        raise MeshError(f"TetGen mesh {path} is truncated")
    return verts, tets


def _read_vtk(path: Path):
    if not path.exists():
        raise FileNotFoundError(path)
    lines = path.read_text().splitlines()
    if len(lines) < 4 or not lines[0].startswith("# vtk DataFile"):
        raise MeshError(f"{path}: missing VTK header")
    if lines[2].strip().upper() != "ASCII":
        raise MeshError(f"{path}: only ASCII legacy VTK is supported")
    tokens = " ".join(lines[3:]).split()
    try:
        i = tokens.index("DATASET")
        if tokens[i + 1].upper() != "UNSTRUCTURED_GRID":
            raise MeshError(f"{path}: dataset must be UNSTRUCTURED_GRID")
        i = tokens.index("POINTS")
        n = int(tokens[i + 1])
        verts = np.array(tokens[i + 3:i + 3 + 3 * n], dtype=np.float64).reshape(n, 3)
        i = tokens.index("CELLS")
        n_cells, size = int(tokens[i + 1]), int(tokens[i + 2])
        cell_data = np.array(tokens[i + 3:i + 3 + size], dtype=np.int64)
        i = tokens.index("CELL_TYPES")
        types = np.array(tokens[i + 2:i + 2 + int(tokens[i + 1])], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise MeshError(f"cannot parse VTK mesh {path}: {exc}") from exc
    if len(cell_data) != size or len(types) != n_cells:
        raise MeshError(f"VTK mesh {path} is truncated")
    tets, pos = [], 0
    for k in range(n_cells):
        count = int(cell_data[pos])
        if types[k] == VTK_TETRA:
            if count != 4:
                raise MeshError(f"{path}: tetra cell {k} has {count} points")
            tets.append(cell_data[pos + 1:pos + 5])
        pos += count + 1
    skipped = n_cells - len(tets)
    if skipped:
        logger.info("%s: ignored %d non-tetrahedral cells", path, skipped)
    return verts, np.array(tets, dtype=np.int64).reshape(-1, 4)


def load_tet_mesh(path, format: str | None = None, density: float = 1.0e3) -> TetMesh:
    """Load a tet mesh from TetGen ``.node/.ele`` or legacy ASCII VTK."""
    path = Path(path)
    if format is None:
        format = "vtk" if path.suffix == ".vtk" else "tetgen"
    if format == "tetgen":
        verts, tets = _read_tetgen(path)
    elif format == "vtk":
        verts, tets = _read_vtk(path)
    else:
        raise ValueError(f"unknown tet mesh format {format!r}; expected one of {TET_FORMATS}")
    return TetMesh.from_arrays(verts, tets, density)


def load_tri_mesh(path, format: str = "obj") -> TriMesh:
    """Load a triangle mesh from Wavefront OBJ (``v`` and ``f`` records)."""
    if format != "obj":
        raise ValueError(f"unknown triangle mesh format {format!r}")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    verts, faces = [], []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(c) for c in parts[1:4]])
        elif parts[0] == "f":
            if len(parts) != 4:
                raise MeshError(f"{path}:{lineno}: face has {len(parts) - 1} vertices, only triangles allowed")
            face = []
            for p in parts[1:]:
                k = int(p.split("/")[0])
                k = k - 1 if k > 0 else len(verts) + k
                if not 0 <= k < len(verts):
                    raise MeshError(f"{path}:{lineno}: dangling vertex index {p}")
                face.append(k)
            faces.append(face)
    return TriMesh(np.array(verts).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_tetgen(base, vertices: np.ndarray, tets: np.ndarray) -> None:
    base = Path(base).with_suffix("")
    with open(base.with_suffix(".node"), "w") as f:
        f.write(f"{len(vertices)} 3 0 0\n")
        for i, v in enumerate(vertices):
            f.write(f"{i} {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
    with open(base.with_suffix(".ele"), "w") as f:
        f.write(f"{len(tets)} 4 0\n")
        for i, t in enumerate(tets):
            f.write(f"{i} {t[0]} {t[1]} {t[2]} {t[3]}\n")


def write_vtk(path, vertices: np.ndarray, tets: np.ndarray) -> None:
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\ntet mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {len(vertices)} double\n")
        for v in vertices:
            f.write(f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        f.write(f"CELLS {len(tets)} {5 * len(tets)}\n")
        for t in tets:
            f.write(f"4 {t[0]} {t[1]} {t[2]} {t[3]}\n")
        f.write(f"CELL_TYPES {len(tets)}\n")
        f.write(f"{VTK_TETRA}\n" * len(tets))


def write_obj(path, vertices: np.ndarray, triangles: np.ndarray) -> None:
    with open(path, "w") as f:
        for v in vertices:
            f.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for t in triangles:
            f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")
