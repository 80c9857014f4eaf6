"""Tetrahedral and triangle mesh containers."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


class MeshError(ValueError):
    """Invalid mesh topology, geometry, or file contents."""


# Outward faces of a positively oriented tet (a, b, c, d).
_TET_FACES = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])


def signed_volumes(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Signed volume of each tet, positive for right-handed vertex order."""
    x = vertices[tets]
    d = x[:, 1:] - x[:, :1]
    return np.linalg.det(d.transpose(0, 2, 1)) / 6.0


def _rest_matrices(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    x = vertices[tets]
    dm = (x[:, 1:] - x[:, :1]).transpose(0, 2, 1)  # columns are edge vectors
    return np.linalg.inv(dm)


def _canonical_triangles(tris: np.ndarray) -> np.ndarray:
    """Rotate each triangle so its smallest index comes first (winding kept)."""
    shift = np.argmin(tris, axis=1)
    rows = np.arange(len(tris))[:, None]
    cols = (shift[:, None] + np.arange(3)[None, :]) % 3
    return tris[rows, cols]


def extract_surface(tets: np.ndarray) -> np.ndarray:
    """Boundary triangles of a positively oriented tet mesh.

    Faces appearing once are on the boundary. The result is sorted and
    canonicalised so it does not depend on the order of ``tets``.
    """
    faces = tets[:, _TET_FACES].reshape(-1, 3)
    keys = np.sort(faces, axis=1)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    boundary = faces[counts[inverse.ravel()] == 1]
    boundary = _canonical_triangles(boundary)
    order = np.lexsort((boundary[:, 2], boundary[:, 1], boundary[:, 0]))
    return boundary[order]


def unique_edges(tris: np.ndarray) -> np.ndarray:
    """Sorted unique undirected edges of a triangle list."""
    if len(tris) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    e = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)


def lump_masses(tets: np.ndarray, volumes: np.ndarray, n_vertices: int, density: float) -> np.ndarray:
    """Per-vertex masses, each tet giving a quarter of its mass to each corner."""
    if density <= 0:
        raise ValueError(f"density must be positive, got {density}")
    share = np.repeat(density * volumes / 4.0, 4)
    return np.bincount(tets.ravel(), weights=share, minlength=n_vertices)


@dataclass(frozen=True)
class TetMesh:
    vertices: np.ndarray
    tets: np.ndarray
    rest_volumes: np.ndarray
    inverse_rest_matrices: np.ndarray
    surface_tris: np.ndarray
    surface_edges: np.ndarray
    vertex_masses: np.ndarray
    density: float = 1.0e3

    @classmethod
    def from_arrays(cls, vertices, tets, density: float = 1.0e3, *, repair: bool = True) -> "TetMesh":
        """Validate and build a mesh.

        Negatively oriented tets are repaired by swapping two indices when
        ``repair`` is set; zero-volume tets are rejected.
        """
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        tets = np.array(tets, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError(f"vertices must be (n, 3), got {vertices.shape}")
        if tets.ndim != 2 or tets.shape[1] != 4:
            raise MeshError(f"tets must be (m, 4), got {tets.shape}")
        if len(tets) == 0:
            raise MeshError("mesh has no tetrahedra")
        bad = np.flatnonzero((tets < 0).any(axis=1) | (tets >= len(vertices)).any(axis=1))
        if len(bad):
            raise MeshError(f"tet {bad[0]} references a vertex outside [0, {len(vertices)})")

        vol = signed_volumes(vertices, tets)
        scale = np.ptp(vertices, axis=0).max() if len(vertices) else 1.0
        tiny = 1e-14 * scale**3
        flat = np.flatnonzero(np.abs(vol) <= tiny)
        if len(flat):
            raise MeshError(f"tet {flat[0]} has zero volume")
        neg = np.flatnonzero(vol < 0)
        if len(neg):
            if not repair:
                raise MeshError(f"tet {neg[0]} is inverted")
            tets[neg] = tets[neg][:, [0, 2, 1, 3]]
            vol[neg] = -vol[neg]
            logger.info("repaired %d negatively oriented tets by index swap", len(neg))

        surface = extract_surface(tets)
        return cls(
            vertices=vertices,
            tets=tets,
            rest_volumes=vol,
            inverse_rest_matrices=_rest_matrices(vertices, tets),
            surface_tris=surface,
            surface_edges=unique_edges(surface),
            vertex_masses=lump_masses(tets, vol, len(vertices), density),
            density=float(density),
        )

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def surface_vertices(self) -> np.ndarray:
        return np.unique(self.surface_tris)

    def total_volume(self) -> float:
        return float(self.rest_volumes.sum())

    def with_density(self, density: float) -> "TetMesh":
        masses = lump_masses(self.tets, self.rest_volumes, self.n_vertices, density)
        return TetMesh(
            self.vertices, self.tets, self.rest_volumes, self.inverse_rest_matrices,
            self.surface_tris, self.surface_edges, masses, float(density),
        )


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray = field(default=None)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        t = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must be (n, 3), got {v.shape}")
        if len(t) and ((t < 0).any() or (t >= len(v)).any()):
            raise MeshError("triangle references a vertex that does not exist")
        if len(t):
            a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
            area2 = np.linalg.norm(np.cross(b - a, c - a), axis=1)
            scale = np.ptp(v, axis=0).max()
            bad = np.flatnonzero(area2 <= 2e-14 * scale**2)
            if len(bad):
                raise MeshError(f"triangle {bad[0]} is degenerate")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "edges", unique_edges(t))

    def is_watertight(self) -> bool:
        """Every edge shared by exactly two triangles."""
        t = self.triangles
        e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return bool(len(counts)) and bool((counts == 2).all())

    def enclosed_volume(self) -> float:
        x = self.vertices[self.triangles]
        return float(np.einsum("ij,ij->i", x[:, 0], np.cross(x[:, 1], x[:, 2])).sum() / 6.0)

    def transformed(self, pose: np.ndarray) -> "TriMesh":
        return TriMesh(self.vertices @ pose[:3, :3].T + pose[:3, 3], self.triangles)
