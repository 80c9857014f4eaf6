"""Markers embedded in the elastomer front surface."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .heightmap import SensorPlane


@dataclass(frozen=True)
class MarkerSet:
    tri: np.ndarray     # (n, 3) vertex indices of the carrying triangle
    bary: np.ndarray    # (n, 3) barycentric coordinates
    rest: np.ndarray    # (n, 3) rest positions
    rows: int
    cols: int
    spacing: float

    def __len__(self):
        return len(self.bary)


def marker_grid(plane: SensorPlane, rows: int, cols: int, spacing: float, center=(0.0, 0.0)) -> np.ndarray:
    """(rows*cols, 2) in-plane grid coordinates, row-major, centred at ``center``."""
    if rows < 1 or cols < 1 or not spacing > 0:
        raise ValueError("grid needs positive rows, cols and spacing")
    cu = (np.arange(cols) - (cols - 1) / 2) * spacing + center[0]
    cv = (np.arange(rows) - (rows - 1) / 2) * spacing + center[1]
    gu, gv = np.meshgrid(cu, cv)
    return np.stack([gu.ravel(), gv.ravel()], axis=1)


def embed_markers(vertices, front_tris, plane: SensorPlane, rows: int, cols: int, spacing: float,
                  center=(0.0, 0.0), tol: float = 1e-9) -> MarkerSet:
    """Attach a grid of markers to the front-surface triangles below it.

    Each grid point is projected along the plane normal onto the topmost
    front triangle containing it.
    """
    vertices = np.asarray(vertices, dtype=float)
    front_tris = np.asarray(front_tris)
    pts = marker_grid(plane, rows, cols, spacing, center)
    q = plane.to_plane(vertices)[front_tris]
    a, b, c = q[:, 0, :2], q[:, 1, :2], q[:, 2, :2]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    scale = np.sqrt(np.abs(det)).max()
    tri, bary = [], []
    for p in pts:
        l1 = ((p[0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (p[1] - a[:, 1])) / det
        l2 = ((b[:, 0] - a[:, 0]) * (p[1] - a[:, 1]) - (p[0] - a[:, 0]) * (b[:, 1] - a[:, 1])) / det
        lam = np.stack([1.0 - l1 - l2, l1, l2], axis=1)
        ok = np.flatnonzero(lam.min(axis=1) >= -tol / max(scale, 1e-300))
        if not len(ok):
            raise ValueError(f"marker at plane coordinates {tuple(p)} lies off the front surface")
        h = np.einsum("ki,ki->k", lam[ok], q[ok, :, 2])
        k = ok[np.argmax(h)]
        lk = np.clip(lam[k], 0.0, None)
        tri.append(front_tris[k])
        bary.append(lk / lk.sum())
    tri = np.array(tri, dtype=np.int64).reshape(-1, 3)
    bary = np.array(bary).reshape(-1, 3)
    rest = np.einsum("ni,nij->nj", bary, vertices[tri])
    return MarkerSet(tri, bary, rest, rows, cols, spacing)


def marker_positions(markers: MarkerSet, x) -> np.ndarray:
    """Deformed marker positions for vertex positions ``x``."""
    return np.einsum("ni,nij->nj", markers.bary, np.asarray(x)[markers.tri])


def marker_displacements(markers: MarkerSet, trajectory, plane: SensorPlane, reference=None):
    """In-plane displacement of every marker in every frame.

    ``trajectory`` is a sequence of vertex position arrays. Displacements
    are measured from the rest positions, or from ``reference`` positions
    when given. Returns ``(disp (frames, n, 2), mean_length (frames,))``.
    """
    ref = markers.rest if reference is None else np.asarray(reference)
    basis = np.stack([plane.u, plane.v], axis=1)
    disp = np.array([(marker_positions(markers, x) - ref) @ basis for x in trajectory]).reshape(-1, len(markers), 2)
    return disp, np.linalg.norm(disp, axis=2).mean(axis=1)


def write_marker_csv(path, markers: MarkerSet, trajectory, plane: SensorPlane) -> None:
    """Rows of frame, marker_id, x, y, z, u, v (positions and in-plane displacement, m)."""
    disp, _ = marker_displacements(markers, trajectory, plane)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "marker_id", "x", "y", "z", "u", "v"])
        for f, x in enumerate(trajectory):
            pos = marker_positions(markers, x)
            for m in range(len(markers)):
                w.writerow([f, m, *(repr(float(c)) for c in pos[m]), repr(float(disp[f, m, 0])),
                            repr(float(disp[f, m, 1]))])
