"""Height maps of the deformed elastomer front surface."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SensorPlane:
    """Pixel grid on the sensor base plane.

    Pixel ``(i, j)`` is centred at
    ``origin + (j + 0.5 - width/2) * pixel_size * u + (i + 0.5 - height/2) * pixel_size * v``
    and heights are measured along ``normal = u x v``.
    """

    origin: np.ndarray
    u: np.ndarray
    v: np.ndarray
    pixel_size: float
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("sensor plane needs at least one pixel")
        if not self.pixel_size > 0:
            raise ValueError("pixel_size must be positive")
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if abs(np.linalg.norm(u) - 1) > 1e-9 or abs(np.linalg.norm(v) - 1) > 1e-9 or abs(u @ v) > 1e-9:
            raise ValueError("plane axes must be orthonormal")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def centered(cls, center, extent: float, resolution: int, base_z: float = 0.0) -> "SensorPlane":
        """Square grid over ``extent`` metres, axes along x and y."""
        origin = np.array([center[0], center[1], base_z], dtype=float)
        return cls(origin, np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), extent / resolution,
                   resolution, resolution)

    @property
    def normal(self) -> np.ndarray:
        return np.cross(self.u, self.v)

    def to_plane(self, pts) -> np.ndarray:
        """(n, 3) points -> (n, 3) coordinates (u, v, height)."""
        d = np.asarray(pts, dtype=float) - self.origin
        return np.stack([d @ self.u, d @ self.v, d @ self.normal], axis=-1)

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """In-plane coordinates of pixel centres, each (height, width)."""
        cu = (np.arange(self.width) + 0.5 - self.width / 2) * self.pixel_size
        cv = (np.arange(self.height) + 0.5 - self.height / 2) * self.pixel_size
        return np.meshgrid(cu, cv)

    def to_dict(self) -> dict:
        return {"origin": self.origin.tolist(), "u": self.u.tolist(), "v": self.v.tolist(),
                "pixel_size": self.pixel_size, "width": self.width, "height": self.height}


@dataclass(frozen=True)
class HeightMap:
    values: np.ndarray  # (height, width) metres above the base plane, 0 outside the mask
    mask: np.ndarray    # (height, width) bool
    plane: SensorPlane


def front_triangles(vertices, tris, normal=(0.0, 0.0, 1.0), cos_min: float = 0.5) -> np.ndarray:
    """Surface triangles whose outward normal faces along ``normal``."""
    x = np.asarray(vertices)[tris]
    n = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    return np.asarray(tris)[n @ np.asarray(normal, dtype=float) > cos_min]


def rasterize_heightmap(vertices, tris, plane: SensorPlane, select: str = "top") -> HeightMap:
    """Height of the topmost (or bottommost) triangle covering each pixel centre.

    Heights are interpolated barycentrically inside each triangle's
    projection; pixels covered by no triangle are masked out.
    """
    if select not in ("top", "bottom"):
        raise ValueError("select must be 'top' or 'bottom'")
    q = plane.to_plane(vertices)[np.asarray(tris)]
    H, W, ps = plane.height, plane.width, plane.pixel_size
    fill = -np.inf if select == "top" else np.inf
    out = np.full((H, W), fill)
    # pixel index of coordinate c along an axis: c / ps + n/2 - 0.5
    col = q[..., 0] / ps + W / 2 - 0.5
    row = q[..., 1] / ps + H / 2 - 0.5
    j0 = np.clip(np.ceil(col.min(axis=1) - 1e-9), 0, W).astype(int)
    j1 = np.clip(np.floor(col.max(axis=1) + 1e-9), -1, W - 1).astype(int)
    i0 = np.clip(np.ceil(row.min(axis=1) - 1e-9), 0, H).astype(int)
    i1 = np.clip(np.floor(row.max(axis=1) + 1e-9), -1, H - 1).astype(int)
    for k in np.flatnonzero((j1 >= j0) & (i1 >= i0)):
        jj, ii = np.meshgrid(np.arange(j0[k], j1[k] + 1), np.arange(i0[k], i1[k] + 1))
        a, b, c = np.stack([col[k], row[k]], axis=1)
        det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
        if det == 0:
            continue
        l1 = ((jj - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (ii - a[1])) / det
        l2 = ((b[0] - a[0]) * (ii - a[1]) - (jj - a[0]) * (b[1] - a[1])) / det
        l0 = 1.0 - l1 - l2
        tol = -1e-9
        inside = (l0 >= tol) & (l1 >= tol) & (l2 >= tol)
        if not inside.any():
            continue
        h = l0 * q[k, 0, 2] + l1 * q[k, 1, 2] + l2 * q[k, 2, 2]
        ii, jj, h = ii[inside], jj[inside], h[inside]
        cur = out[ii, jj]
        out[ii, jj] = np.maximum(cur, h) if select == "top" else np.minimum(cur, h)
    mask = np.isfinite(out)
    return HeightMap(np.where(mask, out, 0.0), mask, plane)
