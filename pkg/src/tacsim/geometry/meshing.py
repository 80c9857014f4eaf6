"""Procedural meshes for tests and built-in scenarios.

The gel cylinder is an extruded ring-strip disc. Ring angles are rational
fractions of a full turn, so the disc triangulation has exact 4-fold
symmetry, which the press scenarios rely on.
"""

from __future__ import annotations

import numpy as np

from .mesh import TetMesh, TriMesh, signed_volumes


def _orient(vertices, tets):
    tets = np.array(tets, dtype=np.int64)
    neg = signed_volumes(vertices, tets) < 0
    tets[neg] = tets[neg][:, [0, 2, 1, 3]]
    return tets


def box_tet_mesh(size=(1.0, 1.0, 1.0), cells=(2, 2, 2), origin=(0.0, 0.0, 0.0),
                 density: float = 1.0e3) -> TetMesh:
    """Axis-aligned box, each cell cut into six tets around its main diagonal."""
    nx, ny, nz = cells
    axes = [np.linspace(o, o + s, n + 1) for o, s, n in zip(origin, size, cells)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    vertices = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    i, j, k = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    corner = [vid(i + (c >> 2 & 1), j + (c >> 1 & 1), k + (c & 1)) for c in range(8)]
    # Kuhn subdivision: every path 000 -> 111 along cube edges
    paths = [(4, 6, 7), (4, 5, 7), (2, 6, 7), (2, 3, 7), (1, 5, 7), (1, 3, 7)]
    tets = np.concatenate([np.stack([corner[0], corner[a], corner[b], corner[c]], axis=1)
                           for a, b, c in paths])
    return TetMesh.from_arrays(vertices, _orient(vertices, tets), density)


def _ring_disc(n_rings: int, per_quarter: int, radius: float, grading: float):
    """Points and ccw triangles of a disc made of concentric rings."""
    counts = [1] + [4 * per_quarter * i for i in range(1, n_rings + 1)]
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    pts = [np.zeros((1, 2))]
    for i in range(1, n_rings + 1):
        r = radius * (i / n_rings) ** grading
        ang = 2.0 * np.pi * np.arange(counts[i]) / counts[i]
        pts.append(np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1))
    pts = np.concatenate(pts)

    tris = []
    n1 = counts[1]
    for j in range(n1):
        tris.append((0, 1 + j, 1 + (j + 1) % n1))
    for i in range(1, n_rings):
        ni, no = counts[i], counts[i + 1]
        si, so = starts[i], starts[i + 1]
        j = k = 0
        while j < ni or k < no:
            # compare next angles (j+1)/ni and (k+1)/no exactly
            if k >= no or (j < ni and (j + 1) * no < (k + 1) * ni):
                tris.append((si + j % ni, so + k % no, si + (j + 1) % ni))
                j += 1
            else:
                tris.append((si + j % ni, so + k % no, so + (k + 1) % no))
                k += 1
    tris = np.array(tris, dtype=np.int64)
    a, b, c = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]
    cross = (b - a)[:, 0] * (c - a)[:, 1] - (b - a)[:, 1] * (c - a)[:, 0]
    flip = cross < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return pts, tris


def cylinder_tet_mesh(radius: float = 15e-3, thickness: float = 2e-3, n_rings: int = 10,
                      per_quarter: int = 1, n_layers: int = 2, radial_grading: float = 1.0,
                      layer_grading: float = 1.0, density: float = 1.0e3) -> TetMesh:
    """Cylinder with its base on z = 0 and its front face on z = thickness.

    ``radial_grading`` > 1 concentrates rings near the axis and
    ``layer_grading`` > 1 concentrates layers near the front face.
    """
    pts, tris = _ring_disc(n_rings, per_quarter, radius, radial_grading)
    s = np.arange(n_layers + 1) / n_layers
    zs = thickness * (1.0 - (1.0 - s) ** layer_grading)
    npl = len(pts)
    vertices = np.concatenate([np.column_stack([pts, np.full(npl, z)]) for z in zs])

    srt = np.sort(tris, axis=1)
    a, b, c = srt[:, 0], srt[:, 1], srt[:, 2]
    tets = []
    for layer in range(n_layers):
        lo, hi = layer * npl, (layer + 1) * npl
        # top index exceeds every bottom index, so each side quad is cut
        # through its smallest bottom vertex and neighbours agree
        tets += [np.stack([a + lo, b + lo, c + lo, c + hi], axis=1),
                 np.stack([a + lo, b + lo, c + hi, b + hi], axis=1),
                 np.stack([a + lo, b + hi, c + hi, a + hi], axis=1)]
    tets = np.concatenate(tets)
    return TetMesh.from_arrays(vertices, _orient(vertices, tets), density)


def _close_orientation(vertices, tris) -> TriMesh:
    mesh = TriMesh(vertices, tris)
    if mesh.enclosed_volume() < 0:
        mesh = TriMesh(vertices, tris[:, [0, 2, 1]])
    return mesh


def sphere_cap_mesh(radius: float = 5e-3, cap_height: float = 2e-3, n_rings: int = 12,
                    n_azimuth: int = 32) -> TriMesh:
    """Closed spherical cap with its pole at the origin, bulging toward -z.

    The cap is the part of a sphere of ``radius`` below height
    ``cap_height`` above the pole, closed with a flat top disc.
    """
    if n_azimuth % 4:
        raise ValueError("n_azimuth must be a multiple of 4 to keep 4-fold symmetry")
    theta_max = np.arccos(1.0 - cap_height / radius)
    phi = 2.0 * np.pi * np.arange(n_azimuth) / n_azimuth
    verts = [np.zeros((1, 3))]
    for k in range(1, n_rings + 1):
        th = theta_max * k / n_rings
        verts.append(np.stack([radius * np.sin(th) * np.cos(phi), radius * np.sin(th) * np.sin(phi),
                               np.full(n_azimuth, radius * (1.0 - np.cos(th)))], axis=1))
    verts.append(np.array([[0.0, 0.0, cap_height]]))
    verts = np.concatenate(verts)
    top = len(verts) - 1

    def ring(k, j):
        return 1 + (k - 1) * n_azimuth + j % n_azimuth

    tris = [(0, ring(1, j + 1), ring(1, j)) for j in range(n_azimuth)]
    for k in range(1, n_rings):
        for j in range(n_azimuth):
            tris.append((ring(k, j), ring(k, j + 1), ring(k + 1, j + 1)))
            tris.append((ring(k, j), ring(k + 1, j + 1), ring(k + 1, j)))
    tris += [(top, ring(n_rings, j), ring(n_rings, j + 1)) for j in range(n_azimuth)]
    return _close_orientation(verts, np.array(tris, dtype=np.int64))


def heightfield_stamp_mesh(size: float = 6e-3, height: float = 2e-3, n: int = 24,
                           relief=None) -> TriMesh:
    """Square stamp whose bottom face carries a relief pattern.

    ``relief(x, y)`` returns how far (m, >= 0) the bottom face is recessed
    upward at each point; the lowest points sit at z = 0 and the stamp is
    centred on the z axis.
    """
    g = np.linspace(-size / 2, size / 2, n + 1)
    gx, gy = np.meshgrid(g, g, indexing="ij")
    zb = np.zeros_like(gx) if relief is None else np.asarray(relief(gx, gy), dtype=float)
    if (zb < 0).any() or (zb >= height).any():
        raise ValueError("relief must lie in [0, height)")
    nv = (n + 1) ** 2
    bottom = np.stack([gx.ravel(), gy.ravel(), zb.ravel()], axis=1)
    top = np.stack([gx.ravel(), gy.ravel(), np.full(nv, height)], axis=1)
    verts = np.concatenate([bottom, top])

    def vid(i, j):
        return i * (n + 1) + j

    tris = []
    for i in range(n):
        for j in range(n):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            tris += [(a, c, b), (a, d, c)]
            tris += [(a + nv, b + nv, c + nv), (a + nv, c + nv, d + nv)]
    loop = ([vid(i, 0) for i in range(n)] + [vid(n, j) for j in range(n)]
            + [vid(i, n) for i in range(n, 0, -1)] + [vid(0, j) for j in range(n, 0, -1)])
    for s in range(len(loop)):
        p, q = loop[s], loop[(s + 1) % len(loop)]
        tris += [(p, q, q + nv), (p, q + nv, p + nv)]
    return _close_orientation(verts, np.array(tris, dtype=np.int64))
