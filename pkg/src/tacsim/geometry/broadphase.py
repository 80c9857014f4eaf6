"""Candidate primitive pairs from axis-aligned bounding box overlap.

Boxes are swept over the start and end positions and padded by half the
margin on each side, so a pair is reported whenever the per-axis gap
between its primitives' boxes is at most ``margin``. Overlaps are found by
hashing the boxes into a uniform grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class ContactSurface:
    """Collision primitives in global vertex numbering.

    ``vertex_body`` labels every global vertex with a body id; pairs inside
    one body are only generated for bodies listed in ``self_contact``.
    """

    vertices: np.ndarray
    edges: np.ndarray
    tris: np.ndarray
    vertex_body: np.ndarray
    self_contact: frozenset = frozenset()


class CandidatePairs(NamedTuple):
    pt: np.ndarray  # (n, 4) point, triangle vertices
    ee: np.ndarray  # (m, 4) edge a, edge b

    def __len__(self):
        return len(self.pt) + len(self.ee)


def _expand_ranges(starts: np.ndarray, counts: np.ndarray) -> np.ndarray:
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    offsets = np.repeat(np.cumsum(counts) - counts, counts)
    return np.arange(total) - offsets + np.repeat(starts, counts)


def _cell_ranges(lo, hi, origin, cell):
    i0 = np.floor((lo - origin) / cell).astype(np.int64)
    i1 = np.floor((hi - origin) / cell).astype(np.int64)
    return i0, i1 - i0 + 1


def _spread(i0, n, dims):
    """Grid keys of every cell touched by each box, with owner ids."""
    counts = n.prod(axis=1)
    owner = np.repeat(np.arange(len(n)), counts)
    local = _expand_ranges(np.zeros(len(n), dtype=np.int64), counts)
    nx, ny = n[owner, 0], n[owner, 1]
    ix = i0[owner, 0] + local % nx
    iy = i0[owner, 1] + (local // nx) % ny
    iz = i0[owner, 2] + local // (nx * ny)
    return ix + dims[0] * (iy + dims[1] * iz), owner


def aabb_overlaps(lo_a, hi_a, lo_b, hi_b) -> tuple[np.ndarray, np.ndarray]:
    """All (i, j) with box a_i and box b_j overlapping (closed boxes).

    Boxes are binned into a uniform grid sized by the median box extent;
    a pair is reported only from the cell holding the larger of its two
    lower corners, so no deduplication is needed.
    """
    na, nb = len(lo_a), len(lo_b)
    empty = np.zeros(0, dtype=np.int64)
    if na == 0 or nb == 0:
        return empty, empty
    lo_all = np.concatenate([lo_a, lo_b])
    hi_all = np.concatenate([hi_a, hi_b])
    origin = lo_all.min(axis=0)
    span = float((hi_all.max(axis=0) - origin).max())
    cell = max(float(np.median((hi_all - lo_all).max(axis=1))), 1e-9 * span, 1e-300)
    dims = np.floor((hi_all.max(axis=0) - origin) / cell).astype(np.int64) + 1
    # Cap the grid so keys stay in int64 and huge swept boxes stay cheap.
    while dims.prod() > 2**40 or (dims.max() > 1 and np.prod(
            np.floor(((hi_all - lo_all) / cell)).max(axis=0) + 2) > 4096):
        cell *= 2.0
        dims = np.floor((hi_all.max(axis=0) - origin) / cell).astype(np.int64) + 1

    a0, an = _cell_ranges(lo_a, hi_a, origin, cell)
    b0, bn = _cell_ranges(lo_b, hi_b, origin, cell)
    ka, oa = _spread(a0, an, dims)
    kb, ob = _spread(b0, bn, dims)
    order = np.argsort(kb, kind="stable")
    kb, ob = kb[order], ob[order]
    s = np.searchsorted(kb, ka, "left")
    e = np.searchsorted(kb, ka, "right")
    cnt = e - s
    ia = np.repeat(oa, cnt)
    key = np.repeat(ka, cnt)
    ib = ob[_expand_ranges(s, cnt)]

    keep = np.all((lo_a[ia] <= hi_b[ib]) & (lo_b[ib] <= hi_a[ia]), axis=1)
    ia, ib, key = ia[keep], ib[keep], key[keep]
    corner = np.floor((np.maximum(lo_a[ia], lo_b[ib]) - origin) / cell).astype(np.int64)
    corner = np.minimum(corner, dims - 1)
    home = corner[:, 0] + dims[0] * (corner[:, 1] + dims[1] * corner[:, 2])
    keep = home == key
    ia, ib = ia[keep], ib[keep]
    order = np.lexsort((ib, ia))
    return ia[order], ib[order]


def _boxes(x0, x1, prims, pad):
    lo = x0[prims].min(axis=1)
    hi = x0[prims].max(axis=1)
    if x1 is not None:
        lo = np.minimum(lo, x1[prims].min(axis=1))
        hi = np.maximum(hi, x1[prims].max(axis=1))
    if np.ndim(pad):
        pad = pad[prims].max(axis=1)[:, None]
    return lo - pad, hi + pad


def _allowed(surface: ContactSurface, body_a, body_b):
    same = body_a == body_b
    if not same.any():
        return ~same
    selfish = np.isin(body_a, np.fromiter(surface.self_contact, dtype=np.int64, count=len(surface.self_contact)))
    return ~same | selfish


def broadphase_pairs(x: np.ndarray, surface: ContactSurface, margin: float,
                     x_end: np.ndarray | None = None, motion_bound=0.0) -> CandidatePairs:
    """Point-triangle and edge-edge candidates whose padded swept boxes overlap.

    ``motion_bound`` (scalar or per global vertex) further pads the boxes of
    primitives touching each vertex. Pairs sharing a vertex are excluded.
    """
    x = np.asarray(x)
    pad = np.asarray(motion_bound, dtype=float)
    pad = 0.5 * margin + pad

    verts = surface.vertices[:, None]
    lo_p, hi_p = _boxes(x, x_end, verts, pad)
    lo_t, hi_t = _boxes(x, x_end, surface.tris, pad)
    ip, it = aabb_overlaps(lo_p, hi_p, lo_t, hi_t)
    p = surface.vertices[ip]
    tri = surface.tris[it]
    ok = (p != tri[:, 0]) & (p != tri[:, 1]) & (p != tri[:, 2])
    ok &= _allowed(surface, surface.vertex_body[p], surface.vertex_body[tri[:, 0]])
    pt = np.column_stack([p[ok], tri[ok]])

    lo_e, hi_e = _boxes(x, x_end, surface.edges, pad)
    ia, ib = aabb_overlaps(lo_e, hi_e, lo_e, hi_e)
    keep = ia < ib
    ea, eb = surface.edges[ia[keep]], surface.edges[ib[keep]]
    ok = (ea[:, :1] != eb).all(axis=1) & (ea[:, 1:] != eb).all(axis=1)
    ok &= _allowed(surface, surface.vertex_body[ea[:, 0]], surface.vertex_body[eb[:, 0]])
    ee = np.column_stack([ea[ok], eb[ok]])
    return CandidatePairs(pt.astype(np.int64).reshape(-1, 4), ee.astype(np.int64).reshape(-1, 4))
