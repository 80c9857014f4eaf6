"""Squared distances between contact primitives, with exact derivatives.

Each pair is first classified by which features (vertex, edge, face) hold
the closest points. Inside a region the squared distance is the minimum
over the region's free parameters ``s`` of ``|r(x, s)|^2``, where the
residual ``r = sum_i c_i(s) x_i`` has coefficients affine in ``s``. The
gradient follows from the envelope theorem and the Hessian from the
Schur complement of the joint (x, s) Hessian, so one evaluator serves all
sixteen region types.

Points of a pair are ordered (p, t0, t1, t2) for point-triangle and
(a0, a1, b0, b1) for edge-edge.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np


class DegenerateGeometryError(ValueError):
    pass


class PTRegion(IntEnum):
    V0 = 0
    V1 = 1
    V2 = 2
    E01 = 3
    E12 = 4
    E20 = 5
    FACE = 6


class EERegion(IntEnum):
    A0B0 = 0
    A0B1 = 1
    A1B0 = 2
    A1B1 = 3
    A0_B = 4
    A1_B = 5
    B0_A = 6
    B1_A = 7
    INTERIOR = 8


PARALLEL_TOL = 1e-12
DEGENERATE_AREA = 1e-14

# Residual coefficients per region: c0 (4,) and C (4, k).
_PT_COEFF = {
    PTRegion.V0: ([1, -1, 0, 0], []),
    PTRegion.V1: ([1, 0, -1, 0], []),
    PTRegion.V2: ([1, 0, 0, -1], []),
    PTRegion.E01: ([1, -1, 0, 0], [[0, 1, -1, 0]]),
    PTRegion.E12: ([1, 0, -1, 0], [[0, 0, 1, -1]]),
    PTRegion.E20: ([1, 0, 0, -1], [[0, -1, 0, 1]]),
    PTRegion.FACE: ([1, -1, 0, 0], [[0, 1, -1, 0], [0, 1, 0, -1]]),
}
_EE_COEFF = {
    EERegion.A0B0: ([1, 0, -1, 0], []),
    EERegion.A0B1: ([1, 0, 0, -1], []),
    EERegion.A1B0: ([0, 1, -1, 0], []),
    EERegion.A1B1: ([0, 1, 0, -1], []),
    EERegion.A0_B: ([1, 0, -1, 0], [[0, 0, 1, -1]]),
    EERegion.A1_B: ([0, 1, -1, 0], [[0, 0, 1, -1]]),
    EERegion.B0_A: ([1, 0, -1, 0], [[-1, 1, 0, 0]]),
    EERegion.B1_A: ([1, 0, 0, -1], [[-1, 1, 0, 0]]),
    EERegion.INTERIOR: ([1, 0, -1, 0], [[-1, 1, 0, 0], [0, 0, 1, -1]]),
}
# Region seen from the swapped pair (b, a).
_EE_SWAP = np.array([0, 2, 1, 3, 6, 7, 4, 5, 8])


def _tables(coeff, n):
    c0 = np.zeros((n, 4))
    cmat = np.zeros((n, 4, 2))
    k = np.zeros(n, dtype=np.int64)
    for reg, (a, b) in coeff.items():
        c0[reg] = a
        k[reg] = len(b)
        for j, col in enumerate(b):
            cmat[reg, :, j] = col
    return c0, cmat, k


_PT_C0, _PT_C, _PT_K = _tables(_PT_COEFF, 7)
_EE_C0, _EE_C, _EE_K = _tables(_EE_COEFF, 9)


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def classify_point_triangle(X: np.ndarray) -> np.ndarray:
    """Closest-feature region for each (p, t0, t1, t2) row of ``X`` (n, 4, 3)."""
    p, a, b, c = X[:, 0], X[:, 1], X[:, 2], X[:, 3]
    ab, ac = b - a, c - a
    ap, bp, cp = p - a, p - b, p - c
    d1, d2 = _dot(ab, ap), _dot(ac, ap)
    d3, d4 = _dot(ab, bp), _dot(ac, bp)
    d5, d6 = _dot(ab, cp), _dot(ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4
    conds = [
        (d1 <= 0) & (d2 <= 0),
        (d3 >= 0) & (d4 <= d3),
        (vc <= 0) & (d1 >= 0) & (d3 <= 0),
        (d6 >= 0) & (d5 <= d6),
        (vb <= 0) & (d2 >= 0) & (d6 <= 0),
        (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0),
    ]
    choices = [PTRegion.V0, PTRegion.V1, PTRegion.E01, PTRegion.V2, PTRegion.E20, PTRegion.E12]
    return np.select(conds, [int(r) for r in choices], default=int(PTRegion.FACE))


def _point_segment_region(p, a, b):
    """0: endpoint a, 1: endpoint b, 2: interior; plus squared distance."""
    e = b - a
    t = np.clip(_dot(p - a, e) / _dot(e, e), 0.0, 1.0)
    q = a + t[:, None] * e
    reg = np.where(t <= 0.0, 0, np.where(t >= 1.0, 1, 2))
    return reg, _dot(p - q, p - q)


def classify_edge_edge(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closest-feature region and near-parallel flag for (a0, a1, b0, b1) rows."""
    a0, a1, b0, b1 = X[:, 0], X[:, 1], X[:, 2], X[:, 3]
    u, v, w = a1 - a0, b1 - b0, a0 - b0
    a, b, c = _dot(u, u), _dot(u, v), _dot(v, v)
    d, e = _dot(u, w), _dot(v, w)
    cr = np.cross(u, v)
    parallel = _dot(cr, cr) < PARALLEL_TOL * a * c

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = a * c - b * b
        s = np.where(parallel, 0.0, np.clip((b * e - c * d) / denom, 0.0, 1.0))
        t = (b * s + e) / c
        low, high = t < 0.0, t > 1.0
        s = np.where(low, np.clip(-d / a, 0.0, 1.0), np.where(high, np.clip((b - d) / a, 0.0, 1.0), s))
        t = np.clip(t, 0.0, 1.0)
    sk = np.where(s <= 0.0, 0, np.where(s >= 1.0, 1, 2))
    tk = np.where(t <= 0.0, 0, np.where(t >= 1.0, 1, 2))
    table = np.array([[EERegion.A0B0, EERegion.A0B1, EERegion.A0_B],
                      [EERegion.A1B0, EERegion.A1B1, EERegion.A1_B],
                      [EERegion.B0_A, EERegion.B1_A, EERegion.INTERIOR]], dtype=np.int64)
    region = table[sk, tk]

    if parallel.any():
        # fall back to the best endpoint-to-segment feature
        idx = np.flatnonzero(parallel)
        Y = X[idx]
        cand_reg, cand_d = [], []
        for pt, s0, s1, as_ in ((0, 2, 3, (EERegion.A0B0, EERegion.A0B1, EERegion.A0_B)),
                                (1, 2, 3, (EERegion.A1B0, EERegion.A1B1, EERegion.A1_B)),
                                (2, 0, 1, (EERegion.A0B0, EERegion.A1B0, EERegion.B0_A)),
                                (3, 0, 1, (EERegion.A0B1, EERegion.A1B1, EERegion.B1_A))):
            r, dd = _point_segment_region(Y[:, pt], Y[:, s0], Y[:, s1])
            cand_reg.append(np.array(as_, dtype=np.int64)[r])
            cand_d.append(dd)
        best = np.argmin(np.stack(cand_d, axis=1), axis=1)
        region[idx] = np.stack(cand_reg, axis=1)[np.arange(len(idx)), best]
    return region, parallel


def _evaluate(X, c0_all, cmat_all, k_all, region, order: int):
    """Squared distance and (optionally) derivatives for classified pairs.

    order 0: d2 only; 1: also gradient; 2: also Hessian.
    Returns d2 (n,), optimal coefficients c (n, 4), residual r (n, 3),
    gradient (n, 12) and Hessian (n, 12, 12) when requested.
    """
    n = len(X)
    d2 = np.empty(n)
    coef = np.empty((n, 4))
    res = np.empty((n, 3))
    grad = np.empty((n, 12)) if order >= 1 else None
    hess = np.empty((n, 12, 12)) if order >= 2 else None
    kk = k_all[region]
    eye3 = np.eye(3)
    for k in (0, 1, 2):
        idx = np.flatnonzero(kk == k)
        if not len(idx):
            continue
        Y = X[idx]
        reg = region[idx]
        c0 = c0_all[reg]
        C = cmat_all[reg][:, :, :k]
        r0 = np.einsum("ni,nij->nj", c0, Y)
        if k:
            G = np.einsum("nia,nij->naj", C, Y)
            A = np.einsum("naj,nbj->nab", G, G)
            s = np.linalg.solve(A, -np.einsum("naj,nj->na", G, r0)[..., None])[..., 0]
            c = c0 + np.einsum("nia,na->ni", C, s)
        else:
            c = c0
        r = np.einsum("ni,nij->nj", c, Y)
        d2[idx] = _dot(r, r)
        coef[idx] = c
        res[idx] = r
        if order >= 1:
            grad[idx] = (2.0 * c[:, :, None] * r[:, None, :]).reshape(-1, 12)
        if order >= 2:
            H = 2.0 * np.einsum("ni,nj,pq->nipjq", c, c, eye3).reshape(-1, 12, 12)
            if k:
                # mixed block d2f/dx_i ds_a = 2 (C_ia r + c_i G_a)
                Axs = 2.0 * (np.einsum("nia,nj->nija", C, r) + np.einsum("ni,naj->nija", c, G))
                Axs = Axs.reshape(-1, 12, k)
                sol = np.linalg.solve(2.0 * A, np.swapaxes(Axs, 1, 2))
                H = H - Axs @ sol
            hess[idx] = H
    return d2, coef, res, grad, hess


def _check_triangles(X):
    e1, e2 = X[:, 2] - X[:, 1], X[:, 3] - X[:, 1]
    area = 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)
    scale = np.maximum.reduce([_dot(e1, e1), _dot(e2, e2), _dot(X[:, 3] - X[:, 2], X[:, 3] - X[:, 2])])
    bad = np.flatnonzero(area <= DEGENERATE_AREA * scale)
    if len(bad):
        raise DegenerateGeometryError(f"degenerate triangle in pair {bad[0]}")


def point_triangle_batch(X: np.ndarray, order: int = 2, check: bool = True):
    """Vectorised point-triangle evaluation on ``X`` of shape (n, 4, 3).

    Returns ``(d2, region, grad, hess, coef, residual)``.
    """
    X = np.asarray(X, dtype=np.float64).reshape(-1, 4, 3)
    if check and len(X):
        _check_triangles(X)
    region = classify_point_triangle(X)
    d2, coef, res, grad, hess = _evaluate(X, _PT_C0, _PT_C, _PT_K, region, order)
    return d2, region, grad, hess, coef, res


def _canonical_swap(X):
    """True where (b0, b1) sorts before (a0, a1) lexicographically."""
    a = X[:, :2].reshape(-1, 6)
    b = X[:, 2:].reshape(-1, 6)
    diff = a != b
    first = np.argmax(diff, axis=1)
    rows = np.arange(len(X))
    return diff.any(axis=1) & (b[rows, first] < a[rows, first])


def edge_edge_batch(X: np.ndarray, order: int = 2, check: bool = True):
    """Vectorised edge-edge evaluation on ``X`` of shape (n, 4, 3).

    Pairs are evaluated in a canonical order so that swapping the two edges
    reproduces the squared distance bit for bit. Returns
    ``(d2, region, grad, hess, coef, residual, parallel)``.
    """
    X = np.asarray(X, dtype=np.float64).reshape(-1, 4, 3)
    if check and len(X):
        la = _dot(X[:, 1] - X[:, 0], X[:, 1] - X[:, 0])
        lb = _dot(X[:, 3] - X[:, 2], X[:, 3] - X[:, 2])
        bad = np.flatnonzero((la == 0) | (lb == 0))
        if len(bad):
            raise DegenerateGeometryError(f"zero-length edge in pair {bad[0]}")
    swap = _canonical_swap(X)
    perm = np.array([2, 3, 0, 1])
    Xc = np.where(swap[:, None, None], X[:, perm], X)
    region, parallel = classify_edge_edge(Xc)
    d2, coef, res, grad, hess = _evaluate(Xc, _EE_C0, _EE_C, _EE_K, region, order)
    if swap.any():
        region = np.where(swap, _EE_SWAP[region], region)
        coef = np.where(swap[:, None], -coef[:, perm], coef)
        res = np.where(swap[:, None], -res, res)
        if grad is not None:
            g = grad.reshape(-1, 4, 3)
            grad = np.where(swap[:, None], g[:, perm].reshape(-1, 12), grad)
        if hess is not None:
            h = hess.reshape(-1, 4, 3, 4, 3)[:, perm][:, :, :, perm].reshape(-1, 12, 12)
            hess = np.where(swap[:, None, None], h, hess)
    return d2, region, grad, hess, coef, res, parallel


def point_triangle_d2(p, t0, t1, t2):
    """Squared distance from ``p`` to triangle (t0, t1, t2).

    Returns ``(d2, region, gradient (12,), Hessian (12, 12))``.
    """
    X = np.array([p, t0, t1, t2], dtype=np.float64)[None]
    d2, region, g, H, *_ = point_triangle_batch(X)
    return float(d2[0]), PTRegion(int(region[0])), g[0], H[0]


def edge_edge_d2(a0, a1, b0, b1):
    """Squared distance between segments (a0, a1) and (b0, b1).

    Returns ``(d2, region, gradient, Hessian, parallel_flag)``.
    """
    X = np.array([a0, a1, b0, b1], dtype=np.float64)[None]
    d2, region, g, H, _, _, par = edge_edge_batch(X)
    return float(d2[0]), EERegion(int(region[0])), g[0], H[0], bool(par[0])


def pair_d2(x: np.ndarray, pt: np.ndarray, ee: np.ndarray) -> np.ndarray:
    """Squared distances of all PT then EE pairs given as vertex-index rows."""
    out = []
    if len(pt):
        out.append(point_triangle_batch(x[pt], order=0, check=False)[0])
    if len(ee):
        out.append(edge_edge_batch(x[ee], order=0, check=False)[0])
    return np.concatenate(out) if out else np.zeros(0)
