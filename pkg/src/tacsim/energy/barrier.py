"""Log barrier on squared primitive distances.

With D = dhat^2 the barrier is b(d2) = -(d2 - D)^2 ln(d2 / D) for
0 < d2 < D and zero beyond; value and first two derivatives vanish at
d2 = D.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..ccd import IntersectionError
from ..distances import edge_edge_batch, point_triangle_batch
from ..linalg import spd_project
from .params import ContactParams


def barrier_value(d2, dhat: float):
    """Barrier and its first two derivatives with respect to d2."""
    d2 = np.asarray(d2, dtype=np.float64)
    if np.any(d2 <= 0):
        raise IntersectionError("barrier evaluated at non-positive distance")
    D = dhat * dhat
    inside = d2 < D
    s = np.where(inside, d2, D)
    diff = s - D
    log = np.log(s / D)
    b = np.where(inside, -diff * diff * log, 0.0)
    db = np.where(inside, -2.0 * diff * log - diff * diff / s, 0.0)
    ddb = np.where(inside, -2.0 * log - 4.0 * diff / s + diff * diff / (s * s), 0.0)
    if b.ndim == 0:
        return float(b), float(db), float(ddb)
    return b, db, ddb


class ActivePairs(NamedTuple):
    """Pairs closer than dhat with their distance data."""

    idx: np.ndarray        # (n, 4) vertex indices
    d2: np.ndarray         # (n,)
    grad: np.ndarray       # (n, 12) of d2
    hess: np.ndarray       # (n, 12, 12) of d2, or None
    coef: np.ndarray       # (n, 4) closest-point coefficients
    residual: np.ndarray   # (n, 3) closest-point difference
    anchor_dir: np.ndarray  # (n, 3) feature direction used to seed tangents

    @classmethod
    def empty(cls):
        z = np.zeros
        return cls(z((0, 4), dtype=np.int64), z(0), z((0, 12)), z((0, 12, 12)), z((0, 4)), z((0, 3)), z((0, 3)))


def _feature_direction(X, coef, is_pt):
    """An in-feature direction: first edge of the closest feature."""
    if is_pt:
        return X[:, 2] - X[:, 1]
    return X[:, 1] - X[:, 0]


def active_pairs(x, pt, ee, dhat: float, order: int = 2) -> ActivePairs:
    """Evaluate candidate pairs and keep those with d2 < dhat^2."""
    D = dhat * dhat
    parts = []
    for idx, is_pt in ((pt, True), (ee, False)):
        if not len(idx):
            continue
        X = x[idx]
        out = point_triangle_batch(X, order=order, check=False) if is_pt else \
            edge_edge_batch(X, order=order, check=False)
        d2, _, g, H, coef, res = out[:6]
        if np.any(d2 <= 0):
            raise IntersectionError("contact pair at zero distance")
        keep = d2 < D
        parts.append(ActivePairs(idx[keep], d2[keep], None if g is None else g[keep], None if H is None else H[keep],
                                 coef[keep], res[keep], _feature_direction(X[keep], coef[keep], is_pt)))
    if not parts:
        return ActivePairs.empty()
    if len(parts) == 1:
        return parts[0]
    a, b = parts
    return ActivePairs(*(None if u is None else np.concatenate([u, v]) for u, v in zip(a, b)))


def barrier_energy(x, pt, ee, params: ContactParams, order: int = 2, project: bool = True,
                   pairs: ActivePairs | None = None):
    """kappa * sum b(d2_k) over candidate pairs within dhat.

    Returns ``(value, grad (n, 3), blocks (k, 12, 12), block_indices (k, 4))``.
    """
    if pairs is None:
        pairs = active_pairs(x, pt, ee, params.dhat, order=order)
    grad = np.zeros_like(x, dtype=float)
    if not len(pairs.d2):
        return 0.0, grad, np.zeros((0, 12, 12)), pairs.idx
    b, db, ddb = barrier_value(pairs.d2, params.dhat)
    value = params.kappa * float(np.sum(b))
    if order < 1:
        return value, grad, None, pairs.idx
    gk = (params.kappa * db)[:, None] * pairs.grad
    np.add.at(grad, pairs.idx, gk.reshape(-1, 4, 3))
    if order < 2:
        return value, grad, None, pairs.idx
    H = params.kappa * (ddb[:, None, None] * np.einsum("ni,nj->nij", pairs.grad, pairs.grad)
                        + db[:, None, None] * pairs.hess)
    if project:
        H = spd_project(H)
    return value, grad, H, pairs.idx
