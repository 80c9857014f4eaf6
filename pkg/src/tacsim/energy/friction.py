"""Lagged smooth Coulomb friction.

With contact force magnitudes and tangent bases frozen from a previous
configuration, friction becomes the potential
D(x) = sum_k mu lam_k f0(|u_k|), where u_k is the tangential relative
displacement of pair k since the start of the time step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .barrier import active_pairs, barrier_value
from .params import ContactParams


def friction_f1(y, h: float, epsv: float):
    """C1 transition from static to dynamic friction, 1 beyond h*epsv."""
    y = np.asarray(y, dtype=float)
    e = epsv * h
    return np.where(y >= e, 1.0, -y * y / (e * e) + 2.0 * y / e)


def friction_f0(y, h: float, epsv: float):
    """Antiderivative of f1 with f0(h*epsv) = h*epsv."""
    y = np.asarray(y, dtype=float)
    e = epsv * h
    return np.where(y >= e, y, -y**3 / (3.0 * e * e) + y * y / e + e / 3.0)


def _f1_over_y(y, e):
    with np.errstate(divide="ignore"):
        return np.where(y >= e, 1.0 / np.maximum(y, e), -y / (e * e) + 2.0 / e)


@dataclass(frozen=True)
class FrictionLag:
    """Frozen friction data for one time step."""

    idx: np.ndarray       # (n, 4) pair vertices
    coef: np.ndarray      # (n, 4) closest-point coefficients
    basis: np.ndarray     # (n, 3, 2) orthonormal tangent basis
    lam: np.ndarray       # (n,) contact force magnitudes
    anchor: np.ndarray    # (N, 3) positions at the start of the step

    @classmethod
    def empty(cls, anchor):
        return cls(np.zeros((0, 4), dtype=np.int64), np.zeros((0, 4)), np.zeros((0, 3, 2)),
                   np.zeros(0), np.asarray(anchor, dtype=float).copy())

    def __len__(self):
        return len(self.lam)

    def full_basis(self) -> np.ndarray:
        """Per-pair 12x2 map from pair coordinates to tangential displacement."""
        return np.einsum("ni,njk->nijk", self.coef, self.basis).reshape(-1, 12, 2)


def tangent_basis(normal: np.ndarray, hint: np.ndarray | None = None) -> np.ndarray:
    """Orthonormal (n, 3, 2) bases of the planes orthogonal to ``normal``."""
    n = normal / np.linalg.norm(normal, axis=1, keepdims=True)
    if hint is None:
        hint = np.zeros_like(n)
    t1 = hint - np.einsum("ij,ij->i", hint, n)[:, None] * n
    norm = np.linalg.norm(t1, axis=1)
    hint_len = np.linalg.norm(hint, axis=1)
    weak = norm <= 1e-6 * np.maximum(hint_len, 1e-300)
    if weak.any():
        axis = np.eye(3)[np.argmin(np.abs(n[weak]), axis=1)]
        alt = axis - np.einsum("ij,ij->i", axis, n[weak])[:, None] * n[weak]
        t1[weak] = alt
        norm[weak] = np.linalg.norm(alt, axis=1)
    t1 /= norm[:, None]
    t2 = np.cross(n, t1)
    return np.stack([t1, t2], axis=2)


def update_friction_lag(x, pt, ee, params: ContactParams, h: float, anchor) -> FrictionLag:
    """Freeze contact forces and tangent bases of the pairs at ``x``.

    The force magnitude is kappa |d b / d d| = kappa |b'(d2)| 2 d, the norm
    of the barrier gradient with respect to the relative position of the
    two closest points.
    """
    pairs = active_pairs(x, pt, ee, params.dhat, order=0)
    if not len(pairs.d2):
        return FrictionLag.empty(anchor)
    _, db, _ = barrier_value(pairs.d2, params.dhat)
    lam = params.kappa * np.abs(db) * 2.0 * np.sqrt(pairs.d2)
    basis = tangent_basis(pairs.residual, pairs.anchor_dir)
    return FrictionLag(pairs.idx, pairs.coef, basis, lam, np.asarray(anchor, dtype=float).copy())


def friction_energy(x, lag: FrictionLag, params: ContactParams, h: float, order: int = 2):
    """Lagged friction potential.

    Returns ``(value, grad (n, 3), blocks (k, 12, 12), block_indices)``;
    the blocks are positive semidefinite by construction.
    """
    grad = np.zeros_like(x, dtype=float)
    if params.mu == 0 or not len(lag):
        return 0.0, grad, np.zeros((0, 12, 12)), lag.idx[:0]
    e = params.epsv * h
    dx = (x - lag.anchor)[lag.idx].reshape(-1, 12)
    T = lag.full_basis()
    u = np.einsum("nij,ni->nj", T, dx)
    y = np.linalg.norm(u, axis=1)
    scale = params.mu * lag.lam
    value = float(np.sum(scale * friction_f0(y, h, params.epsv)))
    if order < 1:
        return value, grad, None, lag.idx
    f1y = _f1_over_y(y, e)
    gu = (scale * f1y)[:, None] * u
    np.add.at(grad, lag.idx, np.einsum("nij,nj->ni", T, gu).reshape(-1, 4, 3))
    if order < 2:
        return value, grad, None, lag.idx
    with np.errstate(divide="ignore", invalid="ignore"):
        uhat = np.where(y[:, None] > 0, u / y[:, None], 0.0)
    curv = np.where(y >= e, 1.0 / np.maximum(y, e), y / (e * e))
    Hu = scale[:, None, None] * (f1y[:, None, None] * np.eye(2)[None]
                                 - curv[:, None, None] * np.einsum("ni,nj->nij", uhat, uhat))
    H = T @ Hu @ np.swapaxes(T, 1, 2)
    return value, grad, H, lag.idx
