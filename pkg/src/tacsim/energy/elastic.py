"""Stable Neo-Hookean elasticity on linear tetrahedra.

Energy density, with I_C = tr(F^T F) and J = det F,

    psi = mu/2 (I_C - 3) - mu (J - 1) + lam/2 (J - 1)^2,   lam = lambda + mu

which equals the usual (lam/2)(J - alpha)^2 form with alpha = 1 + mu/lam,
shifted by a constant so that the rest state has zero energy. The shift of
lambda keeps small-strain behaviour identical to linear elasticity with
the given Lame parameters. psi stays finite for J <= 0.
"""

from __future__ import annotations

import numpy as np

from ..linalg import spd_project
from .params import MaterialParams


def _cross_matrix(v):
    z = np.zeros(v.shape[:-1])
    return np.stack([np.stack([z, -v[..., 2], v[..., 1]], -1),
                     np.stack([v[..., 2], z, -v[..., 0]], -1),
                     np.stack([-v[..., 1], v[..., 0], z], -1)], -2)


def deformation_gradients(mesh, x: np.ndarray) -> np.ndarray:
    X = x[mesh.tets]
    Ds = (X[:, 1:] - X[:, :1]).transpose(0, 2, 1)
    return Ds @ mesh.inverse_rest_matrices


def _cofactor(F):
    f0, f1, f2 = F[..., 0], F[..., 1], F[..., 2]
    return np.stack([np.cross(f1, f2), np.cross(f2, f0), np.cross(f0, f1)], axis=-1)


def snh_density(F, mu: float, lam: float):
    J = np.linalg.det(F)
    Ic = np.einsum("tij,tij->t", F, F)
    return 0.5 * mu * (Ic - 3.0) - mu * (J - 1.0) + 0.5 * lam * (J - 1.0) ** 2


def snh_stress(F, mu: float, lam: float):
    """First Piola-Kirchhoff stress."""
    J = np.linalg.det(F)
    cof = _cofactor(F)
    return mu * F + (lam * (J - 1.0) - mu)[:, None, None] * cof


def snh_stress_derivative(F, mu: float, lam: float):
    """d vec(P) / d vec(F) with column-major vec, shape (t, 9, 9)."""
    J = np.linalg.det(F)
    g = _cofactor(F).transpose(0, 2, 1).reshape(-1, 9)  # column-major vec
    f0, f1, f2 = _cross_matrix(F[..., 0]), _cross_matrix(F[..., 1]), _cross_matrix(F[..., 2])
    z = np.zeros_like(f0)
    HJ = np.concatenate([
        np.concatenate([z, -f2, f1], axis=2),
        np.concatenate([f2, z, -f0], axis=2),
        np.concatenate([-f1, f0, z], axis=2),
    ], axis=1)
    return (mu * np.eye(9)[None] + lam * np.einsum("ti,tj->tij", g, g)
            + (lam * (J - 1.0) - mu)[:, None, None] * HJ)


def _shape_weights(mesh):
    """w[t, v, q] = d F_pq / d x_{v,p} for the four tet vertices."""
    B = mesh.inverse_rest_matrices
    return np.concatenate([-B.sum(axis=1, keepdims=True), B], axis=1)


def elastic_energy(mesh, x: np.ndarray, material: MaterialParams, order: int = 2,
                   project: bool = True):
    """Total elastic energy sum_t V_t psi(F_t).

    Returns ``(value, grad (n, 3), blocks (t, 12, 12) or None)``; blocks are
    indexed by ``mesh.tets`` in vertex-major order and are projected to
    positive semidefinite when ``project`` is set.
    """
    mu = material.lame_mu
    lam = material.lame_lambda + mu
    F = deformation_gradients(mesh, x)
    vol = mesh.rest_volumes
    value = float(np.sum(vol * snh_density(F, mu, lam)))
    if order < 1:
        return value, None, None
    W = _shape_weights(mesh)
    P = snh_stress(F, mu, lam)
    gt = vol[:, None, None] * np.einsum("tpq,tvq->tvp", P, W)
    grad = np.zeros_like(x, dtype=float)
    np.add.at(grad, mesh.tets, gt)
    if order < 2:
        return value, grad, None
    K = snh_stress_derivative(F, mu, lam)
    if project:
        K = spd_project(K)
    G = np.einsum("tvq,pr->tqpvr", W, np.eye(3)).reshape(-1, 9, 12)  # d vec(F) / d x
    blocks = np.swapaxes(G, 1, 2) @ (K * vol[:, None, None]) @ G
    return value, grad, blocks
