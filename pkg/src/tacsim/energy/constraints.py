"""Augmented Lagrangian terms pinning vertices to target positions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PinConstraints:
    """Vertices ``index`` pulled toward ``target`` with multipliers and a penalty."""

    index: np.ndarray
    target: np.ndarray
    multipliers: np.ndarray
    penalty: float

    @classmethod
    def create(cls, index, target, penalty: float) -> "PinConstraints":
        index = np.asarray(index, dtype=np.int64)
        target = np.asarray(target, dtype=float).reshape(-1, 3)
        return cls(index, target, np.zeros_like(target), float(penalty))

    def residual(self, x) -> np.ndarray:
        return x[self.index] - self.target

    def max_violation(self, x) -> float:
        if not len(self.index):
            return 0.0
        return float(np.linalg.norm(self.residual(x), axis=1).max())

    def update(self, x, growth: float) -> None:
        """First-order multiplier update, then grow the penalty."""
        self.multipliers = self.multipliers - self.penalty * self.residual(x)
        self.penalty *= growth


def augmented_lagrangian_energy(x, index, target, multipliers, penalty: float):
    """sum_c [-lam_c . (x_c - t_c) + penalty/2 |x_c - t_c|^2].

    Returns ``(value, grad (n, 3), diag Hessian (n, 3))``.
    """
    if len(index) and (np.min(index) < 0 or np.max(index) >= len(x)):
        raise IndexError("constraint references a vertex outside the state")
    r = x[index] - target
    value = float(np.sum(-multipliers * r) + 0.5 * penalty * np.sum(r * r))
    grad = np.zeros_like(x, dtype=float)
    grad[index] = -multipliers + penalty * r
    diag = np.zeros_like(x, dtype=float)
    diag[index] = penalty
    return value, grad, diag
