from __future__ import annotations

import numpy as np


def compute_xhat(x_t, v_t, h: float, masses, f_ext=None) -> np.ndarray:
    """Predicted positions x_t + h v_t + h^2 M^-1 f_ext."""
    if not h > 0:
        raise ValueError("time step must be positive")
    xhat = np.asarray(x_t, dtype=float) + h * np.asarray(v_t, dtype=float)
    if f_ext is not None:
        xhat = xhat + h * h * np.asarray(f_ext, dtype=float) / np.asarray(masses, dtype=float)[:, None]
    return xhat


def inertia_energy(x, xhat, masses):
    """0.5 (x - xhat)^T M (x - xhat) with its gradient and diagonal Hessian.

    The Hessian is returned per coordinate, shape (n, 3).
    """
    m = np.asarray(masses, dtype=float)[:, None]
    dx = np.asarray(x, dtype=float) - xhat
    g = m * dx
    return 0.5 * float(np.sum(g * dx)), g, np.broadcast_to(m, dx.shape).copy()
