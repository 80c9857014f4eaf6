from __future__ import annotations

import numpy as np

SPD_REGULARIZATION = 1e-12


def spd_project(H: np.ndarray, reg: float = SPD_REGULARIZATION) -> np.ndarray:
    """Clamp negative eigenvalues of symmetric matrices to zero.

    Works on a single matrix or a stack (..., n, n). Blocks that are already
    positive semidefinite are returned unchanged; the others get their
    negative eigenvalues replaced by ``reg`` times the spectral scale.
    """
    H = np.asarray(H, dtype=np.float64)
    single = H.ndim == 2
    Hs = H[None] if single else H
    Hs = 0.5 * (Hs + np.swapaxes(Hs, -1, -2))
    out = Hs.copy()
    if Hs.shape[0]:
        w, V = np.linalg.eigh(Hs)
        neg = (w < 0).any(axis=-1)
        if neg.any():
            wn, Vn = w[neg], V[neg]
            scale = np.abs(wn).max(axis=-1, keepdims=True)
            wn = np.where(wn < 0, reg * scale, wn)
            out[neg] = np.einsum("bij,bj,bkj->bik", Vn, wn, Vn)
    return out[0] if single else out
