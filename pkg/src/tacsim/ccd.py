"""Conservative-advancement continuous collision detection.

Every candidate pair advances along its linear trajectory by steps that
can never skip past contact: the step is a fraction of the current
distance divided by a bound on the relative motion of any two points of
the pair. A pair stops once its distance falls below ``slack`` times the
starting distance; the time reached before the last advance is its time
of impact. All pairs advance together in vectorised sweeps.
"""

from __future__ import annotations

import numpy as np

from .distances import edge_edge_batch, point_triangle_batch


class IntersectionError(RuntimeError):
    """The starting configuration already has touching primitives."""


MAX_ITERATIONS = 2000


def _motion_bound_pt(dX):
    n = np.linalg.norm(dX, axis=2)
    return n[:, 0] + n[:, 1:].max(axis=1)


def _motion_bound_ee(dX):
    n = np.linalg.norm(dX, axis=2)
    return n[:, :2].max(axis=1) + n[:, 2:].max(axis=1)


def _advance(X0, dX, d2fn, bound_fn, slack, t_end, max_iter):
    n = len(X0)
    toi = np.full(n, np.inf)
    if n == 0:
        return toi
    dX = dX - dX.mean(axis=1, keepdims=True)
    lp = bound_fn(dX)
    d0 = np.sqrt(d2fn(X0))
    bad = np.flatnonzero(~(d0 > 0))
    if len(bad):
        raise IntersectionError(f"pair {bad[0]} already intersects at the start of the motion")
    active = np.flatnonzero(lp > 0)
    gap = slack * d0[active]
    t = np.zeros(len(active))
    step = (1.0 - slack) * d0[active] / lp[active]
    X0a, dXa, lpa = X0[active], dX[active], lp[active]
    for _ in range(max_iter):
        if not len(active):
            break
        trial = t + step
        d = np.sqrt(d2fn(X0a + trial[:, None, None] * dXa))
        hit = (t > 0) & (d < gap)
        toi[active[hit]] = t[hit]
        t = trial
        beyond = t > t_end
        keep = ~hit & ~beyond
        step = 0.9 * d / lpa
        active, gap, t, step = active[keep], gap[keep], t[keep], step[keep]
        X0a, dXa, lpa = X0a[keep], dXa[keep], lpa[keep]
    else:
        # out of iterations: every position reached so far is still safe
        toi[active] = t
    return toi


def ccd_toi(x_start: np.ndarray, x_end: np.ndarray, pt: np.ndarray, ee: np.ndarray,
            slack: float = 0.1, max_iter: int = MAX_ITERATIONS) -> float:
    """Largest safe fraction of the motion ``x_start -> x_end`` for the pairs.

    ``pt`` and ``ee`` are vertex-index rows (n, 4). Returns 1 when no pair
    comes close to contact.
    """
    if not 0.0 < slack < 1.0:
        raise ValueError("slack must lie in (0, 1)")
    x_start = np.asarray(x_start, dtype=np.float64)
    dx = np.asarray(x_end, dtype=np.float64) - x_start
    t_min = 1.0

    def pt_d2(X):
        return point_triangle_batch(X, order=0, check=False)[0]

    def ee_d2(X):
        return edge_edge_batch(X, order=0, check=False)[0]

    for idx, fn, bound in ((pt, pt_d2, _motion_bound_pt), (ee, ee_d2, _motion_bound_ee)):
        if len(idx):
            toi = _advance(x_start[idx], dx[idx], fn, bound, slack, 1.0, max_iter)
            if np.isfinite(toi).any():
                t_min = min(t_min, float(toi.min()))
    return t_min
