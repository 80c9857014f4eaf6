"""Implicit time stepping by projected Newton with CCD-filtered line search.

Each step minimises

    E(x) = 1/2 |x - xhat|_M^2 + h^2 Phi(x) + B(x) + D(x) + A(x)

where Phi is the elastic energy, B the contact barrier, D the lagged
friction potential and A the augmented Lagrangian terms that glue the
elastomer base and drive the kinematic indenter to its scripted pose.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .ccd import IntersectionError, ccd_toi
from .distances import pair_d2
from .energy import (
    ContactParams, FrictionLag, MaterialParams, PinConstraints, barrier_energy, compute_xhat,
    elastic_energy, friction_energy, update_friction_lag,
)
from .energy.barrier import active_pairs
from .geometry.broadphase import ContactSurface, broadphase_pairs
from .geometry.mesh import TetMesh, TriMesh, signed_volumes
from .linalg import spd_project

logger = logging.getLogger(__name__)
diag_log = logging.getLogger("tacsim.diagnostics")

__all__ = [
    "LineSearchError", "Model", "assemble_hessian", "SimState", "SolverConfig", "SolverError", "StepEnergy",
    "filtered_line_search", "minimize", "spd_project", "step",
]


class SolverError(RuntimeError):
    """A time step could not be completed."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}


class LineSearchError(SolverError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    h: float = 0.01
    newton_tol: float | None = None
    max_newton_iters: int = 200
    line_search_shrink: float = 0.5
    al_penalty_init: float | None = None
    al_penalty_growth: float = 2.0
    al_tol: float = 1e-6
    al_max_iters: int = 10
    friction_lag_max_iters: int = 4
    friction_lag_tol: float = 1e-6
    ccd_slack: float = 0.1
    gravity: tuple = (0.0, 0.0, 0.0)
    direct_max_dofs: int = 300_000

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not 0.0 < self.line_search_shrink < 1.0:
            raise ValueError("line_search_shrink must lie in (0, 1)")
        for name in ("al_tol", "friction_lag_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.newton_tol is not None and not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.al_penalty_init is not None and not self.al_penalty_init > 0:
            raise ValueError("al_penalty_init must be positive")


@dataclass(frozen=True)
class SimState:
    """Positions and velocities of every simulated vertex.

    Rows ``[0, n_gel)`` belong to the elastomer; the remaining rows are the
    indenter surface vertices, whose nominal placement is ``indenter_pose``.
    """

    x: np.ndarray
    v: np.ndarray
    indenter_pose: np.ndarray
    time: float = 0.0
    step: int = 0
    diagnostics: dict = field(default_factory=dict, compare=False)


def _pose_apply(pose, pts):
    return pts @ pose[:3, :3].T + pose[:3, 3]


class Model:
    """Elastomer, optional rigid indenter and their collision surface."""

    def __init__(self, gel: TetMesh, material: MaterialParams, contact: ContactParams,
                 indenter: TriMesh | None = None, indenter_density: float = 1.0e3,
                 glued: np.ndarray | None = None):
        self.gel = gel.with_density(material.density) if gel.density != material.density else gel
        self.material = material
        self.contact = contact
        self.indenter = indenter
        self.n_gel = gel.n_vertices
        n_ind = 0 if indenter is None else len(indenter.vertices)
        self.n_total = self.n_gel + n_ind
        self.indenter_ids = np.arange(self.n_gel, self.n_total)
        self.glued = np.zeros(0, dtype=np.int64) if glued is None else np.asarray(glued, dtype=np.int64)

        masses = [self.gel.vertex_masses]
        if indenter is not None:
            vol = abs(indenter.enclosed_volume())
            masses.append(np.full(n_ind, indenter_density * vol / n_ind))
        self.masses = np.concatenate(masses)

        body = np.zeros(self.n_total, dtype=np.int64)
        body[self.n_gel:] = 1
        tris, edges = [self.gel.surface_tris], [self.gel.surface_edges]
        if indenter is not None:
            tris.append(indenter.triangles + self.n_gel)
            edges.append(indenter.edges + self.n_gel)
        tris = np.concatenate(tris)
        self.surface = ContactSurface(
            vertices=np.unique(tris), edges=np.concatenate(edges), tris=tris, vertex_body=body,
            self_contact=frozenset({0}) if contact.self_contact else frozenset(),
        )
        edges = self.gel.vertices[self.gel.surface_edges]
        self.char_length = float(np.linalg.norm(edges[:, 1] - edges[:, 0], axis=1).mean())

    def indenter_positions(self, pose) -> np.ndarray:
        if self.indenter is None:
            return np.zeros((0, 3))
        return _pose_apply(pose, self.indenter.vertices)

    def initial_state(self, pose=None) -> SimState:
        pose = np.eye(4) if pose is None else np.asarray(pose, dtype=float)
        x = np.concatenate([self.gel.vertices, self.indenter_positions(pose)])
        return SimState(x=x, v=np.zeros_like(x), indenter_pose=pose.copy())

    def candidates(self, x, margin=None, x_end=None):
        margin = self.contact.dhat if margin is None else margin
        return broadphase_pairs(x, self.surface, margin, x_end=x_end)

    def min_distance(self, x, margin: float | None = None) -> float:
        """Smallest non-adjacent primitive distance; inf when none within margin."""
        margin = 10.0 * self.contact.dhat if margin is None else margin
        c = self.candidates(x, margin)
        d2 = pair_d2(x, c.pt, c.ee)
        return float(np.sqrt(d2.min())) if len(d2) else float("inf")

    def min_volume(self, x) -> float:
        return float(signed_volumes(x[:self.n_gel], self.gel.tets).min())

    def default_penalty(self, h: float) -> float:
        return 1e3 * h * h * self.material.youngs_modulus * self.char_length


def _block_rows(idx):
    rows = (3 * idx[:, :, None] + np.arange(3)).reshape(len(idx), -1)
    k = rows.shape[1]
    return np.repeat(rows, k, axis=1).ravel(), np.tile(rows, (1, k)).ravel()


class StepEnergy:
    """Total incremental potential of one time step."""

    def __init__(self, model: Model, xhat, h: float, lag: FrictionLag | None,
                 pins: PinConstraints | None, project: bool = True):
        self.model = model
        self.project = project
        self.xhat = xhat
        self.h = h
        self.lag = lag
        self.pins = pins

    def terms(self, x, order: int = 0, only=None):
        """Each energy term as ``name -> (value, grad, blocks, block_idx, diag)``.

        ``only`` restricts evaluation to the named terms.
        """
        m = self.model
        want = (lambda name: True) if only is None else (lambda name: name in only)
        out = {}
        if want("inertia"):
            dx = x - self.xhat
            mm = m.masses[:, None]
            out["inertia"] = (0.5 * float(np.sum(mm * dx * dx)), mm * dx, None, None,
                              np.broadcast_to(mm, x.shape))
        if want("elastic"):
            h2 = self.h * self.h
            ev, eg, eb = elastic_energy(m.gel, x[:m.n_gel], m.material, order=order, project=self.project)
            if eg is not None:
                g = np.zeros_like(x)
                g[:m.n_gel] = h2 * eg
                eg = g
            out["elastic"] = (h2 * ev, eg, None if eb is None else h2 * eb, m.gel.tets, None)
        if want("barrier"):
            c = m.candidates(x)
            bv, bg, bb, bidx = barrier_energy(x, c.pt, c.ee, m.contact, order=order, project=self.project)
            out["barrier"] = (bv, bg, bb, bidx, None)
        if want("friction") and self.lag is not None and len(self.lag):
            fv, fg, fb, fidx = friction_energy(x, self.lag, m.contact, self.h, order=order)
            out["friction"] = (fv, fg, fb, fidx, None)
        if want("constraints") and self.pins is not None and len(self.pins.index):
            p = self.pins
            r = x[p.index] - p.target
            g = np.zeros_like(x)
            g[p.index] = -p.multipliers + p.penalty * r
            d = np.zeros_like(x)
            d[p.index] = p.penalty
            out["constraints"] = (float(np.sum(-p.multipliers * r) + 0.5 * p.penalty * np.sum(r * r)),
                                  g, None, None, d)
        return out

    def value(self, x) -> float:
        return float(sum(t[0] for t in self.terms(x, 0).values()))

    def evaluate(self, x):
        """Value, gradient (flat) and projected sparse Hessian."""
        terms = self.terms(x, 2)
        value = float(sum(t[0] for t in terms.values()))
        grad = np.zeros(x.size)
        for t in terms.values():
            grad += t[1].ravel()
        return value, grad, assemble_hessian(x.size, terms.values())


def assemble_hessian(n: int, terms) -> sp.csc_matrix:
    """Sum per-element 12x12 blocks and diagonal terms into a sparse matrix."""
    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    for _, _, blocks, bidx, d in terms:
        if d is not None:
            diag += np.asarray(d).ravel()
        if blocks is not None and len(blocks):
            i, j = _block_rows(bidx)
            rows.append(i)
            cols.append(j)
            vals.append(blocks.ravel())
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n)).tocsc()


class CCDContext:
    """Feasibility checks for candidate Newton steps."""

    def __init__(self, model: Model, slack: float = 0.1):
        self.model = model
        self.slack = slack

    def max_step(self, x, dx) -> float:
        x_end = x + dx
        c = self.model.candidates(x, margin=1e-3 * self.model.contact.dhat, x_end=x_end)
        if not len(c):
            return 1.0
        return ccd_toi(x, x_end, c.pt, c.ee, self.slack)

    def inversion_free(self, x) -> bool:
        m = self.model
        return bool((signed_volumes(x[:m.n_gel], m.gel.tets) > 0).all())


def _solve(H, rhs, direct_max_dofs):
    if H.shape[0] <= direct_max_dofs:
        return spla.spsolve(H, rhs, permc_spec="MMD_AT_PLUS_A")
    d = H.diagonal()
    M = sp.diags(1.0 / d)
    sol, info = spla.cg(H, rhs, M=M, rtol=1e-10, maxiter=10 * H.shape[0])
    if info:
        raise SolverError(f"conjugate gradient did not converge (info={info})")
    return sol


def filtered_line_search(x, direction, energy: StepEnergy, ccd: CCDContext, shrink: float = 0.5,
                         e0: float | None = None, grad=None, max_halvings: int = 64):
    """Backtracking from the CCD-limited step until the energy does not increase.

    Returns ``(alpha, new_energy)``.
    """
    if not np.any(direction):
        raise ValueError("zero search direction")
    if grad is not None and float(np.dot(grad.ravel(), direction.ravel())) >= 0:
        raise ValueError("search direction is not a descent direction")
    if e0 is None:
        e0 = energy.value(x)
    alpha = min(1.0, ccd.max_step(x, direction))
    scale = max(float(np.ptp(x, axis=0).max()), 1e-300)
    step_norm = float(np.abs(direction).max())
    for _ in range(max_halvings + 1):
        if alpha * step_norm < 1e-12 * scale:
            break
        xt = x + alpha * direction
        if ccd.inversion_free(xt):
            e = energy.value(xt)
            if e <= e0:
                return alpha, e
        alpha *= shrink
    raise LineSearchError("line search found no decrease",
                          dump={"alpha": alpha, "energy": e0, "step_norm": step_norm})


@dataclass
class MinimizeResult:
    x: np.ndarray
    iterations: int
    converged: bool
    residual: float
    energies: list


def minimize(energy: StepEnergy, x0, ccd: CCDContext, config: SolverConfig,
             tol: float | None = None) -> MinimizeResult:
    """Projected Newton on ``energy`` starting from the feasible ``x0``."""
    tol = config.newton_tol if tol is None else tol
    if tol is None:
        tol = 1e-2 * energy.model.char_length
    x = np.array(x0, dtype=float)
    shape = x.shape
    e, g, H = energy.evaluate(x)
    energies = [e]
    residual = np.inf
    for it in range(config.max_newton_iters):
        dx = _solve(H, -g, config.direct_max_dofs).reshape(shape)
        residual = float(np.abs(dx).max()) / config.h
        if residual < tol:
            return MinimizeResult(x, it, True, residual, energies)
        try:
            alpha, e_new = filtered_line_search(x, dx, energy, ccd, config.line_search_shrink, e0=e)
        except LineSearchError:
            if residual < 10.0 * tol:
                return MinimizeResult(x, it, True, residual, energies)
            raise
        logger.debug("newton %d: residual %.3e alpha %.3e energy %.9e", it, residual, alpha, e_new)
        x = x + alpha * dx
        e, g, H = energy.evaluate(x)
        energies.append(e)
    logger.warning("Newton stopped after %d iterations (residual %.3e)", config.max_newton_iters, residual)
    return MinimizeResult(x, config.max_newton_iters, False, residual, energies)


def _pins(model: Model, pose, penalty: float) -> PinConstraints:
    idx = np.concatenate([model.glued, model.indenter_ids])
    target = np.concatenate([model.gel.vertices[model.glued], model.indenter_positions(pose)])
    return PinConstraints.create(idx, target, penalty)


def step(model: Model, state: SimState, target_pose, config: SolverConfig) -> SimState:
    """Advance one implicit Euler step toward the scripted indenter pose."""
    h = config.h
    target_pose = np.asarray(target_pose, dtype=float)
    x_t, v_t = state.x, state.v
    f_ext = model.masses[:, None] * np.asarray(config.gravity, dtype=float)[None, :]
    xhat = compute_xhat(x_t, v_t, h, model.masses, f_ext if np.any(config.gravity) else None)
    penalty = config.al_penalty_init or model.default_penalty(h)
    pins = _pins(model, target_pose, penalty)
    ccd = CCDContext(model, config.ccd_slack)
    contact = model.contact
    friction = contact.mu > 0

    def lag_at(x):
        c = model.candidates(x)
        return update_friction_lag(x, c.pt, c.ee, contact, h, anchor=x_t)

    lag = lag_at(x_t) if friction else None
    x = x_t.copy()
    solves, newton_iters, al_iters, lag_iters = [], 0, 0, 0
    x_prev = None
    residual = 0.0
    try:
        while True:
            for k in range(config.al_max_iters + 1):
                res = minimize(StepEnergy(model, xhat, h, lag, pins), x, ccd, config)
                x = res.x
                newton_iters += res.iterations
                residual = res.residual
                solves.append(res.energies)
                if pins.max_violation(x) <= config.al_tol or k == config.al_max_iters:
                    break
                pins.update(x, config.al_penalty_growth)
                al_iters += 1
            lag_iters += 1
            if not friction or lag_iters >= config.friction_lag_max_iters:
                break
            if x_prev is not None and np.abs(x - x_prev).max() < config.friction_lag_tol:
                break
            x_prev = x.copy()
            lag = lag_at(x)
    except (SolverError, IntersectionError) as exc:
        dump = {"step": state.step, "time": state.time, "x": x.tolist(), "error": str(exc)}
        raise SolverError(f"step {state.step + 1} failed: {exc}", dump=dump) from exc

    v = (x - x_t) / h
    min_d = model.min_distance(x)
    diag = {
        "step": state.step + 1,
        "newton_iters": newton_iters,
        "al_iters": al_iters,
        "lag_iters": lag_iters,
        "residual": residual,
        "constraint_violation": pins.max_violation(x),
        "min_distance": min_d,
        "energy": solves[-1][-1],
        "energies": solves,
    }
    diag_log.info(json.dumps({k: diag[k] for k in ("step", "newton_iters", "residual", "min_distance", "energy")}))
    return SimState(x=x, v=v, indenter_pose=target_pose.copy(), time=state.time + h,
                    step=state.step + 1, diagnostics=diag)
