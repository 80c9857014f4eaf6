"""Finite-difference and CCD self-checks on a scene."""

from __future__ import annotations

import numpy as np

from .ccd import ccd_toi
from .distances import pair_d2
from .energy import PinConstraints, compute_xhat, update_friction_lag
from .solver import Model, StepEnergy, assemble_hessian

TERMS = ("inertia", "elastic", "barrier", "friction", "constraints")


def _rel(a, b, floor):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def term_errors(energy: StepEnergy, name: str, x, direction, eps: float) -> tuple[float, float]:
    """Relative errors of the directional derivative and Hessian-vector product."""

    def term(y, order):
        return energy.terms(y, order, only=(name,)).get(name)

    t = term(x, 2)
    if t is None:
        raise ValueError(f"energy term {name!r} is not present")
    g = t[1].ravel()
    d = direction.ravel()
    Hd = assemble_hessian(x.size, [t]) @ d
    ep, em = term(x + eps * direction, 1), term(x - eps * direction, 1)
    fd_val = (ep[0] - em[0]) / (2 * eps)
    fd_grad = (ep[1].ravel() - em[1].ravel()) / (2 * eps)
    scale = np.linalg.norm(g) * np.linalg.norm(d)
    return _rel(np.atleast_1d(fd_val), np.atleast_1d(g @ d), 1e-12 * scale + 1e-300), \
        _rel(fd_grad, Hd, 1e-300)


def _contact_config(model: Model, rng, pose):
    """Gel jittered by a fraction of dhat, indenter hovering within dhat."""
    dhat = model.contact.dhat
    x = model.initial_state(pose).x.copy()
    n = model.n_gel
    x[:n] += rng.uniform(-0.05, 0.05, (n, 3)) * dhat
    gel_top = x[:n, 2].max()
    if model.indenter is not None:
        ind = x[n:]
        lateral = rng.uniform(-0.5, 0.5, 2) * model.char_length
        ind[:, :2] += lateral
        ind[:, 2] += gel_top + rng.uniform(0.3, 0.8) * dhat - ind[:, 2].min()
    return x


def gradient_suite(model: Model, h: float, n_configs: int = 5, seed: int = 0, eps_rel: float = 1e-6):
    """Worst relative gradient and Hessian-vector errors of every energy term.

    Returns ``{term: {"grad": err, "hess": err, "samples": k}}``; terms that
    have no active elements in every sampled configuration report the
    samples in which they were active.
    """
    rng = np.random.default_rng(seed)
    pose = np.eye(4)
    out = {t: {"grad": 0.0, "hess": 0.0, "samples": 0} for t in TERMS}
    eps = eps_rel * model.char_length
    for _ in range(n_configs):
        x = _contact_config(model, rng, pose)
        # a second, larger deformation for the smooth bulk terms
        xb = x.copy()
        xb[:model.n_gel] += rng.uniform(-0.05, 0.05, (model.n_gel, 3)) * model.char_length
        v = rng.normal(size=x.shape) * model.char_length / h * 0.1
        x_t = x - rng.uniform(0.2, 3.0) * model.contact.epsv * h * rng.normal(size=x.shape)
        c = model.candidates(x)
        lag = update_friction_lag(x, c.pt, c.ee, model.contact, h, anchor=x_t)
        pins_idx = np.concatenate([model.glued, model.indenter_ids])
        pins = PinConstraints.create(pins_idx, x[pins_idx] + rng.normal(size=(len(pins_idx), 3)) * eps * 100, 1.0)
        pins.multipliers = rng.normal(size=pins.target.shape)
        xhat = compute_xhat(x_t, v, h, model.masses)
        energy = StepEnergy(model, xhat, h, lag, pins, project=False)
        for name in TERMS:
            at = xb if name in ("inertia", "elastic", "constraints") else x
            terms = energy.terms(at, 0, only=(name,))
            if name not in terms or (name == "barrier" and terms[name][0] == 0.0):
                continue
            d = rng.normal(size=x.shape)
            if name == "friction":
                d[:model.n_gel] = 0.0
            ge, he = term_errors(energy, name, at, d, eps)
            rec = out[name]
            rec["grad"] = max(rec["grad"], ge)
            rec["hess"] = max(rec["hess"], he)
            rec["samples"] += 1
    return out


def ccd_suite(model: Model, n_motions: int = 20, seed: int = 0, n_samples: int = 16) -> dict:
    """Random motions: sampled minimum distance on [0, toi] must stay positive."""
    rng = np.random.default_rng(seed)
    dhat = model.contact.dhat
    worst = np.inf
    tois = []
    for _ in range(n_motions):
        x0 = _contact_config(model, rng, np.eye(4))
        dx = rng.normal(size=x0.shape) * dhat
        dx[model.n_gel:] = np.array([0.0, 0.0, -rng.uniform(1.0, 5.0) * dhat])
        x1 = x0 + dx
        c = model.candidates(x0, margin=1e-3 * dhat, x_end=x1)
        t = ccd_toi(x0, x1, c.pt, c.ee)
        tois.append(t)
        for s in np.linspace(0.0, t, n_samples):
            xs = x0 + s * dx
            cs = model.candidates(xs, margin=10 * dhat)
            d2 = pair_d2(xs, cs.pt, cs.ee)
            if len(d2):
                worst = min(worst, float(d2.min()))
    return {"min_d2": worst, "min_toi": float(min(tois)), "motions": n_motions}
