import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ten_vertex_mesh
from oracles import winding_numbers
from tacsim.distances import pair_d2
from tacsim.energy import GEL, ContactParams, MaterialParams, compute_xhat
from tacsim.geometry import signed_volumes
from tacsim.geometry.meshing import box_tet_mesh, cylinder_tet_mesh, sphere_cap_mesh
from tacsim.linalg import spd_project
from tacsim.solver import (
    CCDContext, LineSearchError, Model, SolverConfig, StepEnergy, filtered_line_search, minimize, step,
)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(h=0), dict(line_search_shrink=1.0), dict(line_search_shrink=0.0),
                                    dict(al_tol=0), dict(friction_lag_tol=-1), dict(newton_tol=0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)


class TestSPDProject:
    def test_identity(self):
        np.testing.assert_array_equal(spd_project(np.eye(4)), np.eye(4))

    def test_clamp(self):
        out = spd_project(np.diag([1.0, -1.0]))
        np.testing.assert_allclose(out, np.diag([1.0, 0.0]), atol=1e-11)
        assert out[1, 1] >= 0

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=60, deadline=None)
    def test_random_symmetric(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(12, 12))
        S = A + A.T
        P = spd_project(S)
        assert np.linalg.eigvalsh(P).min() >= -1e-12 * np.abs(S).max()
        G = A @ A.T
        np.testing.assert_array_equal(spd_project(G), 0.5 * (G + G.T))


def free_model(youngs=1e-6):
    mesh = ten_vertex_mesh()
    mat = MaterialParams(youngs, 0.3, 1000.0)
    return Model(mesh, mat, ContactParams(1e-3))


class TestMinimize:
    def test_free_particle_one_iteration(self):
        model = free_model()
        x0 = model.gel.vertices.copy()
        xhat = x0 + np.array([0.01, -0.02, 0.005])
        energy = StepEnergy(model, xhat, 0.01, None, None)
        res = minimize(energy, x0, CCDContext(model), SolverConfig(h=0.01, newton_tol=1e-8))
        assert res.iterations == 1 and res.converged
        np.testing.assert_allclose(res.x, xhat, atol=1e-12)

    def test_rest_state_is_minimum(self):
        model = Model(cylinder_tet_mesh(0.004, 0.002, 3), GEL, ContactParams(1e-5))
        x0 = model.gel.vertices.copy()
        energy = StepEnergy(model, x0, 0.01, None, None)
        res = minimize(energy, x0, CCDContext(model), SolverConfig())
        assert res.iterations == 0
        np.testing.assert_array_equal(res.x, x0)

    def test_energy_non_increasing(self):
        model = Model(box_tet_mesh((0.01, 0.01, 0.01), (2, 2, 2)), GEL, ContactParams(1e-5))
        rng = np.random.default_rng(0)
        x0 = model.gel.vertices + rng.normal(0, 5e-4, model.gel.vertices.shape)
        assert model.min_volume(x0) > 0
        energy = StepEnergy(model, model.gel.vertices, 0.01, None, None)
        res = minimize(energy, x0, CCDContext(model), SolverConfig(newton_tol=1e-5))
        assert res.converged
        assert (np.diff(res.energies) <= 0).all()
        assert res.energies[-1] <= res.energies[0]


def contact_model():
    gel = cylinder_tet_mesh(0.004, 0.002, 3, n_layers=1)
    cap = sphere_cap_mesh(0.003, 0.001, 4, 12)
    return Model(gel, GEL, ContactParams(1e-5), indenter=cap)


class TestLineSearch:
    def test_full_step_without_contact(self):
        model = free_model(youngs=1.0)
        x = model.gel.vertices.copy()
        xhat = x + 1e-3
        energy = StepEnergy(model, xhat, 0.01, None, None)
        e, g, H = energy.evaluate(x)
        alpha, _ = filtered_line_search(x, xhat - x, energy, CCDContext(model), grad=g)
        assert alpha == 1.0

    def test_zero_direction_rejected(self):
        model = free_model()
        x = model.gel.vertices
        with pytest.raises(ValueError, match="zero"):
            filtered_line_search(x, np.zeros_like(x), StepEnergy(model, x, 0.01, None, None), CCDContext(model))

    def test_ascent_direction_rejected(self):
        model = free_model()
        x = model.gel.vertices
        d = np.ones_like(x)
        e = StepEnergy(model, x - 1.0, 0.01, None, None)
        with pytest.raises(ValueError, match="descent"):
            filtered_line_search(x, d, e, CCDContext(model), grad=e.evaluate(x)[1])

    def test_no_decrease_raises(self):
        model = free_model()
        x = model.gel.vertices
        e = StepEnergy(model, x, 0.01, None, None)
        with pytest.raises(LineSearchError):
            filtered_line_search(x, np.ones_like(x), e, CCDContext(model))

    def test_tunnelling_step_is_cut(self):
        model = contact_model()
        pose = np.eye(4)
        pose[2, 3] = 0.002 + 5e-5
        x = model.initial_state(pose).x
        d = np.zeros_like(x)
        d[model.n_gel:, 2] = -0.004  # straight through the gel
        energy = StepEnergy(model, x + d, 0.01, None, None)
        ccd = CCDContext(model)
        alpha, _ = filtered_line_search(x, d, energy, ccd)
        crossing = 5e-5 / 0.004
        assert 0 < alpha < crossing
        for s in np.linspace(0, alpha, 64):
            xs = x + s * d
            c = model.candidates(xs, margin=1e-3)
            assert pair_d2(xs, c.pt, c.ee).min() > 0


class TestStep:
    def test_free_fall_closed_form(self):
        model = free_model()
        g = np.array([0.0, 0.0, -9.81])
        h = 0.01
        cfg = SolverConfig(h=h, gravity=tuple(g), newton_tol=1e-9)
        state = model.initial_state()
        x0 = state.x.copy()
        for k in range(1, 6):
            state = step(model, state, np.eye(4), cfg)
            exact = x0 + h * h * g * k * (k + 1) / 2
            assert np.abs(state.x - exact).max() <= 1e-10
            np.testing.assert_allclose(state.v, np.broadcast_to(k * h * g, state.v.shape), rtol=1e-9, atol=1e-15)

    def test_identity_motion_fixed_point(self):
        model = contact_model()
        pose = np.eye(4)
        pose[2, 3] = 0.003
        state = model.initial_state(pose)
        model.glued = np.flatnonzero(model.gel.vertices[:, 2] < 1e-9)
        new = step(model, state, pose, SolverConfig())
        np.testing.assert_array_equal(new.x, state.x)
        assert not new.v.any()

    def test_xhat_matches_helper(self):
        model = free_model()
        x, v = model.gel.vertices, np.full(model.gel.vertices.shape, 0.1)
        np.testing.assert_array_equal(compute_xhat(x, v, 0.01, model.masses), x + 0.01 * v)


class TestSmallPress:
    def test_state_invariants_every_step(self, small_run):
        scene, result, _ = small_run
        assert not result.error
        m = scene.model
        for s in result.states:
            assert m.min_distance(s.x, margin=1e-3) > 0
            assert (signed_volumes(s.x[:m.n_gel], m.gel.tets) > 0).all()
            w = winding_numbers(s.x[m.n_gel:], s.x, m.gel.surface_tris)
            assert np.abs(w).max() < 0.5

    def test_velocity_consistency(self, small_run):
        scene, result, _ = small_run
        h = scene.solver.h
        for a, b in zip(result.states, result.states[1:]):
            np.testing.assert_allclose(b.v * h, b.x - a.x, rtol=1e-15, atol=1e-22)

    def test_constraints_reach_targets(self, small_run):
        scene, result, _ = small_run
        m = scene.model
        for s in result.states[1:]:
            assert s.diagnostics["constraint_violation"] <= scene.solver.al_tol
            np.testing.assert_allclose(s.x[m.indenter_ids], m.indenter_positions(s.indenter_pose), atol=1e-6)
            np.testing.assert_allclose(s.x[m.glued], m.gel.vertices[m.glued], atol=1e-6)

    def test_newton_energies_monotone(self, small_run):
        _, result, _ = small_run
        for s in result.states[1:]:
            for solve in s.diagnostics["energies"]:
                assert (np.diff(solve) <= 0).all()

    def test_deterministic_step(self, small_run):
        scene, result, _ = small_run
        again = step(scene.model, result.states[1], scene.pose_at(2 * scene.solver.h), scene.solver)
        np.testing.assert_array_equal(again.x, result.states[2].x)

    def test_diagnostics_logged_as_json(self, small_run, caplog):
        scene, result, _ = small_run
        with caplog.at_level(logging.INFO, logger="tacsim.diagnostics"):
            step(scene.model, result.states[0], scene.pose_at(scene.solver.h), scene.solver)
        rec = [r for r in caplog.records if r.name == "tacsim.diagnostics"]
        payload = json.loads(rec[-1].getMessage())
        assert set(payload) == {"step", "newton_iters", "residual", "min_distance", "energy"}
