import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import symbolic_snh_density
from tacsim.ccd import IntersectionError
from tacsim.energy import (
    GEL, ContactParams, MaterialParams, PinConstraints, augmented_lagrangian_energy, barrier_energy,
    barrier_value, compute_xhat, elastic_energy, friction_energy, friction_f0, friction_f1, inertia_energy,
    update_friction_lag,
)
from tacsim.geometry.meshing import box_tet_mesh

DHAT = 1e-3


def _fd_check(fn, x, seed=0, eps=1e-7):
    """Relative error of the directional derivative of ``fn -> (value, grad)``."""
    rng = np.random.default_rng(seed)
    d = rng.normal(size=x.shape)
    _, g = fn(x)[:2]
    fd = (fn(x + eps * d)[0] - fn(x - eps * d)[0]) / (2 * eps)
    return abs(fd - np.sum(g * d)) / max(np.linalg.norm(g) * np.linalg.norm(d), 1e-300)


class TestParams:
    def test_gel_lame_values(self):
        E, nu = 1.23e5, 0.43
        assert GEL.lame_mu == pytest.approx(E / (2 * (1 + nu)), rel=1e-12)
        assert GEL.lame_lambda == pytest.approx(E * nu / ((1 + nu) * (1 - 2 * nu)), rel=1e-12)
        assert (GEL.youngs_modulus, GEL.poisson_ratio, GEL.density) == (1.23e5, 0.43, 1.01e3)

    @pytest.mark.parametrize("kw", [dict(youngs_modulus=0), dict(poisson_ratio=0.5), dict(poisson_ratio=0.0),
                                    dict(density=-1)])
    def test_material_rejects(self, kw):
        with pytest.raises(ValueError):
            MaterialParams(**{"youngs_modulus": 1.0, "poisson_ratio": 0.3, "density": 1.0, **kw})

    @pytest.mark.parametrize("kw", [dict(dhat=0), dict(kappa=0), dict(mu=-0.1), dict(epsv=0)])
    def test_contact_rejects(self, kw):
        with pytest.raises(ValueError):
            ContactParams(**{"dhat": 1e-3, **kw})

    def test_dhat_from_fraction(self):
        assert ContactParams.from_fraction(1e-3, 0.05).dhat == pytest.approx(5e-5, rel=1e-15)


class TestInertia:
    def test_minimum_at_xhat(self):
        x = np.random.default_rng(0).normal(size=(5, 3))
        v, g, H = inertia_energy(x, x, np.ones(5))
        assert v == 0.0 and not g.any()

    def test_single_vertex(self):
        v, g, H = inertia_energy(np.array([[1.0, 0, 0]]), np.zeros((1, 3)), np.array([2.0]))
        assert v == 1.0
        np.testing.assert_array_equal(H, [[2, 2, 2]])

    def test_random_definition(self):
        rng = np.random.default_rng(1)
        x, xh, m = rng.normal(size=(9, 3)), rng.normal(size=(9, 3)), rng.uniform(0.1, 2, 9)
        v = inertia_energy(x, xh, m)[0]
        assert v == pytest.approx(0.5 * sum(mi * np.sum((a - b) ** 2) for mi, a, b in zip(m, x, xh)), rel=1e-13)

    def test_xhat_cases(self):
        x = np.array([[0.1, 0.2, 0.3]])
        np.testing.assert_array_equal(compute_xhat(x, np.zeros_like(x), 0.01, np.ones(1)), x)
        g = compute_xhat(x, np.zeros_like(x), 0.01, np.ones(1), f_ext=np.array([[0, 0, -9.8]]))
        np.testing.assert_allclose(g, x + 1e-4 * np.array([0, 0, -9.8]), rtol=1e-15)
        np.testing.assert_allclose(compute_xhat(x, np.array([[1.0, 0, 0]]), 0.01, np.ones(1)), x + [0.01, 0, 0])
        with pytest.raises(ValueError):
            compute_xhat(x, x, 0.0, np.ones(1))


class TestElastic:
    mesh = box_tet_mesh((1.0, 1.0, 1.0), (2, 2, 2))

    def test_rest_state(self):
        v, g, _ = elastic_energy(self.mesh, self.mesh.vertices, GEL)
        assert v == pytest.approx(0.0, abs=1e-9)
        assert np.abs(g).max() < 1e-9

    def test_rigid_rotation(self):
        rng = np.random.default_rng(2)
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        q *= np.sign(np.linalg.det(q))
        v = elastic_energy(self.mesh, self.mesh.vertices @ q.T, GEL, order=0)[0]
        assert abs(v) < 1e-10 * GEL.youngs_modulus * self.mesh.total_volume()

    def test_uniaxial_stretch_matches_symbolic(self):
        F = np.diag([1.01, 1.0, 1.0])
        v = elastic_energy(self.mesh, self.mesh.vertices @ F.T, GEL, order=0)[0]
        assert self.mesh.total_volume() == pytest.approx(1.0)
        assert v == pytest.approx(symbolic_snh_density(F, GEL.youngs_modulus, GEL.poisson_ratio), rel=1e-10)

    def test_general_deformation_matches_symbolic(self):
        F = np.array([[1.05, 0.02, -0.03], [0.01, 0.97, 0.04], [-0.02, 0.03, 1.02]])
        v = elastic_energy(self.mesh, self.mesh.vertices @ F.T, GEL, order=0)[0]
        assert v == pytest.approx(symbolic_snh_density(F, GEL.youngs_modulus, GEL.poisson_ratio), rel=1e-10)

    def test_translation_invariance(self):
        rng = np.random.default_rng(3)
        x = self.mesh.vertices + rng.normal(0, 0.05, self.mesh.vertices.shape)
        v0, g0, _ = elastic_energy(self.mesh, x, GEL, order=1)
        v1, g1, _ = elastic_energy(self.mesh, x + [0.3, -2.0, 5.0], GEL, order=1)
        assert v1 == pytest.approx(v0, rel=1e-12)
        np.testing.assert_allclose(g0.sum(axis=0), 0.0, atol=1e-9 * np.abs(g0).max())
        np.testing.assert_allclose(g1, g0, rtol=1e-9, atol=1e-9 * np.abs(g0).max())

    def test_gradient_and_hessian_fd(self):
        rng = np.random.default_rng(4)
        x = self.mesh.vertices + rng.normal(0, 0.05, self.mesh.vertices.shape)
        assert _fd_check(lambda y: elastic_energy(self.mesh, y, GEL, order=1), x) < 1e-6
        # unprojected blocks reproduce the gradient's directional derivative
        _, _, blocks = elastic_energy(self.mesh, x, GEL, project=False)
        d = rng.normal(size=x.shape)
        Hd = np.zeros_like(x)
        np.add.at(Hd, self.mesh.tets, np.einsum("tij,tj->ti", blocks, d[self.mesh.tets].reshape(-1, 12)).reshape(-1, 4, 3))
        eps = 1e-7
        fd = (elastic_energy(self.mesh, x + eps * d, GEL, order=1)[1] - elastic_energy(self.mesh, x - eps * d, GEL, order=1)[1]) / (2 * eps)
        assert np.linalg.norm(fd - Hd) / np.linalg.norm(Hd) < 1e-6

    def test_projected_blocks_psd(self):
        x = self.mesh.vertices.copy()
        x[:, 2] *= 0.3  # strong compression gives indefinite element Hessians
        _, _, blocks = elastic_energy(self.mesh, x, GEL)
        assert np.linalg.eigvalsh(blocks).min() >= -1e-9 * np.abs(blocks).max()

    def test_finite_when_inverted(self):
        x = self.mesh.vertices.copy()
        x[:, 2] *= -1
        v = elastic_energy(self.mesh, x, GEL, order=0)[0]
        assert np.isfinite(v)


class TestBarrierValue:
    def test_boundary(self):
        b, db, _ = barrier_value(DHAT**2, DHAT)
        assert b == 0.0 and db == 0.0

    def test_beyond(self):
        assert barrier_value(2 * DHAT**2, DHAT)[0] == 0.0

    def test_half_squared_threshold(self):
        D = DHAT**2
        assert barrier_value(D / 2, DHAT)[0] == pytest.approx((D / 2) ** 2 * np.log(2), rel=1e-14)

    def test_rejects_contact(self):
        with pytest.raises(IntersectionError):
            barrier_value(0.0, DHAT)

    def test_c2_decay_at_threshold(self):
        D = DHAT**2
        vals = np.array([barrier_value(D * (1 - 10.0**-k), DHAT) for k in range(3, 9)])
        assert (vals[:, 0] > 0).all() and (vals[:, 1] < 0).all()
        for col in range(3):
            mag = np.abs(vals[:, col])
            assert (np.diff(mag) < 0).all()
        assert abs(vals[-1, 2]) < 1e-6 * abs(barrier_value(D / 2, DHAT)[2])

    @given(st.floats(1e-4, 0.999))
    @settings(max_examples=100, deadline=None)
    def test_derivatives_fd(self, r):
        d2 = r * DHAT**2
        h = 1e-6 * d2
        b, db, ddb = barrier_value(d2, DHAT)
        bp, dbp, _ = barrier_value(d2 + h, DHAT)
        bm, dbm, _ = barrier_value(d2 - h, DHAT)
        assert (bp - bm) / (2 * h) == pytest.approx(db, rel=1e-5, abs=1e-9 * DHAT**2)
        assert (dbp - dbm) / (2 * h) == pytest.approx(ddb, rel=1e-5, abs=1e-6)


def _pt_scene(gap):
    """Point above the interior of a unit floor triangle."""
    x = np.array([[0.2, 0.2, gap], [0, 0, 0], [1, 0, 0], [0, 1, 0.0]])
    return x, np.array([[0, 1, 2, 3]]), np.zeros((0, 4), dtype=np.int64)


class TestBarrierEnergy:
    def test_far_pairs_vanish(self):
        x, pt, ee = _pt_scene(2 * DHAT)
        v, g, H, idx = barrier_energy(x, pt, ee, ContactParams(DHAT))
        assert v == 0.0 and not g.any() and len(idx) == 0

    def test_single_pair_half_dhat(self):
        x, pt, ee = _pt_scene(DHAT / 2)
        p = ContactParams(DHAT, kappa=1e6)
        v = barrier_energy(x, pt, ee, p)[0]
        assert v == pytest.approx(1e6 * barrier_value(DHAT**2 / 4, DHAT)[0], rel=1e-12)

    def test_linear_in_kappa(self):
        x, pt, ee = _pt_scene(0.3 * DHAT)
        a = barrier_energy(x, pt, ee, ContactParams(DHAT, kappa=1e5), order=1)
        b = barrier_energy(x, pt, ee, ContactParams(DHAT, kappa=2e5), order=1)
        assert b[0] == 2 * a[0]
        np.testing.assert_array_equal(b[1], 2 * a[1])

    def test_gradient_fd(self):
        x, pt, ee = _pt_scene(0.4 * DHAT)
        p = ContactParams(DHAT)
        assert _fd_check(lambda y: barrier_energy(y, pt, ee, p, order=1), x, eps=1e-10) < 1e-5

    def test_intersection_raises(self):
        x, pt, ee = _pt_scene(0.0)
        with pytest.raises(IntersectionError):
            barrier_energy(x, pt, ee, ContactParams(DHAT))


class TestFrictionScalars:
    h, epsv = 0.01, 1e-3

    def test_threshold_values(self):
        e = self.h * self.epsv
        assert friction_f1(e, self.h, self.epsv) == 1.0
        assert friction_f1(e / 2, self.h, self.epsv) == pytest.approx(0.75, rel=1e-15)
        assert friction_f1(2 * e, self.h, self.epsv) == 1.0
        assert friction_f0(e, self.h, self.epsv) == pytest.approx(e, rel=1e-15)

    def test_f0_derivative_is_f1(self):
        e = self.h * self.epsv
        y = np.linspace(1e-3 * e, 3 * e, 400)
        d = 1e-6 * e
        fd = (friction_f0(y + d, self.h, self.epsv) - friction_f0(y - d, self.h, self.epsv)) / (2 * d)
        np.testing.assert_allclose(fd, friction_f1(y, self.h, self.epsv), atol=1e-6)


def _friction_pair(mu=0.5, gap=0.3 * DHAT, h=0.01):
    x, pt, ee = _pt_scene(gap)
    p = ContactParams(DHAT, mu=mu)
    lag = update_friction_lag(x, pt, ee, p, h, anchor=x)
    return x, lag, p, h


class TestFriction:
    def test_zero_at_anchor(self):
        x, lag, p, h = _friction_pair()
        v, g, *_ = friction_energy(x, lag, p, h)
        assert len(lag) == 1
        assert not g.any()

    def test_frictionless(self):
        x, lag, p, h = _friction_pair(mu=0.0)
        y = x.copy()
        y[0, 0] += 1e-3
        v, g, *_ = friction_energy(y, lag, p, h)
        assert v == 0.0 and not g.any()

    def test_dynamic_force_magnitude(self):
        x, lag, p, h = _friction_pair(mu=0.7)
        y = x.copy()
        y[0, :2] += [3e-3, -2e-3]  # far beyond h * epsv = 1e-5
        _, g, *_ = friction_energy(y, lag, p, h)
        assert np.linalg.norm(g[0]) == pytest.approx(0.7 * lag.lam[0], rel=1e-12)
        assert abs(g[0, 2]) < 1e-12 * np.linalg.norm(g[0])

    def test_gradient_and_hessian_fd(self):
        x, lag, p, h = _friction_pair()
        rng = np.random.default_rng(5)
        for scale in (2e-6, 1e-4):  # static and dynamic branches
            y = x + rng.normal(0, scale, x.shape)
            assert _fd_check(lambda z: friction_energy(z, lag, p, h, order=1), y, eps=1e-10) < 1e-5

    def test_far_pair_has_no_lag(self):
        x, pt, ee = _pt_scene(1.5 * DHAT)
        assert len(update_friction_lag(x, pt, ee, ContactParams(DHAT), 0.01, anchor=x)) == 0

    def test_floor_tangent_plane(self):
        x, lag, p, h = _friction_pair()
        T = lag.basis[0]
        np.testing.assert_allclose(T[2], 0.0, atol=1e-15)
        np.testing.assert_allclose(T.T @ T, np.eye(2), atol=1e-15)

    def test_lag_properties_random_contacts(self):
        rng = np.random.default_rng(6)
        n = 10000
        tri = rng.uniform(-1, 1, (n, 3, 3)) * 1e-2
        normal = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        normal /= np.linalg.norm(normal, axis=1, keepdims=True)
        bary = rng.dirichlet(np.ones(3), n)
        p = np.einsum("ni,nij->nj", bary, tri) + rng.uniform(0.05, 0.95, (n, 1)) * DHAT * normal
        x = np.concatenate([p[:, None], tri], axis=1).reshape(-1, 3)
        pt = np.arange(4 * n).reshape(n, 4)
        lag = update_friction_lag(x, pt, np.zeros((0, 4), dtype=np.int64), ContactParams(DHAT), 0.01, anchor=x)
        assert len(lag) > 0.9 * n
        assert (lag.lam >= 0).all()
        gram = np.einsum("nki,nkj->nij", lag.basis, lag.basis)
        np.testing.assert_allclose(gram, np.broadcast_to(np.eye(2), gram.shape), atol=1e-12)


class TestAugmentedLagrangian:
    def test_satisfied(self):
        x = np.random.default_rng(7).normal(size=(4, 3))
        v, g, _ = augmented_lagrangian_energy(x, np.array([1, 3]), x[[1, 3]], np.zeros((2, 3)), 10.0)
        assert v == 0.0 and not g.any()

    def test_penalty_doubles_quadratic(self):
        x = np.zeros((2, 3))
        t = np.array([[0.1, 0.0, -0.2]])
        a = augmented_lagrangian_energy(x, np.array([0]), t, np.zeros((1, 3)), 3.0)[0]
        b = augmented_lagrangian_energy(x, np.array([0]), t, np.zeros((1, 3)), 6.0)[0]
        assert b == 2 * a

    def test_gradient_fd(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(6, 3))
        idx, t, lam = np.array([0, 2, 5]), rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
        assert _fd_check(lambda y: augmented_lagrangian_energy(y, idx, t, lam, 4.0), x) < 1e-8

    def test_bad_index(self):
        with pytest.raises(IndexError):
            augmented_lagrangian_energy(np.zeros((2, 3)), np.array([2]), np.zeros((1, 3)), np.zeros((1, 3)), 1.0)

    def test_multiplier_update(self):
        pins = PinConstraints.create([0], [[1.0, 0, 0]], 2.0)
        x = np.zeros((1, 3))
        pins.update(x, 2.0)
        np.testing.assert_array_equal(pins.multipliers, [[2.0, 0, 0]])
        assert pins.penalty == 4.0
        assert pins.max_violation(x) == 1.0
