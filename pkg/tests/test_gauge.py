"""Rotation field SDE, gauge potential, covariant operators."""

import numpy as np
import pytest
from scipy.linalg import expm

from gllg import fields, gauge, initial, noise, verify
from gllg.fields import DOMAIN_LENGTH as L

from conftest import analytic_rotation_field, resolved_spinfield


class TestRodrigues:
    def test_zero_angle_is_identity(self):
        g = initial.constant_field(8, (0, 1, 0))
        r = gauge.rodrigues(np.zeros((8, 8)), g)
        assert np.array_equal(r.values, np.broadcast_to(np.eye(3), (8, 8, 3, 3)))

    def test_full_turn_is_identity(self):
        g = initial.constant_field(8, (0, 0, 1))
        r = gauge.rodrigues(np.full((8, 8), 2 * np.pi), g)
        assert np.max(np.abs(r.values - np.eye(3))) < 1e-12

    def test_quarter_turn_matrix(self):
        g = initial.constant_field(4, (0, 0, 1))
        r = gauge.rodrigues(np.full((4, 4), np.pi / 2), g).values[0, 0]
        assert np.allclose(r, [[0, 1, 0], [-1, 0, 0], [0, 0, 1]], atol=1e-15)

    def test_matrix_exponential_oracle(self):
        axis = np.array([0.48, -0.6, 0.64])
        axis /= np.linalg.norm(axis)
        for w in (0.3, 1.7, 3.0):
            r = gauge.rodrigues_versor(w, axis)
            assert np.max(np.abs(r - expm(w * gauge.skew_from_vec(axis)))) < 1e-12

    def test_non_unit_axis_rejected(self):
        g = initial.constant_field(8, (0, 0, 1)) * 1.001
        with pytest.raises(ValueError):
            gauge.rodrigues(np.zeros((8, 8)), g)

    def test_rotation_convention(self):
        # Ghat h = h x g: e1 rotated about e3 by +pi/2 lands on -e2
        out = gauge.rotate_by_angle_field(
            np.array([0.0, 0.0, np.pi / 2]), np.array([1.0, 0.0, 0.0]))
        assert np.allclose(out, [0.0, -1.0, 0.0], atol=1e-15)


class TestIntegrateY:
    def test_zero_basis_stays_identity(self):
        n = 16
        basis = noise.NoiseBasis(np.zeros((1, n, n, 3)))
        path = noise.sample_path(basis, 1.0, 32, seed=0)
        y = gauge.integrate_Y(basis, path, 1.0)
        assert np.array_equal(y.values, np.broadcast_to(np.eye(3), (n, n, 3, 3)))

    def test_single_mode_matches_closed_form(self):
        n = 16
        basis = noise.make_trig_basis(n, 1, 4.0, 1.0)
        path = noise.sample_path(basis, 1.0, 128, seed=11)
        y = gauge.integrate_Y(basis, path, 1.0, method="lie")
        w = path.cumulative()[0, -1]
        ref = gauge.rodrigues(np.full((n, n), w), initial.constant_field(n, (1, 0, 0)))
        assert np.max(np.abs(y.values - ref.values)) < 1e-10

    def test_heun_first_order_pathwise(self):
        n = 8
        basis = noise.make_trig_basis(n, 1, 4.0, 1.0)
        errs = []
        for steps in (64, 128):
            path = noise.sample_path(basis, 0.5, 64, seed=2)
            path = noise.refine_path_to(path, steps)
            y = gauge.integrate_Y(basis, path, 0.5, method="heun")
            w = path.cumulative()[0, -1]
            ref = gauge.rodrigues(np.full((n, n), w), initial.constant_field(n, (1, 0, 0)))
            errs.append(np.max(np.abs(y.values - ref.values)))
        assert errs[0] < 0.05
        # pathwise error contracts roughly linearly under halving
        assert errs[1] < 0.7 * errs[0]

    def test_two_mode_strong_order_measured(self):
        # two non-commuting constant modes: without Levy-area simulation the
        # strong order is 1/2; assert the measured least-squares rate
        errs = verify.two_mode_strong_errors(steps_list=(8, 16, 32), n_paths=32)
        order = verify.fit_order((1.0, 0.5, 0.25), errs)
        assert order >= 0.35
        assert errs[-1] < errs[0]

    def test_orthogonality_invariants(self):
        basis = noise.make_trig_basis(16, 5, 5.0, 0.7)
        path = noise.sample_path(basis, 0.5, 1000, seed=4)
        y = gauge.integrate_Y(basis, path, 0.5, method="lie")
        assert gauge.orthogonality_defect(y) < 1e-10
        assert gauge.det_defect(y) < 1e-10
        h = np.random.default_rng(0).normal(size=(16, 16, 3))
        assert np.max(np.abs(np.linalg.norm(gauge.apply_rotation(y, h), axis=-1)
                             - np.linalg.norm(h, axis=-1))) < 1e-10

    def test_heun_orthogonality_drift_quadratic(self):
        # pre-reorthonormalisation defect of the Heun step is O(dt^2)
        n = 8
        basis = noise.make_trig_basis(n, 2, 4.0, 1.0)
        corrections = []
        for steps in (16, 64):
            path = noise.sample_path(basis, 0.25, 16, seed=12)
            path = noise.refine_path_to(path, steps)
            integ = gauge.YIntegrator(basis, path, method="heun")
            integ.advance_to(steps)
            corrections.append(integ.max_reorth_correction)
        assert corrections[1] < corrections[0] / 4.0

    def test_heun_step_rejection(self):
        n = 8
        basis = noise.make_trig_basis(n, 1, 4.0, 8.0)
        path = noise.sample_path(basis, 4.0, 2, seed=3)   # huge increments
        with pytest.raises(gauge.GaugeStepError):
            gauge.integrate_Y(basis, path, 4.0, method="heun")

    def test_t_end_outside_horizon(self):
        basis = noise.make_trig_basis(8, 1, 4.0, 1.0)
        path = noise.sample_path(basis, 0.5, 8, seed=1)
        with pytest.raises(ValueError):
            gauge.integrate_Y(basis, path, 1.0)

    def test_adjoint_equation_consistency(self):
        basis = noise.make_trig_basis(16, 4, 5.0, 0.7)
        path = noise.sample_path(basis, 0.25, 64, seed=6)
        yf = gauge.integrate_Y(basis, path, 0.25, method="lie")
        ya = gauge.integrate_Y_adjoint(basis, path, 0.25, method="lie")
        assert np.max(np.abs(ya.values - np.swapaxes(yf.values, -1, -2))) < 1e-14
        # heun: agree to the scheme's strong-order tolerance
        yfh = gauge.integrate_Y(basis, path, 0.25, method="heun")
        yah = gauge.integrate_Y_adjoint(basis, path, 0.25, method="heun")
        assert np.max(np.abs(yah.values - np.swapaxes(yfh.values, -1, -2))) < 0.05


class TestGaugePotential:
    def test_identity_rotation_gives_zero(self):
        n = 32
        y = gauge.RotationField(np.broadcast_to(np.eye(3), (n, n, 3, 3)).copy())
        a = gauge.gauge_potential(y)
        assert np.max(np.abs(a.a1)) < 1e-12
        assert np.max(np.abs(a.a2)) < 1e-12

    def test_spatially_constant_rotation_gives_zero(self):
        n = 32
        r = gauge.rodrigues_versor(0.9, np.array([0.6, 0.0, 0.8]))
        y = gauge.RotationField(np.broadcast_to(r, (n, n, 3, 3)).copy())
        a = gauge.gauge_potential(y)
        assert np.max(np.abs(a.a1)) < 1e-12

    def test_skew_symmetry_enforced_and_logged(self):
        a = gauge.gauge_potential(analytic_rotation_field(64))
        for comp in (a.a1, a.a2):
            assert np.max(np.abs(comp + np.swapaxes(comp, -1, -2))) < 1e-10
        assert a.skew_defect < 1e-12

    def test_constant_angle_closed_form(self):
        # W constant in space: A = sin(W) grad(G) + (1 - cos W)[grad(G), G]
        n = 64
        w = 0.9
        gax = resolved_spinfield(n, 13, amp=0.6, kmax=1)
        y = gauge.rodrigues(np.full((n, n), w), gax)
        a = gauge.gauge_potential(y)
        ghat = gauge.skew_from_vec(gax)
        dg1, dg2 = fields.spectral_grad(ghat, rank=2)
        sw, cw = np.sin(w), 1.0 - np.cos(w)
        a1_cf = sw * dg1 + cw * (dg1 @ ghat - ghat @ dg1)
        a2_cf = sw * dg2 + cw * (dg2 @ ghat - ghat @ dg2)
        scale = max(np.max(np.abs(a1_cf)), np.max(np.abs(a2_cf)))
        err = max(np.max(np.abs(a.a1 - a1_cf)), np.max(np.abs(a.a2 - a2_cf)))
        assert err / scale < 1e-10


class TestCurvature:
    def test_zero_field(self):
        assert gauge.curvature_residual(gauge.zero_gauge(16)) == 0.0

    def test_pure_gauge_residual_small_and_decaying(self):
        resid = {n: gauge.curvature_residual(
            gauge.gauge_potential(analytic_rotation_field(n))) for n in (32, 64)}
        assert resid[64] <= 1e-8
        assert resid[32] / resid[64] >= 100.0

    def test_non_gauge_counterexample(self):
        n = 64
        phi = np.sin(2 * fields.grid(n)[1])
        vec = np.zeros((n, n, 3))
        vec[..., 2] = phi
        a1 = gauge.skew_from_vec(vec)
        a = gauge.GaugeField(a1=a1, a2=np.zeros_like(a1))
        resid = gauge.curvature_residual(a)
        d2a1 = fields.spectral_grad(a1, rank=2)[1]
        assert resid == pytest.approx(np.max(np.abs(d2a1)), abs=1e-10)
        assert resid > 0.1


class TestCovariantOperators:
    def test_zero_gauge_reductions(self):
        n = 32
        v = resolved_spinfield(n, 14)
        g1, g2 = fields.spectral_grad(v)
        c1, c2 = gauge.covariant_gradient(None, v)
        assert np.array_equal(c1, g1) and np.array_equal(c2, g2)
        az = gauge.zero_gauge(n)
        c1, c2 = gauge.covariant_gradient(az, v)
        assert np.allclose(c1, g1, atol=1e-16)
        lap = fields.spectral_lap(v)
        assert np.allclose(gauge.covariant_laplacian(az, v), lap, atol=1e-16)

    def test_constant_field_cases(self):
        n = 32
        a = gauge.gauge_potential(analytic_rotation_field(n, seed=17))
        c = initial.constant_field(n, (0, 1, 0))
        c1, c2 = gauge.covariant_gradient(a, c)
        assert np.max(np.abs(c1 - gauge.matvec(a.a1, c))) < 1e-12
        assert np.max(np.abs(c2 - gauge.matvec(a.a2, c))) < 1e-12
        lap_a = gauge.covariant_laplacian(a, c)
        expect = gauge.matvec(a.div(), c) + gauge.matvec(a.square(), c)
        assert np.max(np.abs(lap_a - expect)) < 1e-12

    def test_compose_then_differentiate_oracle(self):
        n = 64
        y = analytic_rotation_field(n, w_amp=0.8, seed=5)
        a = gauge.gauge_potential(y)
        v = resolved_spinfield(n, 18)
        yv = gauge.apply_rotation(y, v)
        c1, c2 = gauge.covariant_gradient(a, v)
        d1, d2 = fields.spectral_grad(yv)
        assert np.max(np.abs(c1 - gauge.apply_rotation(y, d1, transpose=True))) < 1e-9
        assert np.max(np.abs(c2 - gauge.apply_rotation(y, d2, transpose=True))) < 1e-9

    def test_compose_then_laplace_oracle(self):
        n = 64
        y = analytic_rotation_field(n, w_amp=0.8, seed=6)
        a = gauge.gauge_potential(y)
        v = resolved_spinfield(n, 19)
        lhs = gauge.covariant_laplacian(a, v)
        rhs = gauge.apply_rotation(y, fields.spectral_lap(gauge.apply_rotation(y, v)),
                                   transpose=True)
        assert np.max(np.abs(lhs - rhs)) < 1e-8


class TestApplyRotation:
    def test_identity(self):
        v = resolved_spinfield(16, 20)
        y = gauge.RotationField(np.broadcast_to(np.eye(3), (16, 16, 3, 3)).copy())
        assert np.array_equal(gauge.apply_rotation(y, v), v)

    def test_isometry_and_equivariance(self, rng):
        n = 32
        y = analytic_rotation_field(n, seed=7)
        v = rng.normal(size=(n, n, 3))
        w = rng.normal(size=(n, n, 3))
        yv = gauge.apply_rotation(y, v)
        assert np.max(np.abs(np.linalg.norm(yv, axis=-1)
                             - np.linalg.norm(v, axis=-1))) < 1e-12
        lhs = gauge.apply_rotation(y, np.cross(v, w))
        rhs = np.cross(yv, gauge.apply_rotation(y, w))
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_transpose_roundtrip(self, rng):
        n = 32
        y = analytic_rotation_field(n, seed=8)
        v = rng.normal(size=(n, n, 3))
        back = gauge.apply_rotation(y, gauge.apply_rotation(y, v), transpose=True)
        assert np.max(np.abs(back - v)) < 1e-10


class TestGaugeTrace:
    def test_record_and_arrays(self):
        a = gauge.gauge_potential(analytic_rotation_field(32, seed=9))
        tr = gauge.GaugeTrace()
        tr.record(0.0, a)
        tr.record(0.5, a)
        times, h1, h2, linf, dps = tr.as_arrays()
        assert len(tr) == 2
        assert h2[0] >= h1[0] > 0
        assert linf[0] > 0 and dps[0] > 0
        assert h1[0] == pytest.approx(gauge.gauge_sobolev_norm(a, 1.0), rel=1e-14)
