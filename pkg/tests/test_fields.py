"""Field algebra: norms, spectral calculus, energies, rescaling."""

import numpy as np
import pytest
from scipy.integrate import quad

from gllg import fields, gauge, initial
from gllg.fields import DOMAIN_LENGTH as L, StepFailureError

from conftest import analytic_rotation_field, resolved_spinfield


class TestSobolevNorms:
    def test_constant_normalisation(self):
        c = np.zeros((32, 32, 3))
        c[..., 0] = 2.0
        # |c|_{L2} = |c| * area^(1/2), fixed so |1|_{L2} = 2*pi
        for sigma in (0.0, 1.0, 2.5):
            assert fields.sobolev_norm(c, sigma) == pytest.approx(2 * 2 * np.pi, rel=1e-14)

    def test_single_mode_weight(self):
        n = 64
        x1, _ = fields.grid(n)
        f = np.zeros((n, n, 3))
        f[..., 2] = np.sin(x1)
        ratio = (fields.sobolev_norm(f, 1) / fields.sobolev_norm(f, 0)) ** 2
        assert ratio == pytest.approx(2.0, abs=1e-12)

    def test_sigma_zero_is_rms_times_area(self, rng):
        n = 48
        f = rng.normal(size=(n, n, 3))
        rms_area = np.sqrt(np.mean(np.sum(f ** 2, axis=-1))) * 2 * np.pi
        assert fields.sobolev_norm(f, 0.0) == pytest.approx(rms_area, rel=1e-12)
        assert fields.l2_norm(f) == pytest.approx(rms_area, rel=1e-12)


class TestSpectralCalculus:
    def test_pure_mode_gradient_exact(self):
        n = 64
        x1, x2 = fields.grid(n)
        f = np.sin(3 * x1 - 5 * x2)[..., None] * np.array([0.0, 1.0, 0.0])
        g1, g2 = fields.spectral_grad(f)
        assert np.max(np.abs(g1[..., 1] - 3 * np.cos(3 * x1 - 5 * x2))) < 1e-13
        assert np.max(np.abs(g2[..., 1] + 5 * np.cos(3 * x1 - 5 * x2))) < 1e-13

    def test_laplacian_and_divergence(self):
        n = 64
        x1, x2 = fields.grid(n)
        f = np.cos(2 * x1 + x2)[..., None] * np.array([1.0, 0.0, 0.0])
        lap = fields.spectral_lap(f)
        assert np.max(np.abs(lap + 5 * f)) < 5e-12
        g1, g2 = fields.spectral_grad(f)
        div = fields.spectral_div(g1, g2)
        assert np.max(np.abs(div - lap)) < 1e-11

    def test_dealias_kills_high_modes_only(self):
        n = 48
        x1, _ = fields.grid(n)
        low = np.sin(3 * x1)
        high = np.sin((n // 3 + 2) * x1)
        f = (low + high)[..., None] * np.array([1.0, 0.0, 0.0])
        out = fields.dealias(f)
        assert np.max(np.abs(out[..., 0] - low)) < 1e-12

    def test_cross_matches_numpy(self, rng):
        a = rng.normal(size=(5, 7, 3))
        b = rng.normal(size=(5, 7, 3))
        assert np.array_equal(fields.cross(a, b), np.cross(a, b))


class TestProjection:
    def test_unit_input_unchanged(self):
        v = resolved_spinfield(32, 1)
        assert np.array_equal(fields.project_sphere(v), v / np.linalg.norm(v, axis=-1)[..., None])

    def test_constant_doubled(self):
        v = np.zeros((16, 16, 3))
        v[..., 2] = 2.0
        out = fields.project_sphere(v)
        assert np.allclose(out, [0.0, 0.0, 1.0])

    def test_perturbed_norms(self, rng):
        v = resolved_spinfield(32, 2)
        v = v * rng.uniform(0.9, 1.1, size=(32, 32))[..., None]
        assert fields.max_norm_defect(fields.project_sphere(v)) < 1e-15

    def test_near_zero_raises_step_failure(self):
        v = np.zeros((8, 8, 3))
        v[..., 0] = 0.1
        with pytest.raises(StepFailureError):
            fields.project_sphere(v)

    def test_large_perturbation_restored(self, rng):
        v = resolved_spinfield(32, 3) + 0.1 * rng.normal(size=(32, 32, 3))
        assert fields.max_norm_defect(fields.project_sphere(v)) < 1e-14


class TestDirichletEnergy:
    def test_constant_is_zero(self):
        c = initial.constant_field(32)
        assert fields.dirichlet_energy(c) < 1e-25

    def test_bubble_energy_matches_plane_oracle(self):
        # oracle: adaptive quadrature of the closed-form plane density
        rho = L / 64
        val, err = quad(lambda r: 0.5 * 8 * rho ** 2 / (rho ** 2 + r ** 2) ** 2
                        * 2 * np.pi * r, 0.0, np.inf)
        assert err < 1e-8
        assert val == pytest.approx(4 * np.pi, rel=1e-10)
        e = fields.dirichlet_energy(initial.bubble(256, rho))
        assert abs(e - val) / val < 0.02

    def test_gauged_energy_equals_rotated_energy(self):
        n = 64
        y = analytic_rotation_field(n)
        a = gauge.gauge_potential(y)
        v = resolved_spinfield(n, 5)
        e1 = fields.dirichlet_energy(v, a)
        e2 = fields.dirichlet_energy(gauge.apply_rotation(y, v))
        assert abs(e1 - e2) < 1e-8

    def test_invariant_under_target_rotation(self):
        v = resolved_spinfield(64, 6)
        r = gauge.rodrigues_versor(1.1, np.array([0.0, 0.6, 0.8]))
        rv = np.einsum("ij,xyj->xyi", r, v)
        assert abs(fields.dirichlet_energy(rv) - fields.dirichlet_energy(v)) < 1e-12


class TestLocalEnergy:
    def test_constant_zero_everywhere(self):
        c = initial.constant_field(32)
        assert fields.local_energy(c, (3, 7), L / 4) == 0.0

    def test_subset_below_global(self):
        v = resolved_spinfield(64, 7)
        total = fields.dirichlet_energy(v)
        local = fields.local_energy(v, (10, 50), L / 2 * 0.999)
        assert local <= total + 1e-10

    def test_monotone_in_radius(self):
        v = resolved_spinfield(64, 8)
        vals = [fields.local_energy(v, (32, 32), r) for r in (L / 16, L / 8, L / 4)]
        assert vals[0] <= vals[1] <= vals[2]

    def test_bubble_concentration(self):
        rho = L / 64
        b = initial.bubble(512, rho)
        le = fields.local_energy(b, (256, 256), 10 * rho)
        assert le >= 0.95 * 4 * np.pi
        # analytic radial integral of the bubble density inside the disc
        expect = initial.bubble_plane_energy_in_disc(rho, 10 * rho)
        assert le == pytest.approx(expect, rel=0.01)

    def test_ball_sums_match_direct_mask(self, rng):
        n = 64
        v = resolved_spinfield(n, 9)
        dens = fields.energy_density(v)
        h2 = fields.grid_spacing(n) ** 2
        r = L / 7
        sums = fields.ball_sums(dens, r) * h2
        for center in [(0, 0), (17, 45), (63, 2)]:
            direct = np.sum(dens[fields.ball_mask(n, center, r)]) * h2
            assert sums[center] == pytest.approx(direct, abs=1e-11)

    def test_partition_covers_global(self):
        n = 64
        v = resolved_spinfield(n, 10)
        total = fields.dirichlet_energy(v)
        acc = sum(fields.local_energy(v, (i, k), L / 8)
                  for i in range(0, n, n // 16) for k in range(0, n, n // 16))
        assert acc >= total


class TestParabolicRescale:
    def test_identity_at_unit_scale(self):
        n = 64
        v = resolved_spinfield(n, 11)
        states = np.stack([v, v])
        times = np.array([0.0, 1.0])
        h = fields.grid_spacing(n)
        # patch nodes that hit grid points exactly
        m = 9
        _, xi, out = fields.parabolic_rescale(
            times, states, 1.0, (0.0, (0.0, 0.0)), [0.0], (m - 1) / 2 * h, m)
        idx = (np.round(xi / h).astype(int)) % n
        ref = v[np.ix_(idx, idx)]
        assert np.max(np.abs(out[0] - ref)) < 1e-12

    def test_bubble_energy_scale_invariance(self):
        n = 256
        rho = L / 16
        b = initial.bubble(n, rho)
        states = np.stack([b, b])
        times = np.array([0.0, 1.0])
        lam = rho  # rescale the bubble to unit scale
        halfwidth = 7.0
        _, xi, out = fields.parabolic_rescale(
            times, states, lam, (0.0, (L / 2, L / 2)), [0.0], halfwidth, 512)
        spacing = xi[1] - xi[0]
        e_patch = fields.patch_dirichlet_energy(out[0], spacing)
        e_disc = fields.local_energy(b, (n // 2, n // 2), lam * halfwidth)
        assert e_patch == pytest.approx(e_disc, rel=0.01)

    def test_gauge_l2_scale_invariance(self):
        n = 128
        y = analytic_rotation_field(n, w_amp=0.7, seed=3)
        a = gauge.gauge_potential(y)
        states = np.stack([a.a1, a.a1])
        times = np.array([0.0, 1.0])
        lam = 0.5
        halfwidth = 1.2
        _, xi, out = fields.parabolic_rescale(
            times, states, lam, (0.0, (L / 2, L / 2)), [0.0], halfwidth, 97,
            gauge_factor=True)
        spacing = xi[1] - xi[0]
        patch_norm = fields.patch_l2_norm(out[0], spacing)
        # reference: |A1|_{L2} over the physical box of half-width lam*halfwidth
        _, xi2, ref = fields.parabolic_rescale(
            times, states, 1.0, (0.0, (L / 2, L / 2)), [0.0], lam * halfwidth, 97)
        ref_norm = fields.patch_l2_norm(ref[0], xi2[1] - xi2[0])
        assert patch_norm == pytest.approx(ref_norm, rel=0.01)

    def test_window_validation(self):
        v = resolved_spinfield(16, 12)
        states = np.stack([v, v])
        times = np.array([0.0, 0.5])
        with pytest.raises(ValueError):
            fields.parabolic_rescale(times, states, 1.0, (0.0, (0, 0)), [0.6], 1.0, 5)
        with pytest.raises(ValueError):
            fields.parabolic_rescale(times, states, 2.0, (0.0, (0, 0)), [0.1], L, 5)
