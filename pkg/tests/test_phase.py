import math

import numpy as np
import pytest

import conetilt as ct
from conetilt.phase import (
    DEFAULT_EPSILON,
    dense_solve_phase,
    objective_value,
    unwrap_gradient,
)


def constant_tilt_field(cfg, du=(0.01, 0.0)):
    ny, nx = cfg.n_y, cfg.n_x
    tilts = np.zeros((1, ny, nx, 2))
    tilts[0, :, :, 0] = du[0]
    tilts[0, :, :, 1] = du[1]
    flags = np.full((1, ny, nx), ct.FLAG_TILTED, dtype=np.uint8)
    return ct.TiltField(tilts=tilts, flags=flags, depths=(1.0,))


class TestGradientTargets:
    def test_scaling_by_wave_number(self):
        cfg = ct.DisplayConfig(resolution=(8, 8))
        field = constant_tilt_field(cfg)
        g = ct.tilt_to_gradient_targets(field, cfg)
        assert g[0, 0, 0] == pytest.approx(1.2083048e5, rel=1e-6)
        # per-modulator-pixel phase step
        assert g[0, 0, 0] * cfg.slm_pitch == pytest.approx(0.77331, rel=1e-4)

    def test_zero_field_zero_targets(self):
        cfg = ct.DisplayConfig(resolution=(8, 8))
        field = constant_tilt_field(cfg, du=(0.0, 0.0))
        assert np.all(ct.tilt_to_gradient_targets(field, cfg) == 0.0)

    def test_full_budget_tilt_hits_pi_per_pixel(self):
        cfg = ct.DisplayConfig(resolution=(8, 8))
        du = 2 * cfg.max_cone_radius
        field = constant_tilt_field(cfg, du=(du, 0.0))
        g = ct.tilt_to_gradient_targets(field, cfg)
        assert g[0, 0, 0] * cfg.slm_pitch == pytest.approx(math.pi, rel=1e-12)


class TestSolvePhase:
    def test_zero_targets_give_zero_phase(self):
        cfg = ct.DisplayConfig(resolution=(16, 16))
        pm = ct.solve_phase(np.zeros((16, 16, 2)), 1e-3, cfg)
        assert np.all(pm.phi == 0.0)

    def test_constant_targets_recover_ramp(self):
        cfg = ct.DisplayConfig(resolution=(64, 64))
        g = np.zeros((64, 64, 2))
        g[:, :, 0] = cfg.wave_number * 0.01
        pm = ct.solve_phase(g, 1e-3, cfg)
        realized = pm.realized_tilt()
        err = np.abs(realized[1:-1, 1:-1, 0] - 0.01)
        assert err.max() <= 1e-6

    def test_analytic_potential_recovered(self):
        cfg = ct.DisplayConfig(resolution=(64, 64))
        n = 64
        pitch = cfg.slm_pitch
        L = n * pitch
        # targets sampled where the forward differences live: the x component
        # at horizontal edge midpoints, the y component at vertical ones
        node = np.arange(n + 1) * pitch

        def psi_x(x, y):
            return (2 * math.pi / L) * np.cos(2 * math.pi * x / L) * np.sin(2 * math.pi * y / L)

        def psi_y(x, y):
            return (2 * math.pi / L) * np.sin(2 * math.pi * x / L) * np.cos(2 * math.pi * y / L)

        xm = (node[:-1] + node[1:]) / 2
        g = np.zeros((n, n, 2))
        g[:, :, 0] = psi_x(xm[None, :], node[:-1, None])
        g[:, :, 1] = psi_y(node[None, :-1], xm[:, None])
        pm = ct.solve_phase(g, 1e-3, cfg)
        realized = pm.gradient()
        rel = np.linalg.norm(realized - g) / np.linalg.norm(g)
        assert rel <= 1e-3

    def test_matches_dense_oracle_on_small_grids(self):
        rng = np.random.default_rng(0)
        for n in (5, 9, 16):
            cfg = ct.DisplayConfig(resolution=(n, n))
            g = rng.normal(scale=1e5, size=(n, n, 2))
            a = ct.solve_phase(g, 1e-3, cfg)
            b = dense_solve_phase(g, 1e-3, cfg)
            scale = max(1.0, np.abs(b.phi).max())
            assert np.abs(a.phi - b.phi).max() <= 1e-8 * scale

    def test_solution_is_a_minimum(self):
        rng = np.random.default_rng(1)
        cfg = ct.DisplayConfig(resolution=(12, 12))
        g = rng.normal(scale=1e4, size=(12, 12, 2))
        pm = dense_solve_phase(g, 1e-3, cfg)
        base = objective_value(pm, g, 1e-3)
        for _ in range(8):
            delta = rng.normal(scale=1e-3, size=pm.phi.shape)
            perturbed = ct.PhaseMap(phi=pm.phi + delta, pitch=pm.pitch, wavelength=pm.wavelength)
            assert objective_value(perturbed, g, 1e-3) > base

    def test_gauge_invariance_of_realized_tilt(self):
        cfg = ct.DisplayConfig(resolution=(16, 16))
        g = np.zeros((16, 16, 2))
        g[:, :, 0] = cfg.wave_number * 0.005
        pm = ct.solve_phase(g, 1e-3, cfg)
        shifted = ct.PhaseMap(phi=pm.phi + 3.7, pitch=pm.pitch, wavelength=pm.wavelength)
        assert np.allclose(shifted.realized_tilt(), pm.realized_tilt(), atol=1e-12)

    def test_linearity(self):
        rng = np.random.default_rng(2)
        cfg = ct.DisplayConfig(resolution=(12, 12))
        g1 = rng.normal(scale=1e4, size=(12, 12, 2))
        g2 = rng.normal(scale=1e4, size=(12, 12, 2))
        a, b = 0.7, -1.3
        lhs = ct.solve_phase(a * g1 + b * g2, 1e-3, cfg).phi
        rhs = a * ct.solve_phase(g1, 1e-3, cfg).phi + b * ct.solve_phase(g2, 1e-3, cfg).phi
        assert np.abs(lhs - rhs).max() <= 1e-7 * max(1.0, np.abs(lhs).max())

    def test_epsilon_monotonicity_of_gradient_residual(self):
        rng = np.random.default_rng(3)
        cfg = ct.DisplayConfig(resolution=(12, 12))
        g = rng.normal(scale=1e4, size=(12, 12, 2))
        residuals = []
        for eps in (1e-4, 1e-2, 1e0, 1e2, 1e4, 1e8):
            pm = dense_solve_phase(g, eps, cfg)
            residuals.append(np.linalg.norm(pm.gradient() - g))
        assert all(b >= a - 1e-9 for a, b in zip(residuals, residuals[1:]))

    def test_nonconvergence_raises_with_residual(self):
        cfg = ct.DisplayConfig(resolution=(32, 32))
        rng = np.random.default_rng(4)
        g = rng.normal(scale=1e5, size=(32, 32, 2))
        with pytest.raises(ct.PhaseSolveError) as info:
            ct.solve_phase(g, 1e-3, cfg, max_iter=2)
        assert info.value.residual > 0
        assert info.value.iterations == 2

    def test_rejects_bad_inputs(self):
        cfg = ct.DisplayConfig(resolution=(8, 8))
        with pytest.raises(ct.ValidationError):
            ct.solve_phase(np.zeros((8, 8, 2)), 0.0, cfg)
        with pytest.raises(ct.ValidationError):
            ct.solve_phase(np.full((8, 8, 2), np.nan), 1e-3, cfg)


class TestModulatorConstraints:
    def test_max_cone_radius_prototype_value(self):
        cfg = ct.DisplayConfig()
        bound = ct.max_cone_radius(cfg)
        assert bound == pytest.approx(0.0203125, rel=1e-9)
        assert math.degrees(bound) == pytest.approx(1.164, abs=5e-4)
        assert round(math.degrees(bound), 1) == 1.2

    def test_bound_scales_inversely_with_pitch(self):
        a = ct.DisplayConfig()
        b = ct.DisplayConfig(slm_pitch=2 * a.slm_pitch, u_m=0.010)
        assert ct.max_cone_radius(b) == pytest.approx(ct.max_cone_radius(a) / 2)

    def test_longer_wavelength_raises_bound(self):
        cfg = ct.DisplayConfig(wavelength=640e-9)
        assert ct.max_cone_radius(cfg) == pytest.approx(0.025, rel=1e-9)

    def test_nyquist_constant_and_exact_pi_ramp_pass(self):
        cfg = ct.DisplayConfig(resolution=(8, 8))
        flat = ct.PhaseMap(phi=np.full((9, 9), 1.0), pitch=cfg.slm_pitch, wavelength=cfg.wavelength)
        assert ct.check_nyquist(flat) == []
        ramp = ct.PhaseMap(
            phi=math.pi * np.arange(9)[None, :] * np.ones((9, 1)),
            pitch=cfg.slm_pitch,
            wavelength=cfg.wavelength,
        )
        assert ct.check_nyquist(ramp) == []

    def test_nyquist_flags_steep_ramp(self):
        cfg = ct.DisplayConfig(resolution=(8, 8))
        ramp = ct.PhaseMap(
            phi=1.1 * math.pi * np.arange(9)[None, :] * np.ones((9, 1)),
            pitch=cfg.slm_pitch,
            wavelength=cfg.wavelength,
        )
        violations = ct.check_nyquist(ramp)
        # every horizontal neighbor pair on all 9 node rows
        assert len(violations) == 9 * 8
        assert all(a[0] == b[0] and b[1] == a[1] + 1 for a, b in violations)


class TestWrapPhase:
    def test_identity_in_range(self):
        pm = ct.PhaseMap(phi=np.array([[0.0, 1.0], [2.0, 6.0]]), pitch=6.4e-6, wavelength=520e-9)
        assert np.allclose(ct.wrap_phase(pm, 0.0).phi, pm.phi)

    def test_modular_identity(self):
        pm = ct.PhaseMap(phi=np.array([[2 * math.pi + 0.1]]), pitch=6.4e-6, wavelength=520e-9)
        assert ct.wrap_phase(pm, 0.0).phi[0, 0] == pytest.approx(0.1)

    def test_unwrapped_gradient_recovered_where_steps_small(self):
        cfg = ct.DisplayConfig(resolution=(16, 16))
        rng = np.random.default_rng(5)
        phi = np.cumsum(rng.uniform(-2.5, 2.5, size=(17, 17)), axis=1)
        pm = ct.PhaseMap(phi=phi, pitch=cfg.slm_pitch, wavelength=cfg.wavelength)
        wrapped = ct.wrap_phase(pm, 0.3)
        direct = pm.gradient()
        steps_ok = np.abs(direct * cfg.slm_pitch) <= math.pi
        recovered = unwrap_gradient(wrapped)
        assert np.allclose(recovered[steps_ok], direct[steps_ok], atol=1e-9 / cfg.slm_pitch)


class TestTiltErrorReport:
    def test_constant_field_error_small(self):
        cfg = ct.DisplayConfig(resolution=(32, 32))
        field = constant_tilt_field(cfg)
        g = ct.tilt_to_gradient_targets(field, cfg)
        pm = ct.solve_phase(g, 1e-3, cfg)
        report = ct.tilt_error_report(pm, field, band_px=5, config=cfg)
        assert report.mean_all <= 1e-6

    def test_zero_everything_gives_zero_report(self):
        cfg = ct.DisplayConfig(resolution=(16, 16))
        field = constant_tilt_field(cfg, du=(0.0, 0.0))
        pm = ct.PhaseMap(phi=np.zeros((17, 17)), pitch=cfg.slm_pitch, wavelength=cfg.wavelength)
        report = ct.tilt_error_report(pm, field, band_px=5, config=cfg)
        assert report.mean_all == 0.0
        assert report.mean_boundary == 0.0
        assert np.all(report.error_map == 0.0)

    def test_errors_concentrate_at_boundaries_on_occluder_scene(self, disc_scene_bundle):
        cfg, scene, clean, field = disc_scene_bundle
        g = ct.tilt_to_gradient_targets(field, cfg)
        pm = ct.solve_phase(g, DEFAULT_EPSILON, cfg)
        report = ct.tilt_error_report(pm, field, band_px=5, config=cfg)
        assert report.mean_boundary >= report.mean_all
        assert report.mean_all > 0  # non-vacuous: the radial field is not integrable
