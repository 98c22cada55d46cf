"""Saddle-flattening perturbation: cutoff, frame, construction, checks."""

import math

import numpy as np
import pytest

from tempergap.errors import WellDefinednessError
from tempergap.perturbation import (
    Cutoff,
    build_perturbation,
    build_saddle_frame,
    default_cutoff,
    identity_perturbation,
    verify_perturbation,
)

PI2 = math.pi**2


@pytest.fixture(scope="module")
def pert(dw2, geom_dw2):
    return build_perturbation(dw2, geom_dw2, 0.05, a=0.03)


class TestCutoff:
    def test_plateau_and_tail(self):
        chi = default_cutoff()
        assert chi(0.0) == 1.0 and chi(0.5) == 1.0 and chi(0.49) == 1.0
        assert chi(1.0) == 0.0 and chi(2.0) == 0.0

    def test_midpoint_by_symmetry(self):
        assert default_cutoff()(0.75) == pytest.approx(0.5, abs=1e-14)

    def test_monotone_on_transition(self):
        chi = default_cutoff()
        s = np.linspace(0.5, 1.0, 1000)
        v = chi(s)
        assert np.all(np.diff(v) <= 0.0)

    def test_derivative_matches_difference_quotient(self):
        chi = default_cutoff()
        for s in (0.6, 0.75, 0.9):
            fd = (chi(s + 1e-7) - chi(s - 1e-7)) / 2e-7
            assert chi.derivative(s) == pytest.approx(fd, rel=1e-5)
        assert chi.derivative(0.3) == 0.0
        assert chi.derivative(1.2) == 0.0

    def test_sup_derivative_has_headroom(self):
        chi = Cutoff()
        s = np.linspace(0.5, 1.0, 400001)
        observed = float(np.max(np.abs(chi.derivative(s))))
        assert chi.sup_abs_derivative >= observed
        assert chi.sup_abs_derivative <= observed * 1.02


class TestSaddleFrame:
    def test_dw2_lowest_saddle(self, dw2, geom_dw2):
        fr = build_saddle_frame(dw2, geom_dw2)
        assert fr.saddle == pytest.approx([0.75, 0.0], abs=1e-9)
        assert fr.lambda_u == pytest.approx(7.8 * PI2, rel=1e-9)
        assert fr.lambda_tangential[0] == pytest.approx(12 * PI2, rel=1e-9)

    def test_normal_points_outward_from_basin_one(self, dw2, geom_dw2):
        fr = build_saddle_frame(dw2, geom_dw2)
        assert fr.normal == pytest.approx([1.0, 0.0], abs=1e-6)
        assert abs(fr.tangents[0] @ fr.normal) < 1e-12

    def test_projector(self, dw2, geom_dw2):
        fr = build_saddle_frame(dw2, geom_dw2)
        p = fr.projector
        assert p @ p == pytest.approx(p, abs=1e-12)
        assert p @ fr.normal == pytest.approx([0.0, 0.0], abs=1e-12)

    def test_ambiguous_lowest_saddle_refused(self, dw1_sym, geom_dw1_sym):
        with pytest.raises(WellDefinednessError):
            build_saddle_frame(dw1_sym, geom_dw1_sym)

    def test_explicit_saddle_accepted(self, dw1_sym, geom_dw1_sym):
        fr = build_saddle_frame(dw1_sym, geom_dw1_sym, saddle=[0.25])
        assert fr.lambda_u == pytest.approx(8 * PI2, rel=1e-9)

    def test_non_saddle_rejected(self, dw2, geom_dw2):
        # (0.25, 0.5) is the local maximum: index 2, not a saddle.
        with pytest.raises(WellDefinednessError):
            build_saddle_frame(dw2, geom_dw2, saddle=[0.25, 0.5])

    def test_ridge_saddle_rejected(self, dw2, geom_dw2):
        # The ridge saddles at y = 1/2 have index 1, but both sides of
        # the unstable direction fall into the same well: they are not
        # on the basin boundary and cannot carry the frame.
        ridge = next(
            c
            for c in geom_dw2.critical_points
            if c.morse_index == 1 and abs(c.location[1] - 0.5) < 1e-6
        )
        with pytest.raises(WellDefinednessError):
            build_saddle_frame(dw2, geom_dw2, saddle=ridge.location)

    def test_non_critical_point_rejected(self, dw2, geom_dw2):
        with pytest.raises(WellDefinednessError):
            build_saddle_frame(dw2, geom_dw2, saddle=[0.3, 0.3])


class TestConstruction:
    def test_default_a_refused_at_low_temperature(self, dw2, geom_dw2):
        with pytest.raises(WellDefinednessError):
            build_perturbation(dw2, geom_dw2, 0.05)

    def test_support_fits(self, pert, geom_dw2):
        assert pert.support_radius < geom_dw2.r0 / 2.0

    def test_default_kappa_is_half_the_admissible_bound(self, pert):
        c_d = pert.w / 2.0  # d = 2
        assert pert.kappa == pytest.approx(
            0.5 * min(c_d, 1.0) * pert.frame.lambda_u, rel=1e-12
        )
        assert pert.w == pytest.approx(1.0 / 8.0, rel=1e-12)  # sigma^2/2

    def test_kappa_range_enforced(self, dw2, geom_dw2):
        with pytest.raises(ValueError):
            build_perturbation(dw2, geom_dw2, 0.05, a=0.03, kappa=1e9)
        with pytest.raises(ValueError):
            build_perturbation(dw2, geom_dw2, 0.05, a=0.03, kappa=0.0)

    def test_quadratic_form_near_saddle(self, pert):
        # Inside the chi = 1 plateau, Phat is exactly the quadratic
        # 1/2 (lambda_1 - kappa) dy^2 along the boundary.
        s = pert.frame.saddle
        lam1 = pert.frame.lambda_tangential[0]
        for dy in (0.001, 0.002, -0.003):
            got = pert.p_hat(s + np.array([0.0, dy]))
            assert got == pytest.approx(
                0.5 * (lam1 - pert.kappa) * dy * dy, rel=1e-9
            )

    def test_vanishes_at_saddle_and_outside_support(self, pert):
        s = pert.frame.saddle
        assert pert.p_hat(s) == 0.0
        r = pert.support_radius
        for ang in np.linspace(0, 2 * math.pi, 16, endpoint=False):
            x = s + 1.01 * r * np.array([math.cos(ang), math.sin(ang)])
            assert pert.p_hat(x % 1.0) == 0.0

    def test_u_hat_is_u_minus_p(self, pert, dw2):
        rng = np.random.default_rng(3)
        x = rng.random((16, 2)) * 0.02 + pert.frame.saddle - 0.01
        np.testing.assert_allclose(
            pert.u_hat_many(x % 1.0),
            dw2.u_many(x % 1.0) - pert.p_hat_many(x % 1.0),
            atol=1e-14,
        )

    def test_d1_perturbation_is_trivial(self, dw1_asym, geom_dw1_asym):
        # DW1(0.4, 0) keeps equal wall heights (x -> -x symmetry), so
        # the wall must be named explicitly.
        wall = geom_dw1_asym.boundary_saddles[0].location
        p = build_perturbation(
            dw1_asym, geom_dw1_asym, 0.05, a=0.03, saddle=wall
        )
        assert p.trivial
        xs = np.linspace(0, 1, 13)[:, None]
        assert np.all(p.p_hat_many(xs) == 0.0)
        np.testing.assert_allclose(
            p.u_hat_many(xs), dw1_asym.u_many(xs), atol=0
        )

    def test_identity_perturbation(self, dw2, geom_dw2):
        p = identity_perturbation(dw2, geom_dw2, 0.05)
        assert p.trivial
        assert p.p_hat(np.array([0.75, 0.01])) == 0.0


class TestVerification:
    def test_report_passes(self, pert):
        rep = verify_perturbation(pert)
        assert rep.all_ok
        assert rep.boundary_normal_grad_max <= 1e-4
        assert rep.boundary_normal_hess_max <= 1e-4

    def test_saddle_eigenvalues(self, pert):
        rep = verify_perturbation(pert)
        lo, hi = rep.saddle_eigenvalues
        assert lo == pytest.approx(-pert.frame.lambda_u, rel=1e-6)
        assert hi == pytest.approx(pert.kappa, rel=1e-4)
        assert rep.saddle_eigenvalue_rel_error <= 0.02

    def test_gradient_lower_bound_positive(self, pert):
        rep = verify_perturbation(pert)
        assert rep.c0_lower_bound > 0.1

    def test_scaling_constants_uniform_in_eps(self, dw2, geom_dw2, pert):
        # The same a at a colder temperature must give comparable
        # normalized sups |D^i Phat| / (a sqrt(eps))^(2-i).
        cold = build_perturbation(dw2, geom_dw2, 0.02, a=0.03)
        r1 = verify_perturbation(pert).scaling_constants
        r2 = verify_perturbation(cold).scaling_constants
        for u, v in zip(r1, r2):
            assert 0.4 < u / v < 2.5

    def test_report_serializes(self, pert):
        import json

        s = json.dumps(verify_perturbation(pert).to_dict())
        assert "saddle_eigenvalues" in s
