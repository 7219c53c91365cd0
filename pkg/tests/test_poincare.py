import math

import numpy as np
import pytest

from singflow.closed_forms import center_vectors, perp, tau_prime_zero
from singflow.errors import NotNormalError
from singflow.fields import LinearField, PolynomialRemainder, PolyTerm, center_plane_field, expm
from singflow.poincare import (BRACKET, NormalVector, domain_radius, eval_F, normal_basis,
                               project_normal, psi_star, rescaled_poincare,
                               solve_return_time, verify_linear_reduction)

SADDLE = LinearField([([[-1.0]], "cs"), ([[1.0]], "cu")])
FOCUS = LinearField([([[0.0, -1.0], [1.0, 0.0]], "center2d")])


def _u(theta):
    return np.array([math.cos(theta), math.sin(theta)])


class TestEvalF:
    def test_zero_at_origin_of_section(self, saddle_xy, smooth4):
        assert not np.any(eval_F(saddle_xy, 1.0, _u(0.3), 0.1, 0.0, np.zeros(2)))
        assert not np.any(eval_F(smooth4, 1.0, center_vectors(0.3)[0], 0.0, 0.0, np.zeros(4)))

    def test_continuity_in_s(self, saddle_xy):
        u = _u(math.pi / 6)
        y = 0.02 * normal_basis(saddle_xy, u, 0.0)[0]
        lim = eval_F(saddle_xy, 1.0, u, 0.0, 0.05, y)
        gap = np.linalg.norm(eval_F(saddle_xy, 1.0, u, 1e-6, 0.05, y) - lim)
        assert gap < 1e-6


class TestReturnTime:
    def test_zero_offset(self, saddle_xy, smooth4):
        for fld, u in ((saddle_xy, _u(0.5)), (smooth4, center_vectors(1.0)[0])):
            for s in (0.0, 0.05):
                assert solve_return_time(fld, 1.0, u, s, np.zeros(fld.dim)).tau == 0.0

    def test_focus_has_no_delay(self):
        for th in np.linspace(0, 3, 7):
            u = _u(th)
            for y in (-0.05, 0.03, 0.1):
                sol = solve_return_time(FOCUS, 0.7, u, 0.0, y * normal_basis(FOCUS, u, 0.0)[0])
                assert abs(sol.tau) <= 1e-14

    def test_tau_prime(self):
        u = _u(math.pi / 6)
        e = perp(SADDLE.matrix @ u)
        e /= np.linalg.norm(e)
        h = 1e-6
        fd = (solve_return_time(SADDLE, 1.0, u, 0.0, h * e).tau
              - solve_return_time(SADDLE, 1.0, u, 0.0, -h * e).tau) / (2 * h)
        assert fd == pytest.approx(tau_prime_zero(SADDLE.matrix, u, 1.0), abs=1e-6)
        assert fd == pytest.approx(1.6117656382, abs=1e-6)

    def test_residual_small(self, smooth4):
        u, v = center_vectors(0.9)
        for s in (0.0, 0.03):
            y = 0.05 * project_normal(smooth4, u, s, v)
            sol = solve_return_time(smooth4, 1.3, u, s, y)
            assert sol.residual <= 1e-12 and abs(sol.tau) < BRACKET


class TestRescaledPoincare:
    def test_zero_maps_to_zero(self, smooth4):
        u = center_vectors(0.4)[0]
        out = rescaled_poincare(smooth4, 1.0, u, 0.02, np.zeros(4))
        assert not np.any(out.v)
        assert out.base.s > 0

    def test_rejects_non_normal(self, smooth4):
        u, v = center_vectors(0.4)
        with pytest.raises(NotNormalError):
            rescaled_poincare(smooth4, 1.0, u, 0.0, 0.01 * v)

    def test_output_is_normal(self, smooth4):
        for s in (0.0, 0.01, 0.05):
            for th in (0.3, 1.1, 2.4):
                u, v = center_vectors(th)
                for e in normal_basis(smooth4, u, s):
                    out = rescaled_poincare(smooth4, 1.2, u, s, 0.03 * e)
                    assert isinstance(out, NormalVector)
                    assert out.normality_defect(smooth4) <= 1e-9

    def test_antipodal(self):
        u, v = center_vectors(0.8)
        fld = center_plane_field()
        for e in normal_basis(fld, u, 0.0):
            a = rescaled_poincare(fld, 1.0, u, 0.0, 0.04 * e).v
            b = rescaled_poincare(fld, 1.0, -u, 0.0, -0.04 * e).v
            np.testing.assert_allclose(a, -b, atol=1e-15)

    def test_singular_fiber_ignores_remainder(self, smooth4):
        u = center_vectors(1.3)[0]
        for e in normal_basis(smooth4, u, 0.0):
            a = rescaled_poincare(smooth4, 1.0, u, 0.0, 0.05 * e).v
            b = rescaled_poincare(smooth4.linear, 1.0, u, 0.0, 0.05 * e).v
            assert np.linalg.norm(a - b) <= 1e-9

    @pytest.mark.parametrize("s", [0.0, 0.01, 0.1])
    @pytest.mark.parametrize("t", [-1.0, 0.5, 1.5])
    def test_derivative_is_psi_star(self, smooth4, s, t):
        h = 1e-5
        for th in (0.3, 1.0, 2.0):
            u = center_vectors(th)[0]
            for e in normal_basis(smooth4, u, s):
                fd = (rescaled_poincare(smooth4, t, u, s, h * e).v
                      - rescaled_poincare(smooth4, t, u, s, -h * e).v) / (2 * h)
                assert np.linalg.norm(fd - psi_star(smooth4, t, u, e, s)) <= 1e-4


class TestPsiStar:
    def test_identity_at_zero_time(self, center4):
        u, v = center_vectors(0.7)
        w = project_normal(center4, u, 0.0, v)
        np.testing.assert_allclose(psi_star(center4, 0.0, u, w), w, atol=1e-15)

    def test_vanishes_at_quarter(self, center4):
        u, v = center_vectors(math.pi / 4)
        for t in np.linspace(-5, 5, 11):
            assert np.linalg.norm(psi_star(center4, t, u, v)) <= 1e-14

    def test_value_at_pi6(self, center4):
        u, v = center_vectors(math.pi / 6)
        np.testing.assert_allclose(psi_star(center4, 0.0, u, v), [0, 0.25, math.sqrt(3) / 4, 0],
                                   atol=1e-15)

    def test_projection_invariant(self, center4, rng):
        u, v = center_vectors(1.1)
        Au = center4.matrix @ u
        for t in (-2.0, 0.5, 3.0):
            np.testing.assert_allclose(psi_star(center4, t, u, v + 0.7 * Au),
                                       psi_star(center4, t, u, v), atol=1e-13)

    def test_cocycle(self, center4, rng):
        for _ in range(10):
            th = rng.uniform(0.1, 3.0)
            s, t = rng.uniform(-2, 2, 2)
            u, v = center_vectors(th)
            w = project_normal(center4, u, 0.0, v)
            us = expm(center4, s) @ u
            us /= np.linalg.norm(us)
            two = psi_star(center4, t, us, psi_star(center4, s, u, w))
            np.testing.assert_allclose(two, psi_star(center4, s + t, u, w), atol=1e-9)

    def test_decay_bound(self, center4):
        # the factor-2 envelope holds for directions away from the eigendirections
        for th in np.linspace(math.pi / 6, math.pi / 3, 7):
            u, v = center_vectors(th)
            for t in np.linspace(-10, 10, 81):
                bound = 2 * min(math.exp(-abs(t)), 1.0) * np.linalg.norm(v)
                assert np.linalg.norm(psi_star(center4, t, u, v)) <= bound

    def test_decay_at_ten(self, center4):
        u, v = center_vectors(math.pi / 6)
        for t in (-10.0, 10.0):
            assert np.linalg.norm(psi_star(center4, t, u, v)) < 1e-3


class TestLinearReduction:
    def test_quadratic_remainder(self, saddle):
        u = _u(math.pi / 6)
        y = 0.01 * normal_basis(saddle, u, 0.0)[0]
        rem = PolynomialRemainder(2, [PolyTerm(1.0, (1, 1), 0)])
        rep = verify_linear_reduction(saddle, rem, 1.0, u, y, [1e-1, 1e-2, 1e-3, 1e-4])
        assert rep.passed and rep.monotone
        assert rep.distances[-1] < 1e-3
        assert rep.order >= 0.95

    def test_no_remainder(self, saddle):
        u = _u(1.0)
        y = 0.01 * normal_basis(saddle, u, 0.0)[0]
        rep = verify_linear_reduction(saddle, None, 1.0, u, y, [1e-1, 1e-2, 1e-3])
        assert rep.passed and rep.distances.max() < 1e-12


def test_domain_radius(smooth4):
    dirs = [center_vectors(th)[0] for th in (0.3, 1.2)]
    beta = domain_radius(smooth4, 1.0, dirs, cap=0.1)
    assert 0 < beta <= 0.1
