import math

import numpy as np
import pytest

from dpmac import taylor
from dpmac.activations import IDENTITY, SOFTPLUS
from _helpers import central_difference, max_relative_error

LOG2 = math.log(2.0)


class TestTaylorTerms:
    def test_softplus_hand_values(self):
        # u = 0: f = log 2, f' = 1/2, f'' = 1/4, residual = log 2
        value, grad, hess = taylor.taylor_terms(
            np.zeros(1), np.ones(1), 0.0, SOFTPLUS)
        assert value == pytest.approx(LOG2**2, abs=1e-15)
        np.testing.assert_allclose(grad, [LOG2], atol=1e-15)
        np.testing.assert_allclose(hess, [[0.5 * LOG2 + 0.5]], atol=1e-15)

    def test_zero_residual_zeroes_gradient_not_hessian(self):
        # target equal to f(u) kills the gradient; the Gauss-Newton part
        # 2 f'(u)^2 z z^T survives
        z = np.array([2.0, -1.0])
        w = np.array([0.3, 0.4])
        u = float(z @ w)
        target = math.log1p(math.exp(u))
        value, grad, hess = taylor.taylor_terms(w, z, target, SOFTPLUS)
        assert value == pytest.approx(0.0, abs=1e-20)
        np.testing.assert_allclose(grad, 0.0, atol=1e-12)
        assert np.all(np.isfinite(hess)) and hess[0, 0] != 0.0

    def test_matches_finite_differences(self, rng):
        z = rng.standard_normal(3)
        w = rng.standard_normal(3) * 0.5
        target = 0.7

        def value_at(v):
            return taylor.taylor_terms(v, z, target, SOFTPLUS)[0]

        _, grad, hess = taylor.taylor_terms(w, z, target, SOFTPLUS)
        assert max_relative_error(grad, central_difference(value_at, w)) < 1e-6
        for j in range(3):
            fd_row = central_difference(
                lambda v: taylor.taylor_terms(v, z, target, SOFTPLUS)[1][j], w)
            assert max_relative_error(hess[j], fd_row) < 1e-6


class TestLocalProfiles:
    def test_consistent_with_single_unit_terms(self, rng):
        w_hat = rng.standard_normal((4, 3)) * 0.5
        z_prev = rng.standard_normal((6, 4))
        z_t = rng.standard_normal((6, 3))
        vals, g1, g2 = taylor.local_profiles(w_hat, z_prev, z_t, SOFTPLUS,
                                             taylor.SQUARED)
        for n in (0, 3):
            for h in (0, 2):
                value, grad, hess = taylor.taylor_terms(
                    w_hat[:, h], z_prev[n], z_t[n, h], SOFTPLUS)
                assert vals[n, h] == pytest.approx(value)
                np.testing.assert_allclose(g1[n, h] * z_prev[n], grad, rtol=1e-12)
                np.testing.assert_allclose(
                    g2[n, h] * np.outer(z_prev[n], z_prev[n]), hess, rtol=1e-12)

    def test_profiles_are_preactivation_derivatives(self, rng):
        # g1 = d(value)/du and g2 = d(g1)/du for both local objective kinds
        w_hat = rng.standard_normal((2, 2)) * 0.4
        z_prev = rng.standard_normal((5, 2))
        for kind, z_t in ((taylor.SQUARED, rng.standard_normal((5, 2))),
                          (taylor.XENT, (rng.random((5, 2)) < 0.5).astype(float))):
            u = z_prev @ w_hat
            vals, g1, g2 = taylor.local_profiles(w_hat, z_prev, z_t, SOFTPLUS, kind)
            eps = 1e-6

            def value_of(uv):
                if kind == taylor.SQUARED:
                    f = np.logaddexp(0.0, uv)
                    return (f - z_t) ** 2
                return 2.0 * (np.logaddexp(0.0, uv) - z_t * uv)

            fd1 = (value_of(u + eps) - value_of(u - eps)) / (2 * eps)
            np.testing.assert_allclose(g1, fd1, rtol=1e-6, atol=1e-9)

            from scipy.special import expit

            def slope_of(uv):
                if kind == taylor.SQUARED:
                    return 2.0 * expit(uv) * (np.logaddexp(0.0, uv) - z_t)
                return 2.0 * (expit(uv) - z_t)

            fd2 = (slope_of(u + eps) - slope_of(u - eps)) / (2 * eps)
            np.testing.assert_allclose(g2, fd2, rtol=1e-5, atol=1e-8)

    def test_xent_hand_values(self):
        # u = 0, y = 1: value = 2 log 2, g1 = -1, g2 = 1/2
        vals, g1, g2 = taylor.local_profiles(
            np.zeros((1, 1)), np.ones((1, 1)), np.ones((1, 1)), SOFTPLUS,
            taylor.XENT)
        assert vals[0, 0] == pytest.approx(2 * LOG2)
        assert g1[0, 0] == pytest.approx(-1.0)
        assert g2[0, 0] == pytest.approx(0.5)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="kind"):
            taylor.local_profiles(np.zeros((1, 1)), np.ones((1, 1)),
                                  np.ones((1, 1)), SOFTPLUS, "huber")


class TestClipProfiles:
    def test_caps_stack_norms_exactly(self, rng):
        z_prev = rng.standard_normal((8, 3)) * 2.0
        g1 = rng.standard_normal((8, 2)) * 3.0
        g2 = rng.standard_normal((8, 2)) * 3.0
        c1, c2 = taylor.clip_profiles(g1, g2, z_prev, 1.0, 2.0)
        z_norm = np.linalg.norm(z_prev, axis=1)
        before1 = np.linalg.norm(g1, axis=1) * z_norm
        after1 = np.linalg.norm(c1, axis=1) * z_norm
        np.testing.assert_allclose(after1, np.minimum(before1, 1.0), rtol=1e-12)
        before2 = np.linalg.norm(g2, axis=1) * z_norm**2
        after2 = np.linalg.norm(c2, axis=1) * z_norm**2
        np.testing.assert_allclose(after2, np.minimum(before2, 2.0), rtol=1e-12)

    def test_unclipped_rows_unchanged(self, rng):
        z_prev = rng.standard_normal((4, 2)) * 0.1
        g1 = rng.standard_normal((4, 2)) * 0.1
        g2 = rng.standard_normal((4, 2)) * 0.1
        c1, c2 = taylor.clip_profiles(g1, g2, z_prev, 10.0, 10.0)
        np.testing.assert_array_equal(c1, g1)
        np.testing.assert_array_equal(c2, g2)

    def test_none_bounds_are_no_ops(self, rng):
        g1 = rng.standard_normal((3, 2))
        g2 = rng.standard_normal((3, 2))
        z = rng.standard_normal((3, 4))
        c1, c2 = taylor.clip_profiles(g1, g2, z, None, None)
        np.testing.assert_array_equal(c1, g1)
        np.testing.assert_array_equal(c2, g2)


class TestCoefficients:
    def test_validation(self):
        with pytest.raises(ValueError, match="order"):
            taylor.TaylorCoefficients(order=3, constant=0.0,
                                      linear=np.zeros((2, 1)), quad=None,
                                      expansion_point=np.zeros((2, 1)))
        with pytest.raises(ValueError, match="order 2"):
            taylor.TaylorCoefficients(order=2, constant=0.0,
                                      linear=np.zeros((2, 1)), quad=None,
                                      expansion_point=np.zeros((2, 1)))
        with pytest.raises(ValueError, match="quad shape"):
            taylor.TaylorCoefficients(order=2, constant=0.0,
                                      linear=np.zeros((2, 1)),
                                      quad=np.zeros((2, 2, 2)),
                                      expansion_point=np.zeros((2, 1)))
        with pytest.raises(ValueError, match="non-finite"):
            taylor.TaylorCoefficients(order=1, constant=np.nan,
                                      linear=np.zeros((2, 1)), quad=None,
                                      expansion_point=np.zeros((2, 1)))

    def test_objective_exact_at_expansion_point(self, rng):
        w_hat = rng.standard_normal((3, 2)) * 0.5
        z_prev = rng.standard_normal((7, 3)) * 0.5
        z_t = rng.standard_normal((7, 2)) * 0.5
        vals, _, _ = taylor.local_profiles(w_hat, z_prev, z_t, SOFTPLUS,
                                           taylor.SQUARED)
        exact = float(vals.sum()) / (2.0 * 7)
        for order in (1, 2):
            coeffs = taylor.assemble_coefficients(w_hat, z_prev, z_t,
                                                  SOFTPLUS, order)
            assert taylor.approx_objective(w_hat, coeffs, 7) == pytest.approx(
                exact, rel=1e-12)

    def test_orders_share_the_gradient_at_the_expansion_point(self, rng):
        # b_1 and b_2 + (C + C^T) w_hat agree algebraically; both equal the
        # gradient of the exact layer objective there
        for kind in (taylor.SQUARED, taylor.XENT):
            w_hat = rng.standard_normal((4, 3)) * 0.6
            z_prev = rng.standard_normal((9, 4)) * 0.5
            if kind == taylor.XENT:
                z_t = (rng.random((9, 3)) < 0.5).astype(float)
            else:
                z_t = rng.standard_normal((9, 3)) * 0.5
            c1 = taylor.assemble_coefficients(w_hat, z_prev, z_t, SOFTPLUS, 1,
                                              kind=kind)
            c2 = taylor.assemble_coefficients(w_hat, z_prev, z_t, SOFTPLUS, 2,
                                              kind=kind)
            g1 = taylor.approx_gradient(w_hat, c1, 9)
            g2 = taylor.approx_gradient(w_hat, c2, 9)
            assert max_relative_error(g2, g1) < 1e-12

    def test_gradient_matches_finite_differences_away_from_expansion(self, rng):
        w_hat = rng.standard_normal((3, 2)) * 0.5
        z_prev = rng.standard_normal((5, 3))
        z_t = rng.standard_normal((5, 2))
        for order in (1, 2):
            coeffs = taylor.assemble_coefficients(w_hat, z_prev, z_t,
                                                  SOFTPLUS, order)
            w = w_hat + 0.4 * rng.standard_normal(w_hat.shape)
            grad = taylor.approx_gradient(w, coeffs, 5)
            fd = central_difference(
                lambda v: taylor.approx_objective(v, coeffs, 5), w)
            assert max_relative_error(grad, fd) < 1e-6

    def test_identity_layer_expansion_is_exact_everywhere(self, rng):
        # with f(u) = u the local objective is a quadratic in w, so the
        # order-2 expansion reproduces it at any point, not just nearby
        w_hat = rng.standard_normal((3, 2))
        z_prev = rng.standard_normal((6, 3))
        z_t = rng.standard_normal((6, 2))
        coeffs = taylor.assemble_coefficients(w_hat, z_prev, z_t, IDENTITY, 2)
        for _ in range(3):
            w = rng.standard_normal((3, 2)) * 2.0
            vals, _, _ = taylor.local_profiles(w, z_prev, z_t, IDENTITY,
                                               taylor.SQUARED)
            exact = float(vals.sum()) / 12.0
            assert taylor.approx_objective(w, coeffs, 6) == pytest.approx(
                exact, rel=1e-10)

    def test_second_order_beats_first_order_nearby(self, rng):
        w_hat = rng.standard_normal((3, 2)) * 0.5
        z_prev = rng.standard_normal((6, 3)) * 0.7
        z_t = rng.standard_normal((6, 2)) * 0.7
        c1 = taylor.assemble_coefficients(w_hat, z_prev, z_t, SOFTPLUS, 1)
        c2 = taylor.assemble_coefficients(w_hat, z_prev, z_t, SOFTPLUS, 2)
        w = w_hat + 0.05 * rng.standard_normal(w_hat.shape)
        vals, _, _ = taylor.local_profiles(w, z_prev, z_t, SOFTPLUS,
                                           taylor.SQUARED)
        exact = float(vals.sum()) / 12.0
        err1 = abs(taylor.approx_objective(w, c1, 6) - exact)
        err2 = abs(taylor.approx_objective(w, c2, 6) - exact)
        assert err2 < err1

    def test_clipping_flows_through_assembly(self, rng):
        w_hat = rng.standard_normal((3, 2))
        z_prev = rng.standard_normal((5, 3)) * 2.0
        z_t = rng.standard_normal((5, 2)) * 2.0
        raw = taylor.assemble_coefficients(w_hat, z_prev, z_t, SOFTPLUS, 1)
        clipped = taylor.assemble_coefficients(w_hat, z_prev, z_t, SOFTPLUS, 1,
                                               grad_bound=1e-3)
        assert np.linalg.norm(clipped.linear) < np.linalg.norm(raw.linear)
        # each example contributes a rank-one stack of norm at most the bound
        assert np.linalg.norm(clipped.linear) <= 5 * 1e-3 + 1e-12

    def test_invalid_order_rejected(self, rng):
        with pytest.raises(ValueError, match="order"):
            taylor.assemble_coefficients(np.zeros((2, 1)), np.ones((1, 2)),
                                         np.ones((1, 1)), SOFTPLUS, 3)
