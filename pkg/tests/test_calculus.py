import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conformable import (DEFAULT_QUADRATURE, FractionalOrder, QuadratureConfig, ScalarSignal,
                         conformable_derivative, conformable_integral, gronwall_bound,
                         ml_quotient, ml_scalar)
from conformable.exceptions import DomainError

alphas = st.floats(0.2, 1.0)


def mp_ml(alpha, lam, t):
    t = mpmath.mpf(t)
    u = mpmath.sign(t) * abs(t) ** alpha / alpha
    return float(mpmath.e ** (lam * u))


class TestOrder:
    @pytest.mark.parametrize("bad", [0.0, -0.1, 1.5, float("nan")])
    def test_rejects_out_of_range(self, bad):
        with pytest.raises(ValueError):
            FractionalOrder(bad)

    def test_clock_round_trip(self):
        o = FractionalOrder(0.3)
        t = np.array([-2.0, -0.1, 0.0, 0.5, 7.0])
        assert np.allclose(o.time(o.clock(t)), t, rtol=1e-14, atol=0)

    def test_quadrature_config_validation(self):
        with pytest.raises(ValueError):
            QuadratureConfig(rel_tol=0.0)
        with pytest.raises(ValueError):
            QuadratureConfig(max_subdivisions=0)


class TestMittagLeffler:
    def test_decay_example(self):
        assert ml_scalar(0.5, -1.0, 4.0) == pytest.approx(mp_ml(0.5, -1, 4), rel=1e-14)
        assert ml_scalar(0.5, -1.0, 4.0) == pytest.approx(0.0183156, rel=1e-5)

    def test_alpha_one_is_exponential(self):
        assert ml_scalar(1.0, 2.0, 3.0) == pytest.approx(math.exp(6.0), rel=1e-14)

    @pytest.mark.parametrize("alpha", [0.1, 0.5, 1.0])
    def test_origin(self, alpha):
        assert ml_scalar(alpha, 3.7, 0.0) == 1.0

    def test_negative_branch(self):
        assert ml_scalar(0.5, 1.0, -4.0) == pytest.approx(mp_ml(0.5, 1, -4), rel=1e-14)

    def test_overflow_raises(self):
        with pytest.raises(OverflowError):
            ml_scalar(0.5, 1.0, 1e6)

    def test_quotient_avoids_overflow(self):
        q = ml_quotient(0.5, 1.0, 1e6 - 1.0, 1e6)
        assert 0 < q < 1

    @given(alphas, st.floats(-5, 5), st.floats(-20, 20))
    def test_reciprocity(self, alpha, lam, t):
        assert ml_scalar(alpha, lam, t) * ml_scalar(alpha, -lam, t) == pytest.approx(1.0, rel=1e-12)

    @given(alphas, st.floats(0.01, 3), st.floats(0, 10), st.floats(0.001, 5))
    def test_monotone_for_positive_rate(self, alpha, lam, t, dt):
        assert ml_scalar(alpha, lam, t + dt) >= ml_scalar(alpha, lam, t)


class TestDerivative:
    def test_power(self):
        # T^a t^p = p t^(p - a)
        assert conformable_derivative(0.5, lambda t: t * t, 4.0) == pytest.approx(16.0, rel=1e-8)

    def test_constant(self):
        assert conformable_derivative(0.7, lambda t: 3.0, 1.3) == pytest.approx(0.0, abs=1e-12)

    def test_sine(self):
        # T^a sin(bt) = b |t|^(1-a) cos(bt)
        got = conformable_derivative(0.5, lambda t: math.sin(2 * t), 1.0)
        assert got == pytest.approx(2 * math.cos(2.0), rel=1e-8)
        assert got == pytest.approx(-0.83229, abs=1e-5)

    def test_limit_at_origin(self):
        o = FractionalOrder(0.5)
        # the clock itself has derivative 1 everywhere, including the limit at 0
        assert conformable_derivative(o, o.clock, 0.0, step=1e-6) == pytest.approx(1.0, rel=1e-6)

    def test_domain(self):
        f = ScalarSignal(lambda t: t, 0.0, 1.0)
        with pytest.raises(DomainError):
            conformable_derivative(0.5, f, 1.0, step=1e-3)

    def test_step_must_be_positive(self):
        with pytest.raises(ValueError):
            conformable_derivative(0.5, math.sin, 1.0, step=0.0)


class TestIntegral:
    def test_constant_from_origin(self):
        assert conformable_integral(0.5, lambda s: 1.0, 0.0, 1.0) == pytest.approx(2.0, rel=1e-12)

    @pytest.mark.parametrize("alpha", [0.2, 0.5, 0.9])
    def test_weight_cancels(self, alpha):
        f = lambda s: abs(s) ** (1 - alpha)  # noqa: E731
        assert conformable_integral(alpha, f, 1.0, 3.0) == pytest.approx(2.0, rel=1e-10)

    def test_linear_from_origin(self):
        assert conformable_integral(0.5, lambda s: s, 0.0, 4.0) == pytest.approx(16 / 3, rel=1e-12)

    def test_straddles_origin(self):
        # int_{-1}^{1} |s|^{-1/2} ds = 4
        assert conformable_integral(0.5, lambda s: 1.0, -1.0, 1.0) == pytest.approx(4.0, rel=1e-12)

    def test_orientation(self):
        a = conformable_integral(0.5, math.cos, 0.3, 2.0)
        b = conformable_integral(0.5, math.cos, 2.0, 0.3)
        assert a == pytest.approx(-b, rel=1e-13)

    def test_domain_violation(self):
        with pytest.raises(DomainError):
            conformable_integral(0.5, ScalarSignal(math.exp, 0.0, 1.0), 0.0, 2.0)

    @given(alphas, st.floats(0.2, 3), st.floats(0.1, 3), st.floats(-2, 2))
    def test_matches_mpmath_on_raw_integrand(self, alpha, t0, length, k):
        f = lambda s: math.sin(k * s) + s * s  # noqa: E731
        t = t0 + length
        want = mpmath.quad(lambda s: abs(s) ** (alpha - 1) * (mpmath.sin(k * s) + s * s), [t0, t])
        assert conformable_integral(alpha, f, t0, t) == pytest.approx(float(want), rel=1e-8, abs=1e-10)


class TestCalculusProperties:
    @given(alphas, st.floats(-1.5, 1.5), st.floats(0.5, 3.0))
    def test_derivative_inverts_integral(self, alpha, k, t):
        f = lambda s: math.exp(k * s) * math.cos(s)  # noqa: E731
        F = lambda s: conformable_integral(alpha, f, 0.3, s)  # noqa: E731
        assert conformable_derivative(alpha, F, t, step=1e-4) == pytest.approx(f(t), rel=1e-6, abs=1e-6)

    @given(alphas, st.floats(-3, 3), st.floats(-3, 3), st.floats(0.5, 3.0))
    def test_linearity(self, alpha, a, b, t):
        f, g = math.sin, math.exp
        lhs = conformable_derivative(alpha, lambda s: a * f(s) + b * g(s), t)
        rhs = a * conformable_derivative(alpha, f, t) + b * conformable_derivative(alpha, g, t)
        assert lhs == pytest.approx(rhs, rel=1e-6, abs=1e-6)

    @given(alphas, st.floats(0.5, 3.0))
    def test_product_rule(self, alpha, t):
        f, g = math.sin, lambda s: s ** 3 + 1
        lhs = conformable_derivative(alpha, lambda s: f(s) * g(s), t)
        rhs = f(t) * conformable_derivative(alpha, g, t) + g(t) * conformable_derivative(alpha, f, t)
        assert lhs == pytest.approx(rhs, rel=1e-6, abs=1e-6)

    @given(alphas, st.floats(0.5, 2.0))
    def test_chain_rule_with_weight(self, alpha, t):
        # T^a (f o g) = |g|^(a-1) (T^a f)(g) T^a g for monotone g
        f, g = math.sin, lambda s: s * s + 0.5
        lhs = conformable_derivative(alpha, lambda s: f(g(s)), t)
        rhs = abs(g(t)) ** (alpha - 1) * conformable_derivative(alpha, f, g(t)) \
            * conformable_derivative(alpha, g, t)
        assert lhs == pytest.approx(rhs, rel=1e-6, abs=1e-6)


class TestGronwall:
    def test_classical_limit(self):
        b = gronwall_bound(1.0, lambda t: 2.0, lambda t: 0.7, 1.0, 3.0)
        assert b.sharp == pytest.approx(2.0 * math.exp(0.7 * 2.0), rel=1e-10)

    def test_half_order(self):
        b = gronwall_bound(0.5, lambda t: 1.0, lambda t: 1.0, 0.0, 1.0)
        assert b.sharp == pytest.approx(math.exp(2.0), rel=1e-10)

    def test_zero_rate(self):
        b = gronwall_bound(0.4, lambda t: 1.0 + t, lambda t: 0.0, 0.0, 2.0)
        assert b.sharp == pytest.approx(3.0, rel=1e-14)

    def test_negative_input_rejected(self):
        with pytest.raises(ValueError):
            gronwall_bound(0.5, lambda t: 1.0, lambda t: math.sin(5 * t), 0.0, 2.0)

    @given(alphas, st.floats(0.0, 2.0), st.floats(0.0, 2.0), st.floats(0.1, 3.0))
    def test_sharp_below_coarse(self, alpha, c, t0, length):
        f = lambda s: c * (1 + math.cos(s)) / 2  # noqa: E731
        b = gronwall_bound(alpha, lambda s: 1.0 + s, f, t0, t0 + length)
        assert b.sharp <= b.coarse * (1 + 1e-12)

    def test_bound_dominates_solution(self):
        # u = a + I(f u) with equality: u(t) = exp(I f) for a = 1
        o = FractionalOrder(0.5)
        b = gronwall_bound(o, lambda t: 1.0, lambda t: 0.5, 0.0, 2.0)
        exact = math.exp(0.5 * o.clock(2.0))
        assert b.sharp == pytest.approx(exact, rel=1e-10)
        assert DEFAULT_QUADRATURE.rel_tol == 1e-10
