import math
from fractions import Fraction

import numpy as np
import pytest

from conformable import (AdmissibilityError, DichotomyEstimate, FractionalOrder,
                         NonuniformDichotomy, NonuniformPerturbation, PerturbationSpec,
                         TimeMatrixFunction, conformable_integral, estimate_dichotomy,
                         estimate_nonuniform, fundamental_matrix, natural_grid,
                         nonuniform_bounded_solution, nonuniform_dichotomy_constants,
                         nonuniform_roughness_constants, nonuniform_stability_constants,
                         perturbed_projection, perturbed_projection_family,
                         projected_constants, projection_norm_bound, verify_dichotomy,
                         verify_nonuniform)
from conformable.nonuniform import anchor_sensitivity, check_commutation

from conftest import HALF, P_STABLE, SADDLE

OMEGA, AMP = 1.0, 0.25


def burst(t):
    u = HALF.clock(t)
    return np.array([[-OMEGA - AMP * u * math.sin(u)]])


def burst_log(u):
    return -OMEGA * u + AMP * (u * np.cos(u) - np.sin(u))


@pytest.fixture(scope="module")
def burst_X():
    return fundamental_matrix(HALF, TimeMatrixFunction(burst, 1, 0.0, math.inf),
                              natural_grid(HALF, 0.0, HALF.time(12.0), 121))


B_DECAY = TimeMatrixFunction(lambda t: np.array([[0.0, 0.0], [0.02 * math.exp(-t), 0.0]]), 2)


@pytest.fixture(scope="module")
def Y(saddle_X_long):
    """Perturbed saddle on clock time [0, 4]."""
    return fundamental_matrix(HALF, lambda t: SADDLE + B_DECAY(t), saddle_X_long.grid[:161])


class TestConstants:
    def test_stability_example(self):
        gamma, K = nonuniform_stability_constants(1, 1, Fraction(1, 10))
        assert K == Fraction(10, 9) and gamma == Fraction(8, 9)

    def test_stability_unperturbed(self):
        assert nonuniform_stability_constants(2.0, 0.5, 0.0) == (0.5, 2.0)

    def test_stability_boundary(self):
        with pytest.raises(AdmissibilityError):
            nonuniform_stability_constants(2, 1, Fraction(1, 2))

    def test_dichotomy_example(self):
        c = nonuniform_dichotomy_constants(1, 1, 1, 1, Fraction(1, 10), 0.5)
        assert (c.theta, c.K1, c.lambda1) == (Fraction(1, 5), Fraction(5, 4), Fraction(7, 8))
        assert c == projected_constants(1, 1, 1, 1, Fraction(1, 10))

    def test_dichotomy_unperturbed(self):
        c = nonuniform_dichotomy_constants(2.0, 3.0, 1.0, 1.5, 0.0, 0.2)
        assert (c.K1, c.K2, c.lambda1, c.lambda2) == (2.0, 3.0, 1.0, 1.5)

    def test_dichotomy_exponent_boundary(self):
        with pytest.raises(AdmissibilityError):
            nonuniform_dichotomy_constants(1, 1, 1, 1, 0.1, 1.0)

    def test_norm_bound_example(self):
        bound, eta = projection_norm_bound(HALF, 1.0, 1.0, 0.05, 0.1, 4.0)
        assert eta == pytest.approx(0.05 / 1.66, rel=1e-14)
        assert eta == pytest.approx(0.03012, abs=1e-5)
        assert bound == pytest.approx(4 * math.exp(0.1 * 4.0), rel=1e-14)

    def test_norm_bound_uniform_and_origin(self):
        assert projection_norm_bound(HALF, 1.5, 1.0, 0.05, 0.0, 9.0)[0] == 6.0
        assert projection_norm_bound(HALF, 1.5, 1.0, 0.05, 0.3, 0.0)[0] == 6.0

    def test_norm_bound_inadmissible(self):
        with pytest.raises(AdmissibilityError):
            projection_norm_bound(HALF, 1.0, 1.0, 0.3, 0.1, 1.0)

    def test_roughness_example(self):
        assert nonuniform_roughness_constants(1, 1, Fraction(1, 10)) == (5, Fraction(7, 8))
        assert nonuniform_roughness_constants(1.5, 1.0, 0.0) == (9.0, 1.0)

    def test_roughness_pole(self):
        assert nonuniform_roughness_constants(1.0, 1.0, 0.5 - 1e-8) == (math.inf, -math.inf)
        with pytest.raises(AdmissibilityError):
            nonuniform_roughness_constants(1.0, 1.0, 0.6)


class TestEstimate:
    def test_uniform_system_selects_zero(self, saddle_X):
        nd = estimate_nonuniform(saddle_X, P_STABLE)
        assert nd.eps_nonuniform == 0.0
        est = estimate_dichotomy(saddle_X, P_STABLE)
        assert (nd.N1_hat, nd.N2_hat, nd.beta1_hat, nd.beta2_hat) == (
            est.N1, est.N2, est.beta1, est.beta2)
        assert np.array_equal(nd.margins.rows, est.margins.rows)

    def test_fundamental_matrix_against_quadrature(self, burst_X):
        for t in burst_X.grid[::20]:
            integral = conformable_integral(0.5, lambda s: burst(s)[0, 0], 0.0, float(t))
            assert burst_X(t)[0, 0] == pytest.approx(math.exp(integral), rel=1e-8)
            assert burst_X(t)[0, 0] == pytest.approx(math.exp(burst_log(HALF.clock(t))), rel=1e-8)

    def test_burst_selects_positive_exponent(self, burst_X):
        nd = estimate_nonuniform(burst_X, np.eye(1))
        assert nd.eps_nonuniform > 0
        assert nd.margins.verified
        assert not nd.candidates[0].accepted
        # closed form check of the fitted bound on a finer clock grid
        u = np.linspace(0.0, 12.0, 601)
        L = burst_log(u)
        for i in range(0, u.size, 10):
            t_part = u[i:]
            lhs = L[i:] - L[i]
            rhs = (math.log(nd.N1_hat) - nd.beta1_hat * (t_part - u[i])
                   + nd.eps_nonuniform * u[i])
            assert np.all(lhs <= rhs + 1e-3)

    def test_analytic_dichotomy_verifies(self, burst_X):
        # log T(t,s) <= -(omega - a)(u_t - u_s) + 2a u_s + 2a since |u cos u - sin u| <= u + 1
        nd = NonuniformDichotomy(np.eye(1), math.exp(2 * AMP), math.exp(2 * AMP),
                                 OMEGA - AMP, OMEGA - AMP, 2 * AMP)
        assert verify_nonuniform(burst_X, nd).verified
        tight = NonuniformDichotomy(np.eye(1), math.exp(2 * AMP), 1.0, OMEGA - AMP, 1.0, 0.0)
        assert not verify_nonuniform(burst_X, tight).verified

    def test_commutation_failure(self, saddle_X):
        bad = lambda t: np.array([[1.0, 0.5], [0.0, 0.0]]) if t > 1 else P_STABLE  # noqa: E731
        assert check_commutation(saddle_X, bad, saddle_X.grid[::8]) > 1e-3
        with pytest.raises(ValueError, match="violates"):
            estimate_nonuniform(saddle_X, bad, saddle_X.grid[::8])

    def test_callable_family(self, saddle_X):
        fam = lambda t: saddle_X.solve_right(saddle_X(t) @ P_STABLE, t)  # noqa: E731
        nd = estimate_nonuniform(saddle_X, fam, saddle_X.grid[::4])
        assert nd.eps_nonuniform == 0.0 and nd.margins.verified
        with pytest.raises(ValueError):
            nd.as_estimate()

    def test_no_candidate(self, burst_X):
        with pytest.raises(ValueError, match="no candidate"):
            estimate_nonuniform(burst_X, np.eye(1), eps_candidates=(0.0,), cap=1.0)


class TestUniformConsistency:
    """With eps_nonuniform = 0 the nonuniform routines reproduce the uniform ones bit for bit."""

    def test_verify(self, saddle_X):
        nd = NonuniformDichotomy(P_STABLE, 1.0, 1.0, 1.0, 1.0, 0.0)
        a = verify_nonuniform(saddle_X, nd)
        b = verify_dichotomy(saddle_X, DichotomyEstimate(P_STABLE, 1.0, 1.0, 1.0, 1.0))
        assert np.array_equal(a.rows, b.rows) and a.min_slack == b.min_slack

    def test_bounded_solution(self, saddle_X_long):
        B = 0.05 * np.array([[0.0, 1.0], [0.0, 0.0]])
        nd = NonuniformDichotomy(P_STABLE, 1.0, 1.0, 1.0, 1.0, 0.0)
        bs = nonuniform_bounded_solution(saddle_X_long, nd, NonuniformPerturbation(B, 0.05))
        pp = perturbed_projection(saddle_X_long, nd.as_estimate(), PerturbationSpec(B, 0.05))
        assert np.array_equal(bs.U, pp.Y1)
        assert np.array_equal(bs.U[0], pp.Q)

    def test_constants(self):
        a = nonuniform_dichotomy_constants(1.0, 1.0, 1.0, 1.0, 0.1, 0.0)
        assert a == projected_constants(1.0, 1.0, 1.0, 1.0, 0.1)


class TestBoundedSolutions:
    nd = NonuniformDichotomy(P_STABLE, 1.0, 1.0, 1.0, 1.0, 0.05)
    pert = NonuniformPerturbation(B_DECAY, 0.025, weight_power=2)

    def test_grid_check(self, saddle_X_long):
        assert self.pert.grid_check(HALF, 0.05, saddle_X_long.grid) <= 1.0

    def test_residual(self, saddle_X_long):
        bs = nonuniform_bounded_solution(saddle_X_long, self.nd, self.pert)
        assert bs.residual < 10 * 1e-10
        assert np.array_equal(bs.at(0.0), bs.U[0])
        with pytest.raises(ValueError):
            bs.at(0.123456)

    def test_cocycle(self, saddle_X_long):
        grid = saddle_X_long.grid
        s, tau = grid[0], grid[40]
        U_s = nonuniform_bounded_solution(saddle_X_long, self.nd, self.pert, s=s)
        U_tau = nonuniform_bounded_solution(saddle_X_long, self.nd, self.pert, s=tau)
        for t in grid[40:200:20]:
            lhs = U_tau.at(t) @ U_s.at(tau)
            assert np.allclose(lhs, U_s.at(t), atol=1e-9)

    def test_start_not_a_node(self, saddle_X_long):
        with pytest.raises(ValueError):
            nonuniform_bounded_solution(saddle_X_long, self.nd, self.pert, s=0.3)

    def test_callable_projection_rejected(self, saddle_X_long):
        nd = NonuniformDichotomy(lambda t: P_STABLE, 1.0, 1.0, 1.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            nonuniform_bounded_solution(saddle_X_long, nd, self.pert)


class TestProjectionFamily:
    nd = NonuniformDichotomy(P_STABLE, 1.0, 1.0, 1.0, 1.0, 0.05)
    pert = NonuniformPerturbation(B_DECAY, 0.025, weight_power=2)

    def test_family_checks(self, saddle_X_long, Y):
        fam = perturbed_projection_family(saddle_X_long, Y, self.nd, self.pert)
        assert fam.idempotency_error < 1e-10
        assert fam.commutation_error < 1e-8
        assert fam.distance_slack >= 1
        assert fam.norm_slack >= 1
        assert fam.K_final == pytest.approx(4 / (1 - 0.05))
        assert fam.lambda_hat == pytest.approx(1 - 0.025 / 0.95)
        assert fam.margins.verified
        assert np.array_equal(fam(0.0), fam.P_hat[0])

    def test_weight_power_one_skips_margins(self, saddle_X_long, Y):
        pert = NonuniformPerturbation(B_DECAY, 0.025, weight_power=1)
        fam = perturbed_projection_family(saddle_X_long, Y, self.nd, pert)
        assert fam.margins is None and math.isnan(fam.K_final)

    def test_anchor_sensitivity(self, saddle_X_long, Y):
        spread = anchor_sensitivity(saddle_X_long, Y, self.nd, self.pert,
                                    [0.0, Y.grid[20]], Y.grid[20:120:10])
        assert spread < 1e-6

    def test_anchor_after_grid(self, saddle_X_long, Y):
        with pytest.raises(ValueError):
            perturbed_projection_family(saddle_X_long, Y, self.nd, self.pert,
                                        t_grid=[0.0, 1.0], iota=Y.grid[10])

    def test_bad_perturbation(self):
        with pytest.raises(ValueError):
            NonuniformPerturbation(B_DECAY, 0.0)
        with pytest.raises(ValueError):
            NonuniformPerturbation(B_DECAY, 0.1, weight_power=3)
