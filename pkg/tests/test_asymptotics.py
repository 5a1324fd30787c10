import time

import numpy as np
import pytest
from scipy import optimize, stats

from occutest.asymptotics import (
    asymptotic_point,
    bisect_sign_change,
    expected_info_eigen_curve,
    projected_eigenvalues,
    projected_spectrum,
    projection_matrix,
    score_decomposition,
    solve_pseudo_true,
)
from occutest.config import SweepConfig, r_grid
from occutest.inference import CONSTRAINT, ThetaFull, expected_data, expected_info, full_loglik_arrays, moments
from occutest.linalg import SingularMatrixError, sym_sqrt

from conftest import STANDARD_DESIGNS


def nelder_mead_pseudo_true(truth: ThetaFull, designs):
    """Maximize the expected log-likelihood over the null directly, on the logit scale."""
    data = expected_data(truth.as_array(), designs)

    def neg(z):
        x = 1.0 / (1.0 + np.exp(-z))
        return -full_loglik_arrays(*data, designs, CONSTRAINT @ x)

    res = optimize.minimize(neg, np.zeros(3), method="Nelder-Mead",
                            options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000, "maxfev": 40000})
    return 1.0 / (1.0 + np.exp(-res.x))


def standard_truth(R):
    return ThetaFull.from_effect_size(0.8, 0.5, 0.5, R)


class TestPseudoTrue:
    def test_null_truth_is_fixed_point(self):
        truth = ThetaFull(0.7, 0.3, 0.7, 0.6)
        star = solve_pseudo_true(truth, STANDARD_DESIGNS).theta_null_star
        np.testing.assert_allclose(star.as_array(), [0.7, 0.3, 0.6], atol=1e-10)

    @pytest.mark.parametrize("R", [0.1, 0.25, 0.5, 0.75])
    def test_matches_direct_maximization(self, R):
        pt = solve_pseudo_true(standard_truth(R), STANDARD_DESIGNS)
        assert pt.residual < 1e-10
        np.testing.assert_allclose(pt.theta_null_star.as_array(), nelder_mead_pseudo_true(standard_truth(R), STANDARD_DESIGNS), atol=1e-6)

    def test_quoted_value_matches_half_decline(self):
        # (0.673, 0.532, 0.336) is reproduced at psi2 = 0.4, not psi2 = 0.6
        star = solve_pseudo_true(ThetaFull(0.8, 0.5, 0.4, 0.5), STANDARD_DESIGNS).theta_null_star
        np.testing.assert_allclose(star.as_array(), [0.673, 0.532, 0.336], atol=1e-3)
        # and the constrained mean score vanishes there, to rounding of the quoted value
        mu = moments(ThetaFull(0.8, 0.5, 0.4, 0.5), type(star)(0.673, 0.532, 0.336), STANDARD_DESIGNS).mu
        assert np.abs(CONSTRAINT.T @ mu).max() < 1.0

    def test_unequal_designs(self):
        designs = (STANDARD_DESIGNS[0], type(STANDARD_DESIGNS[0])(80, 4))
        truth = ThetaFull(0.6, 0.4, 0.3, 0.5)
        pt = solve_pseudo_true(truth, designs)
        np.testing.assert_allclose(pt.theta_null_star.as_array(), nelder_mead_pseudo_true(truth, designs), atol=1e-6)

    def test_fast(self):
        start = time.perf_counter()
        solve_pseudo_true(ThetaFull(0.8, 0.5, 0.6, 0.5), STANDARD_DESIGNS)
        assert time.perf_counter() - start < 1.0


class TestProjection:
    @pytest.fixture
    def null_info(self):
        truth = ThetaFull(0.7, 0.5, 0.7, 0.4)
        return expected_info(truth, truth, STANDARD_DESIGNS)

    def test_idempotent_trace_one(self, null_info):
        root = sym_sqrt(null_info)
        C = root @ projection_matrix(null_info) @ root
        np.testing.assert_allclose(C @ C, C, atol=1e-8)
        assert np.trace(C) == pytest.approx(1.0, abs=1e-8)

    def test_generalized_inverse_identities(self, null_info):
        B = projection_matrix(null_info)
        np.testing.assert_allclose(B @ null_info @ B, B, atol=1e-12)
        np.testing.assert_allclose(B @ null_info @ CONSTRAINT, 0.0, atol=1e-10)

    @pytest.mark.parametrize("R", [0.0, 0.3, 0.5, 0.7])
    def test_symmetric_route_matches_direct_eigenvalues(self, R):
        pt = asymptotic_point(SweepConfig(), R)
        truth = standard_truth(R)
        J = expected_info(truth, pt.pseudo_true.theta_null_star.expand(), STANDARD_DESIGNS)
        sigma = moments(truth, pt.pseudo_true.theta_null_star, STANDARD_DESIGNS).sigma
        direct = np.sort(np.linalg.eigvals(projection_matrix(J) @ sigma).real)[::-1]
        np.testing.assert_allclose(np.sort(projected_eigenvalues(J, sigma))[::-1], direct, atol=1e-9)

    def test_rank_one_over_grid(self):
        for pt in (asymptotic_point(SweepConfig(), R) for R in r_grid(0.0, 0.9, 0.1)):
            assert pt.projected is not None and pt.projected.rank == 1

    def test_singular_rejected(self):
        J = np.diag([1.0, 1.0, 0.0, 1.0])
        with pytest.raises(SingularMatrixError):
            projection_matrix(J)

    def test_rank_one_for_any_invertible_information(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            a = rng.normal(size=(4, 4))
            J = a @ a.T + np.eye(4)
            b = rng.normal(size=(4, 4))
            report = projected_spectrum(J, b @ b.T + np.eye(4))
            assert report.rank == 1


class TestDecomposition:
    def _setting(self, R):
        truth = standard_truth(R)
        star = solve_pseudo_true(truth, STANDARD_DESIGNS).theta_null_star
        J = expected_info(truth, star.expand(), STANDARD_DESIGNS)
        m = moments(truth, star, STANDARD_DESIGNS)
        return J, m

    def test_null_distribution_is_chi_square(self):
        J, m = self._setting(0.0)
        dec = score_decomposition(J, m.sigma, m.mu)
        draws = dec.sample(20_000, np.random.default_rng(1))
        assert stats.kstest(draws, "chi2", args=(1,)).pvalue > 1e-3

    @pytest.mark.parametrize("R", [0.3, 0.6])
    def test_matches_quadratic_form_of_normal_scores(self, R):
        J, m = self._setting(R)
        dec = score_decomposition(J, m.sigma, m.mu)
        rng = np.random.default_rng(2)
        S = rng.multivariate_normal(m.mu, m.sigma, size=20_000)
        B = projection_matrix(J)
        direct = np.einsum("ni,ij,nj->n", S, B, S)
        assert stats.ks_2samp(direct, dec.sample(20_000, rng)).pvalue > 1e-3
        assert dec.mean() == pytest.approx(np.trace(B @ m.sigma) + m.mu @ B @ m.mu, rel=1e-8)


class TestCurves:
    def test_expected_eigenvalues_positive_at_null(self):
        assert np.all(expected_info_eigen_curve(SweepConfig(), [0.0])[0].eigenvalues > 0)

    def test_reciprocal_sign_change(self):
        config = SweepConfig()
        values = [asymptotic_point(config, R).reciprocal_leading for R in r_grid(0.3, 0.7, 0.05)]
        signs = np.sign(values)
        assert signs[0] > 0 and signs[-1] < 0

    def test_bisection(self):
        assert bisect_sign_change(lambda x: x - 0.3, 0.0, 1.0, tol=1e-8) == pytest.approx(0.3, abs=1e-8)
        with pytest.raises(ValueError):
            bisect_sign_change(lambda x: 1.0, 0.0, 1.0)
