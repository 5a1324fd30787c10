import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from occutest.estimation import FitStatus, fit_full, fit_null
from occutest.inference import CONSTRAINT, ThetaFull, expected_info, full_info_arrays, full_score_arrays
from occutest.model import RegionDesign, RegionSummary
from occutest.stattests import (
    NotComputable,
    Rule,
    TestKind,
    TestOutcome,
    chi2_1_isf,
    chi2_1_sf,
    decide,
    gamma_q,
    lr_test,
    score_test_expected,
    score_test_observed,
    wald_test,
)

from conftest import STANDARD_DESIGNS, two_region_counts


def summaries(counts):
    s1, d1, s2, d2 = counts
    return (RegionSummary(s1, d1), RegionSummary(s2, d2))


def all_statistics(data, designs=STANDARD_DESIGNS):
    null = fit_null(data, designs)
    full = fit_full(data, designs)
    return (
        lr_test(full, null).statistic,
        wald_test(full).statistic,
        score_test_expected(data, designs, null).statistic,
        score_test_observed(data, designs, null).statistic,
    )


class TestChiSquare:
    @given(st.floats(1e-8, 200))
    def test_sf_matches_erfc(self, x):
        assert chi2_1_sf(x) == pytest.approx(math.erfc(math.sqrt(x / 2)), rel=1e-11, abs=1e-300)

    @given(st.floats(0.1, 50), st.floats(1e-6, 100))
    def test_gamma_q_matches_reference(self, a, x):
        assert gamma_q(a, x) == pytest.approx(special.gammaincc(a, x), rel=1e-10, abs=1e-280)

    def test_critical_value(self):
        assert chi2_1_isf(0.05) == pytest.approx(3.841458820694129, abs=1e-9)
        assert chi2_1_isf(0.05) == pytest.approx(stats.chi2.isf(0.05, 1), rel=1e-10)

    @pytest.mark.parametrize("alpha", [0.001, 0.01, 0.05, 0.1, 0.5])
    def test_quantile_round_trip(self, alpha):
        assert chi2_1_sf(chi2_1_isf(alpha)) == pytest.approx(alpha, abs=1e-6)

    def test_domain(self):
        assert chi2_1_sf(0.0) == 1.0
        assert chi2_1_sf(math.inf) == 0.0
        with pytest.raises(ValueError):
            chi2_1_sf(-1.0)
        with pytest.raises(ValueError):
            chi2_1_isf(1.0)


class TestDecision:
    def test_rules(self):
        crit = chi2_1_isf(0.05)
        stat = np.array([-2.0, 0.0, 1.0, 5.0, np.nan])
        assert decide(stat, crit).tolist() == [False, False, False, True, False]
        assert decide(stat, crit, "modified").tolist() == [True, False, False, True, False]

    def test_outcome_round_trip(self):
        outcome = TestOutcome(-1.5, 1, None, True, Rule.MODIFIED, TestKind.SCORE_OBSERVED, 3.84)
        assert TestOutcome.from_dict(json.loads(json.dumps(outcome.to_dict()))) == outcome


class TestStatistics:
    def test_identical_regions_give_zero(self):
        data = (RegionSummary(30, 55), RegionSummary(30, 55))
        for stat in all_statistics(data):
            assert abs(stat) < 1e-8

    @settings(max_examples=40, deadline=None)
    @given(two_region_counts())
    def test_relabeling_symmetry(self, counts):
        data = summaries(counts)
        swapped = (data[1], data[0])
        if not (fit_null(data, STANDARD_DESIGNS).converged and fit_full(data, STANDARD_DESIGNS).converged):
            return
        np.testing.assert_allclose(all_statistics(data), all_statistics(swapped), rtol=1e-6, atol=1e-8)

    @settings(max_examples=40, deadline=None)
    @given(two_region_counts())
    def test_score_quadratic_forms(self, counts):
        data = summaries(counts)
        null = fit_null(data, STANDARD_DESIGNS)
        if not null.converged:
            return
        at = CONSTRAINT @ null.estimate.as_array()
        S = full_score_arrays(*counts, STANDARD_DESIGNS, at)
        # score vanishes along the null directions
        np.testing.assert_allclose(CONSTRAINT.T @ S, 0.0, atol=1e-6)
        J = full_info_arrays(*counts, STANDARD_DESIGNS, at)
        t_obs = score_test_observed(data, STANDARD_DESIGNS, null).statistic
        assert t_obs == pytest.approx(S @ np.linalg.inv(J) @ S, rel=1e-8, abs=1e-10)
        I = expected_info(*(type(null.estimate.expand()).from_array(at),) * 2, STANDARD_DESIGNS)
        t_exp = score_test_expected(data, STANDARD_DESIGNS, null).statistic
        assert t_exp == pytest.approx(S @ np.linalg.inv(I) @ S, rel=1e-8, abs=1e-10)
        assert t_exp >= 0

    @settings(max_examples=40, deadline=None)
    @given(two_region_counts())
    def test_wald_matches_delta_method(self, counts):
        full = fit_full(summaries(counts), STANDARD_DESIGNS)
        if not full.converged:
            return
        x = full.estimate.as_array()
        cov = np.linalg.inv(full.observed_info_at_mle)
        expected = (x[0] - x[2]) ** 2 / (cov[0, 0] + cov[2, 2] - 2 * cov[0, 2])
        assert wald_test(full).statistic == pytest.approx(expected, rel=1e-8)

    def test_large_sample_agreement_under_null(self):
        designs = (RegionDesign(20_000, 3), RegionDesign(20_000, 3))
        data = (RegionSummary(10_550, 20_900), RegionSummary(10_400, 20_500))
        stats_ = all_statistics(data, designs)
        assert max(stats_) - min(stats_) < 0.05 * max(stats_)

    def test_expected_information_wald(self):
        data = (RegionSummary(30, 60), RegionSummary(12, 25))
        full = fit_full(data, STANDARD_DESIGNS)
        obs = wald_test(full)
        exp = wald_test(full, designs=STANDARD_DESIGNS, information="expected")
        assert exp.statistic > 0 and abs(exp.statistic - obs.statistic) < 0.3 * obs.statistic
        with pytest.raises(ValueError):
            wald_test(full, information="expected")

    def test_p_values(self):
        data = (RegionSummary(30, 60), RegionSummary(12, 25))
        null = fit_null(data, STANDARD_DESIGNS)
        out = score_test_observed(data, STANDARD_DESIGNS, null)
        assert out.p_value == pytest.approx(stats.chi2.sf(out.statistic, 1), rel=1e-10)
        assert out.reject == (out.p_value < 0.05)

    def test_negative_statistic_modified_rule(self):
        # a dataset whose observed information at the null fit is indefinite
        data = (RegionSummary(35, 56), RegionSummary(14, 28))
        null = fit_null(data, STANDARD_DESIGNS)
        standard = score_test_observed(data, STANDARD_DESIGNS, null)
        modified = score_test_observed(data, STANDARD_DESIGNS, null, rule="modified")
        assert standard.statistic < 0
        assert standard.p_value is None
        assert not standard.reject and modified.reject

    def test_failed_fit_not_computable(self):
        data = (RegionSummary(0, 0), RegionSummary(20, 40))
        null = fit_null(data, STANDARD_DESIGNS)
        assert null.status == FitStatus.DEGENERATE_DATA
        with pytest.raises(NotComputable):
            score_test_observed(data, STANDARD_DESIGNS, null)
        with pytest.raises(NotComputable):
            lr_test(fit_full(data, STANDARD_DESIGNS), null)
