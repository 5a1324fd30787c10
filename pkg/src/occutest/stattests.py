"""Wald, likelihood-ratio and score tests of ``psi1 = psi2``.

The observed-information score statistic can be negative when the observed
information at the null estimate is indefinite. Under the ``MODIFIED`` rule
such a value is taken as evidence against the null and the test rejects.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .estimation import FitResult
from .inference import (
    CONSTRAINT,
    Designs,
    ThetaNull,
    expected_info_arrays,
    full_info_arrays,
    full_score_arrays,
)
from .linalg import quad_form_inv
from .model import RegionSummary

_EPS = 1e-16
_TINY = 1e-300
_MAX_TERMS = 10_000
DEFAULT_ALPHA = 0.05

# contrast psi1 - psi2 on (psi1, p1, psi2, p2)
PSI_CONTRAST = np.array([1.0, 0.0, -1.0, 0.0])


class NotComputable(ArithmeticError):
    """A test statistic cannot be evaluated for this dataset."""


# --------------------------------------------------------------------------
# chi-square reference distribution


def _gamma_p_series(a: float, x: float) -> float:
    total = term = 1.0 / a
    ap = a
    for _ in range(_MAX_TERMS):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_contfrac(a: float, x: float) -> float:
    # modified Lentz evaluation of the continued fraction for Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_TERMS):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma function ``Q(a, x)``."""
    if a <= 0 or x < 0:
        raise ValueError("gamma_q requires a > 0 and x >= 0")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_p_series(a, x)
    return _gamma_q_contfrac(a, x)


def chi2_1_sf(x: float) -> float:
    """Survival function of the chi-square distribution with one degree of freedom."""
    if x < 0 or math.isnan(x):
        raise ValueError(f"chi2_1_sf is defined for x >= 0, got {x!r}")
    if math.isinf(x):
        return 0.0
    return gamma_q(0.5, 0.5 * x)


def chi2_1_isf(alpha: float, tol: float = 1e-13) -> float:
    """Upper ``alpha`` quantile of chi-square(1), by bisection on :func:`chi2_1_sf`."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    lo, hi = 0.0, 1.0
    while chi2_1_sf(hi) > alpha:
        hi *= 2.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if chi2_1_sf(mid) > alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------
# outcomes


class Rule(str, enum.Enum):
    STANDARD = "standard"
    MODIFIED = "modified"


class TestKind(str, enum.Enum):
    __test__ = False  # not a pytest class

    WALD = "wald"
    LRT = "lrt"
    SCORE_EXPECTED = "score_expected"
    SCORE_OBSERVED = "score_observed"


@dataclass(frozen=True)
class TestOutcome:
    """Result of one test on one dataset.

    ``p_value`` is ``None`` when the statistic is negative; the modified rule
    defines a decision for such values but no p-value.
    """

    __test__ = False  # not a pytest class

    statistic: float
    df: int
    p_value: Optional[float]
    reject: bool
    rule: Rule
    test_kind: TestKind
    critical_value: float

    def to_dict(self) -> dict:
        out = asdict(self)
        out["rule"] = self.rule.value
        out["test_kind"] = self.test_kind.value
        return out

    @classmethod
    def from_dict(cls, values: dict) -> "TestOutcome":
        v = dict(values)
        v["rule"] = Rule(v["rule"])
        v["test_kind"] = TestKind(v["test_kind"])
        return cls(**v)


def decide(statistic, critical_value: float, rule: Rule | str = Rule.STANDARD):
    """Rejection decision(s); NaN statistics never reject."""
    rule = Rule(rule)
    stat = np.asarray(statistic, dtype=float)
    with np.errstate(invalid="ignore"):
        reject = stat > critical_value
        if rule is Rule.MODIFIED:
            reject = reject | (stat < 0)
    return reject


def _outcome(statistic: float, kind: TestKind, alpha: float, rule: Rule | str) -> TestOutcome:
    if not math.isfinite(statistic):
        raise NotComputable(f"{kind.value} statistic is not finite")
    crit = chi2_1_isf(alpha)
    p_value = chi2_1_sf(statistic) if statistic >= 0 else None
    return TestOutcome(float(statistic), 1, p_value, bool(decide(statistic, crit, rule)), Rule(rule), kind, crit)


def _require(fit: FitResult, what: str) -> None:
    if not fit.converged:
        raise NotComputable(f"{what} fit did not converge ({fit.status.name})")


# --------------------------------------------------------------------------
# statistics, vectorized over datasets


def wald_statistic_arrays(full_estimate, info):
    """``(psi1 - psi2)^2 / c^T V c`` with ``V`` the inverse of ``info``.

    Non-positive variances give NaN.
    """
    est = np.asarray(full_estimate, dtype=float)
    c = np.broadcast_to(PSI_CONTRAST, est.shape)
    var = quad_form_inv(info, c)
    diff = est[..., 0] - est[..., 2]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(var > 0, diff**2 / var, np.nan)


def score_statistics_arrays(s1, d1, s2, d2, designs: Designs, null_estimate):
    """Observed- and expected-information score statistics at ``M theta_null``.

    Returns ``(t_obs, t_exp, score, info)``; statistics are NaN where the
    respective information matrix is singular.
    """
    full = np.asarray(null_estimate, dtype=float) @ CONSTRAINT.T
    score = full_score_arrays(s1, d1, s2, d2, designs, full)
    info = full_info_arrays(s1, d1, s2, d2, designs, full)
    fisher = expected_info_arrays(full, full, designs)
    return quad_form_inv(info, score), quad_form_inv(fisher, score), score, info


# --------------------------------------------------------------------------
# single-dataset API


def wald_test(
    full_fit: FitResult,
    alpha: float = DEFAULT_ALPHA,
    designs: Optional[Designs] = None,
    information: str = "observed",
) -> TestOutcome:
    """Wald test on the probability scale.

    ``information="expected"`` uses the Fisher information at the full MLE
    instead of the observed one (requires ``designs``).
    """
    _require(full_fit, "full")
    est = full_fit.estimate.as_array()
    if information == "observed":
        var_info = full_fit.observed_info_at_mle
    elif information == "expected":
        if designs is None:
            raise ValueError("designs are required for the expected-information Wald test")
        var_info = expected_info_arrays(est, est, designs)
    else:
        raise ValueError(f"unknown information {information!r}")
    stat = float(wald_statistic_arrays(est, var_info))
    return _outcome(stat, TestKind.WALD, alpha, Rule.STANDARD)


def lr_test(full_fit: FitResult, null_fit: FitResult, alpha: float = DEFAULT_ALPHA) -> TestOutcome:
    """Likelihood-ratio test ``2 (l_full - l_null)``, floored at zero."""
    _require(full_fit, "full")
    _require(null_fit, "null")
    stat = max(0.0, 2.0 * (full_fit.loglik - null_fit.loglik))
    return _outcome(stat, TestKind.LRT, alpha, Rule.STANDARD)


def _score_inputs(data: Sequence[RegionSummary], null_fit: FitResult):
    _require(null_fit, "null")
    a, b = data
    est = null_fit.estimate
    x = est.as_array() if isinstance(est, ThetaNull) else np.asarray(est)
    return (a.s_d, a.d, b.s_d, b.d), x


def score_test_observed(
    data: Sequence[RegionSummary],
    designs: Designs,
    null_fit: FitResult,
    alpha: float = DEFAULT_ALPHA,
    rule: Rule | str = Rule.STANDARD,
) -> TestOutcome:
    """Score test with the full 4x4 observed information at the null MLE."""
    counts, x = _score_inputs(data, null_fit)
    t_obs = float(score_statistics_arrays(*counts, designs, x)[0])
    if not math.isfinite(t_obs):
        raise NotComputable("observed information at the null estimate is singular")
    return _outcome(t_obs, TestKind.SCORE_OBSERVED, alpha, rule)


def score_test_expected(
    data: Sequence[RegionSummary],
    designs: Designs,
    null_fit: FitResult,
    alpha: float = DEFAULT_ALPHA,
) -> TestOutcome:
    """Score test with the expected information under the fitted null."""
    counts, x = _score_inputs(data, null_fit)
    t_exp = float(score_statistics_arrays(*counts, designs, x)[1])
    return _outcome(t_exp, TestKind.SCORE_EXPECTED, alpha, Rule.STANDARD)
