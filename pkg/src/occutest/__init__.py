"""Tests of equal occupancy in two regions under imperfect detection.

The likelihood-ratio, Wald and score tests are provided, including the score
test with observed information and its modified rejection rule, together with
the asymptotic diagnostics and Monte Carlo studies of their behaviour.
"""

__version__ = "0.1.0"

from .analysis import DatasetReport, analyze_dataset
from .asymptotics import (
    projected_spectrum,
    score_decomposition,
    smallest_eigenvalue_root,
    solve_pseudo_true,
)
from .config import SweepConfig
from .estimation import FitResult, FitStatus, fit_full, fit_null, fit_region
from .inference import (
    CONSTRAINT,
    ThetaFull,
    ThetaNull,
    expected_info,
    full_loglik,
    full_score,
    moments,
    null_loglik,
    null_score,
    observed_info,
)
from .linalg import sym_eigen, sym_sqrt
from .model import RegionDesign, RegionParams, RegionSummary, derive_stream, simulate_region, zib_pmf
from .stattests import (
    Rule,
    TestOutcome,
    chi2_1_isf,
    chi2_1_sf,
    lr_test,
    score_test_expected,
    score_test_observed,
    wald_test,
)

__all__ = [
    "CONSTRAINT",
    "DatasetReport",
    "FitResult",
    "FitStatus",
    "RegionDesign",
    "RegionParams",
    "RegionSummary",
    "Rule",
    "SweepConfig",
    "TestOutcome",
    "ThetaFull",
    "ThetaNull",
    "analyze_dataset",
    "chi2_1_isf",
    "chi2_1_sf",
    "derive_stream",
    "expected_info",
    "fit_full",
    "fit_null",
    "fit_region",
    "full_loglik",
    "full_score",
    "lr_test",
    "moments",
    "null_loglik",
    "null_score",
    "observed_info",
    "projected_spectrum",
    "score_decomposition",
    "score_test_expected",
    "score_test_observed",
    "simulate_region",
    "smallest_eigenvalue_root",
    "solve_pseudo_true",
    "sym_eigen",
    "sym_sqrt",
    "wald_test",
    "zib_pmf",
]
