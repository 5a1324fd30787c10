"""All four tests on a single two-region dataset, with fit diagnostics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .estimation import FitResult, fit_full, fit_null
from .inference import CONSTRAINT, ThetaNull, full_info_arrays
from .linalg import sym_eigen
from .model import RegionDesign, RegionSummary
from .stattests import (
    DEFAULT_ALPHA,
    NotComputable,
    Rule,
    chi2_1_isf,
    decide,
    lr_test,
    score_test_expected,
    score_test_observed,
    wald_test,
)


@dataclass
class TestRow:
    """One test's statistic and its decisions under both rejection rules."""

    __test__ = False

    test: str
    statistic: Optional[float]
    p_value: Optional[float]
    reject_standard: Optional[bool]
    reject_modified: Optional[bool]
    note: str = ""


@dataclass
class FitRow:
    model: str
    estimate: list[Optional[float]]
    loglik: Optional[float]
    status: str
    iterations: int


@dataclass
class DatasetReport:
    alpha: float
    critical_value: float
    regions: list[dict]
    fits: list[FitRow]
    tests: list[TestRow]
    null_info_eigenvalues: Optional[list[float]] = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "DatasetReport":
        v = dict(values)
        v["fits"] = [FitRow(**f) for f in v["fits"]]
        v["tests"] = [TestRow(**t) for t in v["tests"]]
        return cls(**v)


def _finite(x) -> Optional[float]:
    x = float(x)
    return x if math.isfinite(x) else None


def _fit_row(model: str, fit: FitResult) -> FitRow:
    est = fit.estimate.as_array() if hasattr(fit.estimate, "as_array") else np.asarray(fit.estimate)
    return FitRow(model, [_finite(v) for v in est], _finite(fit.loglik), fit.status.name.lower(), int(fit.iterations))


def _test_row(name: str, run, crit: float) -> TestRow:
    try:
        outcome = run()
    except NotComputable as exc:
        return TestRow(name, None, None, None, None, str(exc))
    stat = outcome.statistic
    return TestRow(
        name,
        stat,
        outcome.p_value,
        bool(decide(stat, crit, Rule.STANDARD)),
        bool(decide(stat, crit, Rule.MODIFIED)),
    )


def analyze_dataset(
    data: Sequence[RegionSummary],
    designs: Sequence[RegionDesign],
    alpha: float = DEFAULT_ALPHA,
) -> DatasetReport:
    """Fit both models and run the LRT, Wald and both score tests.

    Tests whose fits failed are reported with an empty statistic and the
    reason in ``note``; this is a data outcome, not an error.
    """
    designs = tuple(designs)
    null = fit_null(data, designs)
    full = fit_full(data, designs)
    crit = chi2_1_isf(alpha)

    tests = [
        _test_row("lrt", lambda: lr_test(full, null, alpha), crit),
        _test_row("wald", lambda: wald_test(full, alpha), crit),
        _test_row("score_expected", lambda: score_test_expected(data, designs, null, alpha), crit),
        _test_row("score_observed", lambda: score_test_observed(data, designs, null, alpha), crit),
    ]

    eig = None
    notes = []
    if null.converged:
        x = null.estimate.as_array() if isinstance(null.estimate, ThetaNull) else np.asarray(null.estimate)
        a, b = data
        J = full_info_arrays(a.s_d, a.d, b.s_d, b.d, designs, CONSTRAINT @ x)
        eig = [float(v) for v in sym_eigen(J).values]
        if eig[-1] < 0:
            notes.append("observed information at the null fit is indefinite")
    return DatasetReport(
        alpha=float(alpha),
        critical_value=crit,
        regions=[
            {"region": j + 1, "N": g.n_sites, "K": g.n_visits, "s_d": int(s.s_d), "d": int(s.d)}
            for j, (g, s) in enumerate(zip(designs, data))
        ],
        fits=[_fit_row("null", null), _fit_row("full", full)],
        tests=tests,
        null_info_eigenvalues=eig,
        notes=notes,
    )


def format_report(report: DatasetReport) -> str:
    """Human-readable text form of a :class:`DatasetReport`."""
    lines = []
    for r in report.regions:
        lines.append(f"region {r['region']}: N={r['N']} K={r['K']} s_d={r['s_d']} d={r['d']}")
    for f in report.fits:
        est = ", ".join("-" if v is None else f"{v:.6g}" for v in f.estimate)
        ll = "nan" if f.loglik is None else f"{f.loglik:.6g}"
        lines.append(f"{f.model} fit: ({est}) loglik={ll} status={f.status} iterations={f.iterations}")
    lines.append(f"alpha={report.alpha:g} critical value={report.critical_value:.6g}")
    lines.append(f"{'test':<16}{'statistic':>12}{'p-value':>12}{'standard':>10}{'modified':>10}")

    def cell(v, fmt):
        return f"{'-':>12}" if v is None else format(v, fmt)

    for t in report.tests:
        std = "-" if t.reject_standard is None else ("reject" if t.reject_standard else "accept")
        mod = "-" if t.reject_modified is None else ("reject" if t.reject_modified else "accept")
        line = f"{t.test:<16}{cell(t.statistic, '12.6g')}{cell(t.p_value, '12.6g')}{std:>10}{mod:>10}"
        if t.note:
            line += f"  ({t.note})"
        lines.append(line)
    if report.null_info_eigenvalues is not None:
        lines.append("eigenvalues of J at null fit: " + ", ".join(f"{v:.6g}" for v in report.null_info_eigenvalues))
    lines.extend(report.notes)
    return "\n".join(lines)
