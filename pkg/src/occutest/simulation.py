"""Monte Carlo studies over effect sizes: power, medians, agreement, eigenvalues.

Every replicate draws from its own stream ``derive_stream(base_seed,
r_key(R), replicate)`` and results are stored in replicate order, so outputs
do not depend on how points are scheduled across worker processes.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .asymptotics import projected_eigenvalues, solve_pseudo_true
from .config import SweepConfig, r_key
from .estimation import FitStatus, fit_full_batch, fit_null_batch
from .inference import CONSTRAINT, full_info_arrays, full_score_arrays
from .linalg import sym_eigen, well_conditioned
from .model import derive_stream, sample_zero_truncated_binomial, theta_detect
from .stattests import chi2_1_isf, decide, score_statistics_arrays, wald_statistic_arrays

log = logging.getLogger(__name__)

TESTS = (
    "lrt",
    "wald",
    "score_expected",
    "score_observed",
    "score_observed_modified",
    "score_observed_positive",
)


@dataclass
class ReplicateTable:
    """Per-replicate results at one effect size. NaN marks a test that could not be computed."""

    R: float
    counts: np.ndarray  # (n, 4): s1, d1, s2, d2
    null_status: np.ndarray
    full_status: np.ndarray
    null_estimate: np.ndarray
    lrt: np.ndarray
    wald: np.ndarray
    t_exp: np.ndarray
    t_obs: np.ndarray
    eigenvalues: np.ndarray  # (n, 4) of J at the null estimate, descending

    def __len__(self):
        return len(self.null_status)


@dataclass
class PowerPoint:
    R: float
    rate: dict[str, float]
    n_valid: dict[str, int]
    n_positive_t_obs: int
    failures: dict[str, dict[str, int]] = field(default_factory=dict)


@dataclass
class MedianPoint:
    R: float
    n_valid: int
    t_exp: float
    t_obs: float
    ratio: float
    t_obs_positive: float
    t_obs_negative: float
    n_positive: int
    n_negative: int


@dataclass
class AgreementRow:
    R: float
    agreement: float
    n: int
    variant: str
    replicates: int

    @property
    def considered_fraction(self) -> float:
        return self.n / self.replicates


@dataclass
class EigenPoint:
    R: float
    n_valid: int
    median: np.ndarray
    expected: Optional[np.ndarray] = None


# --------------------------------------------------------------------------
# simulation


def _region_counts(rng: np.random.Generator, N: int, K: int, psi: float, p: float) -> tuple[int, int]:
    s = int(rng.binomial(N, psi * theta_detect(p, K)))
    return s, int(sample_zero_truncated_binomial(rng, K, p, s).sum())


def simulate_counts(config: SweepConfig, R: float, replicates: Optional[int] = None) -> np.ndarray:
    """Simulated ``(s1, d1, s2, d2)`` for each replicate at effect size ``R``."""
    n = config.replicates if replicates is None else replicates
    truth = config.truth(R)
    (g1, g2) = config.designs
    key = r_key(R)
    out = np.empty((n, 4), dtype=np.int64)
    for i in range(n):
        rng = derive_stream(config.base_seed, key, i)
        out[i, :2] = _region_counts(rng, g1.n_sites, g1.n_visits, truth.psi1, truth.p1)
        out[i, 2:] = _region_counts(rng, g2.n_sites, g2.n_visits, truth.psi2, truth.p2)
    return out


def analyze_counts(counts: np.ndarray, config: SweepConfig, R: float) -> ReplicateTable:
    """Fit both models and evaluate every statistic for a batch of datasets."""
    designs = config.designs
    s1, d1, s2, d2 = (counts[:, j].astype(float) for j in range(4))
    null = fit_null_batch(s1, d1, s2, d2, designs)
    full = fit_full_batch(s1, d1, s2, d2, designs)
    n = len(counts)

    lrt = np.full(n, np.nan)
    both = null.ok & full.ok
    lrt[both] = np.maximum(0.0, 2.0 * (full.loglik[both] - null.loglik[both]))

    wald = np.full(n, np.nan)
    wald[full.ok] = wald_statistic_arrays(full.estimate[full.ok], full.info[full.ok])

    t_obs = np.full(n, np.nan)
    t_exp = np.full(n, np.nan)
    eig = np.full((n, 4), np.nan)
    ok = null.ok
    if np.any(ok):
        to, te, _, info = score_statistics_arrays(s1[ok], d1[ok], s2[ok], d2[ok], designs, null.estimate[ok])
        t_obs[ok] = to
        t_exp[ok] = te
        eig[ok] = sym_eigen(info).values

    return ReplicateTable(
        R=float(R),
        counts=counts,
        null_status=null.status,
        full_status=full.status,
        null_estimate=null.estimate,
        lrt=lrt,
        wald=wald,
        t_exp=t_exp,
        t_obs=t_obs,
        eigenvalues=eig,
    )


def simulate_point(config: SweepConfig, R: float) -> ReplicateTable:
    return analyze_counts(simulate_counts(config, R), config, R)


def _simulate_point_args(args):
    return simulate_point(*args)


def simulate_sweep(config: SweepConfig, workers: int = 1) -> list[ReplicateTable]:
    """Replicate tables for every point of ``config.R_grid``, in grid order."""
    tasks = [(config, R) for R in config.R_grid]
    if workers <= 1 or len(tasks) <= 1:
        tables = []
        for task in tasks:
            log.info("simulating R=%g (%d replicates)", task[1], config.replicates)
            tables.append(_simulate_point_args(task))
        return tables
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_simulate_point_args, tasks))


# --------------------------------------------------------------------------
# reductions


def lower_median(values) -> float:
    """Median by exact selection: the lower middle order statistic. NaN if empty."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return float("nan")
    k = (v.size - 1) // 2
    return float(np.partition(v, k)[k])


def _status_counts(status: np.ndarray) -> dict[str, int]:
    return {s.name.lower(): int(np.sum(status == s)) for s in FitStatus}


FILTERS = ("per-test", "common")


def power_point(table: ReplicateTable, alpha: float, filtering: str = "per-test") -> PowerPoint:
    """Rejection rates of every test at one effect size.

    With ``filtering="per-test"`` a replicate counts for a test when the fits
    that test needs succeeded (null fit for score tests, full fit for Wald,
    both for the LRT). ``"common"`` keeps only replicates where every test
    could be computed, so all rates share one denominator.
    """
    if filtering not in FILTERS:
        raise ValueError(f"unknown filtering {filtering!r}")
    crit = chi2_1_isf(alpha)
    rate: dict[str, float] = {}
    n_valid: dict[str, int] = {}
    common = np.ones(len(table), dtype=bool)
    if filtering == "common":
        for stat in (table.lrt, table.wald, table.t_exp, table.t_obs):
            common &= np.isfinite(stat)

    def add(name, stat, rule="standard", mask=None):
        valid = np.isfinite(stat) & common
        if mask is not None:
            valid &= mask
        n = int(valid.sum())
        n_valid[name] = n
        rate[name] = float(decide(stat[valid], crit, rule).mean()) if n else float("nan")

    add("lrt", table.lrt)
    add("wald", table.wald)
    add("score_expected", table.t_exp)
    add("score_observed", table.t_obs)
    add("score_observed_modified", table.t_obs, rule="modified")
    with np.errstate(invalid="ignore"):
        add("score_observed_positive", table.t_obs, mask=table.t_obs > 0)
    return PowerPoint(
        R=table.R,
        rate=rate,
        n_valid=n_valid,
        n_positive_t_obs=n_valid["score_observed_positive"],
        failures={"null": _status_counts(table.null_status), "full": _status_counts(table.full_status)},
    )


def median_point(table: ReplicateTable) -> MedianPoint:
    valid = np.isfinite(table.t_obs) & np.isfinite(table.t_exp)
    te, to = table.t_exp[valid], table.t_obs[valid]
    nz = to != 0
    pos, neg = to[to > 0], to[to < 0]
    return MedianPoint(
        R=table.R,
        n_valid=int(valid.sum()),
        t_exp=lower_median(te),
        t_obs=lower_median(to),
        ratio=lower_median(te[nz] / to[nz]),
        t_obs_positive=lower_median(pos),
        t_obs_negative=lower_median(neg),
        n_positive=int(pos.size),
        n_negative=int(neg.size),
    )


def agreement_row(table: ReplicateTable, alpha: float, variant: str) -> AgreementRow:
    """Share of datasets where the expected-information and observed-information score tests agree.

    ``variant="positive"`` only counts datasets with a positive observed
    statistic and the standard rule; ``"modified"`` counts every dataset
    where both statistics exist and uses the modified rule.
    """
    crit = chi2_1_isf(alpha)
    valid = np.isfinite(table.t_obs) & np.isfinite(table.t_exp)
    if variant == "positive":
        considered = valid & (np.nan_to_num(table.t_obs) > 0)
        rule = "standard"
    elif variant == "modified":
        considered = valid
        rule = "modified"
    else:
        raise ValueError(f"unknown agreement variant {variant!r}")
    te, to = table.t_exp[considered], table.t_obs[considered]
    n = int(considered.sum())
    agree = float(np.mean(decide(te, crit) == decide(to, crit, rule))) if n else float("nan")
    return AgreementRow(table.R, agree, n, variant, len(table))


def eigen_point(table: ReplicateTable) -> EigenPoint:
    valid = np.all(np.isfinite(table.eigenvalues), axis=1)
    eig = table.eigenvalues[valid]
    return EigenPoint(table.R, int(valid.sum()), np.array([lower_median(eig[:, j]) for j in range(4)]))


# --------------------------------------------------------------------------
# studies


def run_power_sweep(
    config: SweepConfig,
    tables: Optional[Sequence[ReplicateTable]] = None,
    workers: int = 1,
    filtering: str = "per-test",
):
    tables = simulate_sweep(config, workers) if tables is None else tables
    return [power_point(t, config.alpha, filtering) for t in tables]


def run_median_curves(config: SweepConfig, tables: Optional[Sequence[ReplicateTable]] = None, workers: int = 1):
    tables = simulate_sweep(config, workers) if tables is None else tables
    return [median_point(t) for t in tables]


def run_agreement(
    config: SweepConfig,
    variant: str,
    tables: Optional[Sequence[ReplicateTable]] = None,
    workers: int = 1,
):
    tables = simulate_sweep(config, workers) if tables is None else tables
    return [agreement_row(t, config.alpha, variant) for t in tables]


def run_eigen_median_curves(
    config: SweepConfig,
    tables: Optional[Sequence[ReplicateTable]] = None,
    workers: int = 1,
    with_expected: bool = True,
):
    """Median eigenvalues of the observed information at the null fit.

    With ``with_expected`` each point also carries the eigenvalues of the
    expected information at the pseudo-true point for comparison.
    """
    from .asymptotics import expected_info_eigen_curve

    tables = simulate_sweep(config, workers) if tables is None else tables
    points = [eigen_point(t) for t in tables]
    if with_expected:
        curve = expected_info_eigen_curve(config, [p.R for p in points])
        for p, rep in zip(points, curve):
            p.expected = rep.eigenvalues
    return points


@dataclass
class Fig6Result:
    R: float
    pseudo_true: np.ndarray
    sigma: np.ndarray
    reciprocal: np.ndarray  # per replicate; NaN where J was singular


def run_fig6_experiment(config: SweepConfig, R: float, replicates: Optional[int] = None) -> Fig6Result:
    """Reciprocal leading eigenvalue of ``B(J) Sigma`` per simulated dataset.

    ``J`` is each dataset's observed information at the pseudo-true point and
    ``Sigma`` the empirical covariance of the simulated scores there.
    """
    designs = config.designs
    truth = config.truth(R)
    star = solve_pseudo_true(truth, designs).theta_null_star
    counts = simulate_counts(config, R, replicates).astype(float)
    at = np.broadcast_to(CONSTRAINT @ star.as_array(), (len(counts), 4))
    args = (counts[:, 0], counts[:, 1], counts[:, 2], counts[:, 3], designs, at)
    scores = full_score_arrays(*args)
    J = full_info_arrays(*args)
    sigma = np.cov(scores, rowvar=False, ddof=1)
    reciprocal = np.full(len(counts), np.nan)
    ok = well_conditioned(J) & well_conditioned(CONSTRAINT.T @ J @ CONSTRAINT)
    if np.any(ok):
        values = projected_eigenvalues(J[ok], sigma)
        leading = np.take_along_axis(values, np.argmax(np.abs(values), axis=1)[:, None], axis=1)[:, 0]
        reciprocal[ok] = 1.0 / leading
    return Fig6Result(float(R), star.as_array(), sigma, reciprocal)
