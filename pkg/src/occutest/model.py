"""Two-sample occupancy data model: ZIB distribution and data simulation.

Data are generated at the sufficient-statistic level: for each region the
number of sites with at least one detection ``s_d`` and the total number of
detections ``d``. The likelihood only depends on these two counts.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

# Below this acceptance rate the rejection sampler for the zero-truncated
# binomial is replaced by inverse-CDF sampling.
_REJECTION_MIN_ACCEPT = 0.25


@dataclass(frozen=True)
class RegionDesign:
    """Survey geometry of one region: ``n_sites`` sites visited ``n_visits`` times."""

    n_sites: int
    n_visits: int

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < 1:
            raise ValueError(f"n_sites must be a positive integer, got {self.n_sites!r}")
        if int(self.n_visits) != self.n_visits or self.n_visits < 1:
            raise ValueError(f"n_visits must be a positive integer, got {self.n_visits!r}")


@dataclass(frozen=True)
class RegionParams:
    """Occupancy ``psi`` and per-visit detection ``p`` of one region."""

    psi: float
    p: float

    def __post_init__(self):
        for name in ("psi", "p"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {value!r}")


@dataclass(frozen=True)
class RegionSummary:
    """Sufficient statistics of one region.

    ``s_d`` is the number of sites with at least one detection and ``d`` the
    total number of detections over all sites and visits.
    """

    s_d: int
    d: int

    def validate(self, design: RegionDesign) -> None:
        """Raise ``ValueError`` unless the counts are possible under ``design``."""
        s_d, d = self.s_d, self.d
        if not 0 <= s_d <= design.n_sites:
            raise ValueError(f"s_d={s_d} outside [0, {design.n_sites}]")
        if not s_d <= d <= s_d * design.n_visits:
            raise ValueError(f"d={d} outside [{s_d}, {s_d * design.n_visits}]")


@dataclass(frozen=True)
class TwoSampleConfig:
    """Designs of both regions, true parameters and the base seed of a study."""

    design_1: RegionDesign
    design_2: RegionDesign
    truth: "ThetaFull"
    base_seed: int = 0

    def __post_init__(self):
        if not 0 <= self.base_seed < 2**64:
            raise ValueError("base_seed must be a 64-bit unsigned integer")

    @property
    def designs(self) -> tuple[RegionDesign, RegionDesign]:
        return (self.design_1, self.design_2)


def theta_detect(p, K):
    """Probability of at least one detection in ``K`` visits, ``1 - (1 - p)**K``."""
    return 1.0 - (1.0 - p) ** K


def zib_pmf(y: int, params: RegionParams, K: int) -> float:
    """Zero-inflated binomial probability of ``y`` detections in ``K`` visits."""
    if not 0 <= y <= K:
        raise ValueError(f"y={y} outside [0, {K}]")
    psi, p = params.psi, params.p
    occupied = comb(K, y) * p**y * (1.0 - p) ** (K - y)
    if y == 0:
        return 1.0 - psi + psi * occupied
    return psi * occupied


def derive_stream(base_seed: int, r_index: int, replicate: int) -> np.random.Generator:
    """Independent random stream for one replicate of one sweep point.

    The triple is fed to :class:`numpy.random.SeedSequence` as 32-bit words,
    so the mapping is stable across platforms and Python versions.
    """
    seq = np.random.SeedSequence([int(base_seed), int(r_index), int(replicate)])
    return np.random.Generator(np.random.PCG64(seq))


def zero_truncated_binomial_pmf(K: int, p: float) -> np.ndarray:
    """Probabilities of ``1..K`` for a Binomial(K, p) conditioned on being positive."""
    y = np.arange(1, K + 1)
    pmf = np.array([comb(K, int(k)) for k in y], dtype=float) * p**y * (1.0 - p) ** (K - y)
    return pmf / theta_detect(p, K)


def sample_zero_truncated_binomial(rng: np.random.Generator, K: int, p: float, size: int) -> np.ndarray:
    """Draw ``size`` variates from Binomial(K, p) conditioned on being positive."""
    if size == 0:
        return np.zeros(0, dtype=np.int64)
    accept = theta_detect(p, K)
    if accept >= _REJECTION_MIN_ACCEPT:
        out = rng.binomial(K, p, size=size)
        zeros = np.flatnonzero(out == 0)
        while zeros.size:
            out[zeros] = rng.binomial(K, p, size=zeros.size)
            zeros = zeros[out[zeros] == 0]
        return out
    cdf = np.cumsum(zero_truncated_binomial_pmf(K, p))
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(size), side="right").astype(np.int64) + 1


def simulate_region(design: RegionDesign, params: RegionParams, stream: np.random.Generator) -> RegionSummary:
    """Simulate the sufficient statistics of one region.

    ``s_d`` is Binomial(N, psi * theta); given ``s_d``, ``d`` is the sum of
    ``s_d`` zero-truncated Binomial(K, p) variates.
    """
    K = design.n_visits
    s_d = int(stream.binomial(design.n_sites, params.psi * theta_detect(params.p, K)))
    d = int(sample_zero_truncated_binomial(stream, K, params.p, s_d).sum())
    return RegionSummary(s_d, d)
