"""Log-likelihood, score, information matrices and score moments.

Per region, with ``theta = 1 - (1-p)^K`` and ``u = 1 - psi*theta``::

    log L = s_d log(psi) + d log(p) + (K s_d - d) log(1-p) + (N - s_d) log(u)

The log-likelihood is linear in ``(s_d, d)``, so scores and information
matrices are linear in the data too. That gives exact expected information
(evaluate at expected data) and closed-form score moments.

Array kernels (``*_terms``) broadcast over any leading batch axes and accept
real-valued data. The dataclass-level functions wrap them.

Information sign convention: ``J = -d^2 log L / d theta d theta^T``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .model import RegionDesign, RegionParams, RegionSummary, theta_detect

# Rows map (psi, p1, p2) onto (psi1, p1, psi2, p2).
CONSTRAINT = np.array(
    [[1.0, 0.0, 0.0],
     [0.0, 1.0, 0.0],
     [1.0, 0.0, 0.0],
     [0.0, 0.0, 1.0]]
)

FD_REL_STEP = 1e-5
FD_MIN_STEP = 1e-10


def _check_interior(**values):
    for name, value in values.items():
        v = np.asarray(value, dtype=float)
        if np.any(~((v > 0.0) & (v < 1.0))):
            raise ValueError(f"{name} must lie strictly inside (0, 1)")


@dataclass(frozen=True)
class ThetaFull:
    """Unconstrained parameters ``(psi1, p1, psi2, p2)``."""

    psi1: float
    p1: float
    psi2: float
    p2: float

    def __post_init__(self):
        _check_interior(psi1=self.psi1, p1=self.p1, psi2=self.psi2, p2=self.p2)

    @classmethod
    def from_array(cls, values) -> "ThetaFull":
        return cls(*(float(v) for v in values))

    def as_array(self) -> np.ndarray:
        return np.array([self.psi1, self.p1, self.psi2, self.p2])

    def region(self, j: int) -> RegionParams:
        return RegionParams(self.psi1, self.p1) if j == 0 else RegionParams(self.psi2, self.p2)

    @classmethod
    def from_effect_size(cls, psi1: float, p1: float, p2: float, R: float) -> "ThetaFull":
        """Truth with ``psi2 = (1 - R) * psi1``."""
        return cls(psi1, p1, (1.0 - R) * psi1, p2)


@dataclass(frozen=True)
class ThetaNull:
    """Null-constrained parameters ``(psi, p1, p2)``."""

    psi: float
    p1: float
    p2: float

    def __post_init__(self):
        _check_interior(psi=self.psi, p1=self.p1, p2=self.p2)

    @classmethod
    def from_array(cls, values) -> "ThetaNull":
        return cls(*(float(v) for v in values))

    def as_array(self) -> np.ndarray:
        return np.array([self.psi, self.p1, self.p2])

    def expand(self) -> ThetaFull:
        return ThetaFull(self.psi, self.p1, self.psi, self.p2)


@dataclass(frozen=True)
class MomentSet:
    """Mean ``mu`` and covariance ``sigma`` of the full score at an evaluation point."""

    mu: np.ndarray
    sigma: np.ndarray


Data = Sequence[RegionSummary]
Designs = Sequence[RegionDesign]


# --------------------------------------------------------------------------
# array kernels


def loglik_terms(s, d, N, K, psi, p):
    s, d, psi, p = (np.asarray(x, dtype=float) for x in (s, d, psi, p))
    theta = theta_detect(p, K)
    # 0 * log(0) terms vanish: s = 0 at psi > 0 etc.
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (
            np.where(s > 0, s * np.log(psi), 0.0)
            + np.where(d > 0, d * np.log(p), 0.0)
            + np.where(K * s - d > 0, (K * s - d) * np.log1p(-p), 0.0)
            + np.where(N - s > 0, (N - s) * np.log1p(-psi * theta), 0.0)
        )
    return out


def score_terms(s, d, N, K, psi, p):
    """Region score ``(S1, S2)`` stacked on the last axis."""
    s, d, psi, p = (np.asarray(x, dtype=float) for x in (s, d, psi, p))
    q = 1.0 - p
    theta = 1.0 - q**K
    u = 1.0 - psi * theta
    s1 = s / psi - (N - s) * theta / u
    s2 = d / p - (K * s - d) / q - (N - s) * psi * K * q ** (K - 1) / u
    return np.stack([s1, s2], axis=-1)


def score2_moment_form(s, d, N, K, psi, p):
    """Detection score written as ``(d - s K p)/(p q) - (N - s) psi K (1-theta)/(u q)``."""
    s, d, psi, p = (np.asarray(x, dtype=float) for x in (s, d, psi, p))
    q = 1.0 - p
    theta = 1.0 - q**K
    u = 1.0 - psi * theta
    return (d - s * K * p) / (p * q) - (N - s) * psi * K * (1.0 - theta) / (u * q)


def info_terms(s, d, N, K, psi, p):
    """Region observed information (negative Hessian), shape ``(..., 2, 2)``."""
    s, d, psi, p = (np.asarray(x, dtype=float) for x in (s, d, psi, p))
    q = 1.0 - p
    theta = 1.0 - q**K
    dtheta = K * q ** (K - 1)
    d2theta = -K * (K - 1) * q ** (K - 2) if K >= 2 else np.zeros_like(q)
    u = 1.0 - psi * theta
    rest = N - s
    j_pp = s / psi**2 + rest * theta**2 / u**2
    j_pd = rest * dtheta / u**2
    j_dd = d / p**2 + (K * s - d) / q**2 + rest * psi * (d2theta * u + psi * dtheta**2) / u**2
    return np.stack([np.stack([j_pp, j_pd], axis=-1), np.stack([j_pd, j_dd], axis=-1)], axis=-2)


def _split_full(theta):
    theta = np.asarray(theta, dtype=float)
    return theta[..., 0], theta[..., 1], theta[..., 2], theta[..., 3]


def full_loglik_arrays(s1, d1, s2, d2, designs: Designs, theta):
    psi1, p1, psi2, p2 = _split_full(theta)
    (N1, K1), (N2, K2) = ((g.n_sites, g.n_visits) for g in designs)
    return loglik_terms(s1, d1, N1, K1, psi1, p1) + loglik_terms(s2, d2, N2, K2, psi2, p2)


def full_score_arrays(s1, d1, s2, d2, designs: Designs, theta):
    psi1, p1, psi2, p2 = _split_full(theta)
    (N1, K1), (N2, K2) = ((g.n_sites, g.n_visits) for g in designs)
    return np.concatenate(
        [score_terms(s1, d1, N1, K1, psi1, p1), score_terms(s2, d2, N2, K2, psi2, p2)], axis=-1
    )


def full_info_arrays(s1, d1, s2, d2, designs: Designs, theta):
    """Block-diagonal 4x4 observed information, shape ``(..., 4, 4)``."""
    psi1, p1, psi2, p2 = _split_full(theta)
    (N1, K1), (N2, K2) = ((g.n_sites, g.n_visits) for g in designs)
    b1 = info_terms(s1, d1, N1, K1, psi1, p1)
    b2 = info_terms(s2, d2, N2, K2, psi2, p2)
    out = np.zeros(b1.shape[:-2] + (4, 4))
    out[..., :2, :2] = b1
    out[..., 2:, 2:] = b2
    return out


def expected_data(theta_true, designs: Designs):
    """``E(s_d) = N psi theta`` and ``E(d) = K N psi p`` per region as ``(s1, d1, s2, d2)``."""
    psi1, p1, psi2, p2 = _split_full(theta_true)
    out = []
    for g, psi, p in zip(designs, (psi1, psi2), (p1, p2)):
        out.append(g.n_sites * psi * theta_detect(p, g.n_visits))
        out.append(g.n_visits * g.n_sites * psi * p)
    return tuple(out)


def expected_info_arrays(theta_true, theta_eval, designs: Designs):
    return full_info_arrays(*expected_data(theta_true, designs), designs, theta_eval)


# --------------------------------------------------------------------------
# dataclass-level API


def _counts(data: Data):
    (a, b) = data
    return a.s_d, a.d, b.s_d, b.d


def region_loglik(summary: RegionSummary, design: RegionDesign, params: RegionParams) -> float:
    return float(loglik_terms(summary.s_d, summary.d, design.n_sites, design.n_visits, params.psi, params.p))


def region_score(summary: RegionSummary, design: RegionDesign, params: RegionParams) -> tuple[float, float]:
    s = score_terms(summary.s_d, summary.d, design.n_sites, design.n_visits, params.psi, params.p)
    return float(s[0]), float(s[1])


def full_loglik(data: Data, designs: Designs, theta: ThetaFull) -> float:
    return float(full_loglik_arrays(*_counts(data), designs, theta.as_array()))


def null_loglik(data: Data, designs: Designs, theta_null: ThetaNull) -> float:
    return float(full_loglik_arrays(*_counts(data), designs, CONSTRAINT @ theta_null.as_array()))


def full_score(data: Data, designs: Designs, theta: ThetaFull) -> np.ndarray:
    """Unconstrained score ``(S11, S12, S21, S22)``."""
    return full_score_arrays(*_counts(data), designs, theta.as_array())


def null_score(data: Data, designs: Designs, theta_null: ThetaNull) -> np.ndarray:
    """Constrained score ``M^T S(M theta')``."""
    return CONSTRAINT.T @ full_score_arrays(*_counts(data), designs, CONSTRAINT @ theta_null.as_array())


def _fd_steps(x: np.ndarray) -> np.ndarray:
    h = FD_REL_STEP * np.maximum(1.0, np.abs(x))
    # keep x +/- h inside (0, 1)
    room = np.minimum(x, 1.0 - x)
    h = np.where(h >= room, 0.5 * room, h)
    if np.any(h < FD_MIN_STEP):
        raise ValueError("finite-difference step shrank below 1e-10; parameter too close to the boundary")
    return h


def observed_info(
    data: Data,
    designs: Designs,
    theta: ThetaFull,
    method: Literal["analytic", "finite-difference"] = "analytic",
) -> np.ndarray:
    """Observed information ``-d^2 log L`` at ``theta``.

    ``method="finite-difference"`` uses central differences of the analytic
    score with step ``1e-5 * max(1, |theta_k|)``, then symmetrizes.
    """
    x = theta.as_array()
    counts = _counts(data)
    if method == "analytic":
        return full_info_arrays(*counts, designs, x)
    if method != "finite-difference":
        raise ValueError(f"unknown method {method!r}")
    h = _fd_steps(x)
    jac = np.empty((4, 4))
    for k in range(4):
        e = np.zeros(4)
        e[k] = h[k]
        jac[:, k] = (full_score_arrays(*counts, designs, x + e) - full_score_arrays(*counts, designs, x - e)) / (2 * h[k])
    jac = -jac
    return 0.5 * (jac + jac.T)


def expected_info(theta_true: ThetaFull, theta_eval: ThetaFull, designs: Designs) -> np.ndarray:
    """``E_{theta_true}[J(theta_eval)]``, exact: the observed information at expected data."""
    return expected_info_arrays(theta_true.as_array(), theta_eval.as_array(), designs)


# --------------------------------------------------------------------------
# score moments


def _region_moments(N, K, psi_t, p_t, psi, p, variance_term):
    theta_t = theta_detect(p_t, K)
    theta = theta_detect(p, K)
    q = 1.0 - p
    u = 1.0 - psi * theta
    pi_t = psi_t * theta_t

    e_s = N * pi_t
    var_s = N * pi_t * (1.0 - pi_t)
    e_s2 = var_s + e_s**2
    # per-site variance of a zero-truncated binomial count
    kp = K * p_t if variance_term == "truth" else K * p
    ztb_var = (K**2 * p_t**2 - K * p_t**2 + kp) / theta_t - K**2 * p_t**2 / theta_t**2
    e_var_d = e_s * ztb_var

    mu1 = N * (pi_t - psi * theta) / (psi * u)
    mu2 = N * psi_t * K * (p_t - p * theta_t) / (p * q) - N * (1.0 - pi_t) * psi * K * (1.0 - theta) / (u * q)

    sig11 = var_s / (psi**2 * u**2)
    slope = (K * p_t - K * p * theta_t) / (theta_t * p * q) + psi * K * (1.0 - theta) / (u * q)
    sig22 = e_var_d / (p**2 * q**2) + var_s * slope**2

    a = (K * p_t / theta_t - K * p) / (psi * u * p * q)
    b = psi * K * (1.0 - theta) / (psi * u**2 * q)
    e_s1s2 = (e_s2 - psi * theta * N * e_s) * a - (N * (e_s - psi * theta * N) - e_s2 + psi * theta * N * e_s) * b
    sig12 = e_s1s2 - mu1 * mu2

    return np.array([mu1, mu2]), np.array([[sig11, sig12], [sig12, sig22]])


def moments(
    theta_true: ThetaFull,
    theta_eval_null: ThetaNull,
    designs: Designs,
    variance_term: Literal["truth", "evaluation"] = "truth",
) -> MomentSet:
    """Mean and covariance under ``theta_true`` of the score at ``M theta_eval_null``.

    ``variance_term`` selects the ``K p`` term of the conditional variance of
    ``d``: ``"truth"`` uses the true detection probability (the exact
    zero-truncated binomial variance), ``"evaluation"`` the detection
    probability of the evaluation point. Only ``"truth"`` matches simulation.
    """
    if variance_term not in ("truth", "evaluation"):
        raise ValueError(f"unknown variance_term {variance_term!r}")
    ev = theta_eval_null.expand()
    mu = np.zeros(4)
    sigma = np.zeros((4, 4))
    for j, g in enumerate(designs):
        t, e = theta_true.region(j), ev.region(j)
        m, s = _region_moments(g.n_sites, g.n_visits, t.psi, t.p, e.psi, e.p, variance_term)
        mu[2 * j:2 * j + 2] = m
        sigma[2 * j:2 * j + 2, 2 * j:2 * j + 2] = s
    return MomentSet(mu, sigma)


def moments_arrays(theta_true, theta_eval_null, designs: Designs):
    """Vectorized ``(mu, sigma)`` for arrays of truths/evaluation points (``variance_term="truth"``)."""
    tt = np.asarray(theta_true, dtype=float)
    ev = np.asarray(theta_eval_null, dtype=float) @ CONSTRAINT.T
    batch = np.broadcast_shapes(tt.shape[:-1], ev.shape[:-1])
    mu = np.zeros(batch + (4,))
    sigma = np.zeros(batch + (4, 4))
    for j, g in enumerate(designs):
        m, s = _region_moments(
            g.n_sites, g.n_visits, tt[..., 2 * j], tt[..., 2 * j + 1], ev[..., 2 * j], ev[..., 2 * j + 1], "truth"
        )
        mu[..., 2 * j] = m[0]
        mu[..., 2 * j + 1] = m[1]
        sigma[..., 2 * j, 2 * j] = s[0, 0]
        sigma[..., 2 * j, 2 * j + 1] = s[0, 1]
        sigma[..., 2 * j + 1, 2 * j] = s[1, 0]
        sigma[..., 2 * j + 1, 2 * j + 1] = s[1, 1]
    return mu, sigma
