"""Large-sample behaviour of the observed score statistic off the null.

Under a truth ``theta_T`` the null estimate converges to the pseudo-true
point ``theta'_S`` solving ``M^T E[S(M theta')] = 0``. At that point the
score statistic is approximately the quadratic form ``S^T B S`` with::

    B = J^{-1} - M (M^T J M)^{-1} M^T

and with ``S ~ N(mu, Sigma)`` it decomposes as ``sum_j lambda_j (b_j + U_j)^2``
where ``lambda`` are the eigenvalues of ``Sigma^{1/2} B Sigma^{1/2}``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .config import SweepConfig
from .estimation import FitStatus, newton_logit
from .inference import (
    CONSTRAINT,
    Designs,
    ThetaFull,
    ThetaNull,
    expected_data,
    expected_info,
    expected_info_arrays,
    full_loglik_arrays,
    moments,
)
from .linalg import SingularMatrixError, sym_eigen, sym_sqrt, sym_sqrt_and_inv, well_conditioned

PSEUDO_TRUE_TOL = 1e-10
RANK_TOL = 1e-8
R_BISECT_TOL = 1e-4


class MatrixKind(str, enum.Enum):
    EXPECTED_INFO = "expected_info"
    OBSERVED_INFO = "observed_info"
    PROJECTED_TIMES_SIGMA = "projected_times_sigma"


@dataclass(frozen=True)
class PseudoTrue:
    theta_null_star: ThetaNull
    residual: float


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: np.ndarray
    matrix_kind: MatrixKind
    R: Optional[float] = None

    @property
    def rank(self) -> int:
        return int(np.sum(np.abs(self.eigenvalues) > RANK_TOL))

    @property
    def leading(self) -> float:
        """Eigenvalue of largest magnitude."""
        return float(self.eigenvalues[np.argmax(np.abs(self.eigenvalues))])


@dataclass(frozen=True)
class Decomposition:
    """Spectral form of the quadratic-form surrogate of the score statistic."""

    lam: np.ndarray
    P: np.ndarray
    b: np.ndarray

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` values of ``sum_j lambda_j (b_j + U_j)^2`` with ``U ~ N(0, I)``."""
        u = rng.standard_normal((n, len(self.lam)))
        return ((self.b + u) ** 2) @ self.lam

    def mean(self) -> float:
        return float(np.sum(self.lam * (self.b**2 + 1.0)))


# --------------------------------------------------------------------------
# pseudo-true parameters


def solve_pseudo_true(theta_true: ThetaFull, designs: Designs) -> PseudoTrue:
    """Null parameters where the expected null score under ``theta_true`` vanishes.

    The expected log-likelihood is the log-likelihood at expected data, so
    this is a Newton maximization of it on the logit scale; the gradient is
    ``M^T mu`` from :func:`moments`.
    """
    tt = theta_true.as_array()
    data = expected_data(tt, designs)
    M = CONSTRAINT

    def objective(x, rows):
        full = x @ M.T
        grads = np.array([CONSTRAINT.T @ moments(theta_true, ThetaNull.from_array(row), designs).mu for row in x])
        return (
            full_loglik_arrays(*data, designs, full),
            grads,
            M.T @ expected_info_arrays(tt, full, designs) @ M,
        )

    w = np.array([g.n_sites * (1 - (1 - p) ** g.n_visits) for g, p in zip(designs, (tt[1], tt[3]))])
    psi0 = float(np.dot(w, tt[[0, 2]]) / w.sum())
    x0 = np.array([[psi0, tt[1], tt[3]]])
    x, status, _ = newton_logit(objective, x0, np.array([PSEUDO_TRUE_TOL]))
    est = ThetaNull.from_array(x[0])
    residual = float(np.abs(CONSTRAINT.T @ moments(theta_true, est, designs).mu).max())
    if status[0] != FitStatus.CONVERGED or residual >= PSEUDO_TRUE_TOL:
        raise RuntimeError(f"pseudo-true solve failed (residual {residual:.3g})")
    return PseudoTrue(est, residual)


# --------------------------------------------------------------------------
# projected matrix


def projection_matrix(J) -> np.ndarray:
    """``J^{-1} - M (M^T J M)^{-1} M^T`` for (batches of) invertible 4x4 ``J``."""
    J = np.asarray(J, dtype=float)
    M = CONSTRAINT
    if not np.all(well_conditioned(J)) or not np.all(well_conditioned(M.T @ J @ M)):
        raise SingularMatrixError("information matrix or its null restriction is singular")
    eye4 = np.broadcast_to(np.eye(4), J.shape)
    J_inv = np.linalg.solve(J, eye4)
    restricted = np.linalg.solve(M.T @ J @ M, np.broadcast_to(M.T, J.shape[:-2] + (3, 4)))
    B = J_inv - M @ restricted
    return 0.5 * (B + np.swapaxes(B, -1, -2))


def projected_eigenvalues(J, Sigma) -> np.ndarray:
    """Eigenvalues of ``B Sigma`` (descending), via ``Sigma^{1/2} B Sigma^{1/2}``."""
    root = sym_sqrt(Sigma)
    C = root @ projection_matrix(J) @ root
    return sym_eigen(0.5 * (C + np.swapaxes(C, -1, -2))).values


def projected_spectrum(J, Sigma, R: Optional[float] = None, check_rank: bool = True) -> SpectralReport:
    """Spectrum of ``(J^{-1} - M (M^T J M)^{-1} M^T) Sigma``.

    The projected matrix has rank one; ``check_rank`` raises when the
    computed spectrum does not show exactly one nonzero eigenvalue.
    """
    report = SpectralReport(projected_eigenvalues(J, Sigma), MatrixKind.PROJECTED_TIMES_SIGMA, R)
    if check_rank and report.rank != 1:
        raise ArithmeticError(f"projected matrix has {report.rank} nonzero eigenvalues, expected 1")
    return report


def score_decomposition(J, Sigma, mu) -> Decomposition:
    """``Lambda``, ``P`` and ``b = P^T Sigma^{-1/2} mu`` of the score quadratic form."""
    roots = sym_sqrt_and_inv(Sigma)
    C = roots.sqrt @ projection_matrix(J) @ roots.sqrt
    lam, P = sym_eigen(0.5 * (C + C.T))
    b = P.T @ roots.inv_sqrt @ np.asarray(mu, dtype=float)
    return Decomposition(lam, P, b)


# --------------------------------------------------------------------------
# curves over effect size


@dataclass(frozen=True)
class AsymptoticPoint:
    R: float
    pseudo_true: PseudoTrue
    expected_info: SpectralReport
    projected: Optional[SpectralReport]

    @property
    def reciprocal_leading(self) -> float:
        if self.projected is None:
            return float("nan")
        return 1.0 / self.projected.leading


def asymptotic_point(config: SweepConfig, R: float) -> AsymptoticPoint:
    truth = config.truth(R)
    pt = solve_pseudo_true(truth, config.designs)
    EJ = expected_info(truth, pt.theta_null_star.expand(), config.designs)
    eig = SpectralReport(sym_eigen(EJ).values, MatrixKind.EXPECTED_INFO, R)
    try:
        sigma = moments(truth, pt.theta_null_star, config.designs).sigma
        projected = projected_spectrum(EJ, sigma, R)
    except SingularMatrixError:
        projected = None
    return AsymptoticPoint(R, pt, eig, projected)


def expected_info_eigen_curve(config: SweepConfig, R_grid: Optional[Iterable[float]] = None) -> list[SpectralReport]:
    """Eigenvalues of ``E_T[J(M theta'_S)]`` along the effect-size grid."""
    grid = config.R_grid if R_grid is None else R_grid
    out = []
    for R in grid:
        truth = config.truth(R)
        pt = solve_pseudo_true(truth, config.designs)
        EJ = expected_info(truth, pt.theta_null_star.expand(), config.designs)
        out.append(SpectralReport(sym_eigen(EJ).values, MatrixKind.EXPECTED_INFO, float(R)))
    return out


def asymptotic_curve(config: SweepConfig, R_grid: Optional[Iterable[float]] = None) -> list[AsymptoticPoint]:
    grid = config.R_grid if R_grid is None else R_grid
    return [asymptotic_point(config, float(R)) for R in grid]


def bisect_sign_change(f: Callable[[float], float], lo: float, hi: float, tol: float = R_BISECT_TOL) -> float:
    """Locate a sign change of ``f`` in ``[lo, hi]`` to within ``tol``."""
    f_lo, f_hi = f(lo), f(hi)
    if np.sign(f_lo) == np.sign(f_hi):
        raise ValueError("f has the same sign at both ends of the bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def smallest_eigenvalue(config: SweepConfig, R: float) -> float:
    return float(expected_info_eigen_curve(config, [R])[0].eigenvalues[-1])


def smallest_eigenvalue_root(config: SweepConfig, lo: float = 0.0, hi: Optional[float] = None) -> float:
    """Effect size where the smallest expected-information eigenvalue crosses zero.

    The bracket defaults to the first grid interval of ``config.R_grid``
    showing a sign change.
    """
    f = lambda R: smallest_eigenvalue(config, R)  # noqa: E731
    if hi is None:
        grid = list(config.R_grid)
        values = [f(R) for R in grid]
        for a, b, fa, fb in zip(grid, grid[1:], values, values[1:]):
            if np.sign(fa) != np.sign(fb):
                lo, hi = a, b
                break
        else:
            raise ValueError("no sign change of the smallest eigenvalue on the grid")
    return bisect_sign_change(f, lo, hi)
