"""Maximum-likelihood fits of the full and null-constrained models.

All fits run a damped Newton iteration on the logit scale, vectorized over a
batch of datasets. Failures are never raised; they are reported through
:class:`FitStatus`, which mirrors the filtering of failed simulations
(no convergence, non-invertible Hessian, estimates on the boundary).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .inference import (
    CONSTRAINT,
    Designs,
    ThetaFull,
    ThetaNull,
    full_info_arrays,
    full_loglik_arrays,
    full_score_arrays,
    info_terms,
    loglik_terms,
    score_terms,
)
from .linalg import well_conditioned
from .model import RegionDesign, RegionSummary, theta_detect

GRAD_TOL = 1e-8
STEP_TOL = 1e-10
MAX_ITER = 200
MAX_HALVINGS = 60
MAX_LOGIT_STEP = 10.0
BOUNDARY = 1e-6
START_CLAMP = (0.05, 0.95)
# coarse grid for the profile-likelihood start of null fits
START_GRID = np.linspace(0.02, 0.98, 49)
# iterations stop early once a parameter has run this close to 0 or 1
_ESCAPE = 1e-8
_FACE = 1e-10


class FitStatus(enum.IntEnum):
    """Outcome of a fit, ordered from best to worst."""

    CONVERGED = 0
    NO_CONVERGENCE = 1
    NON_INVERTIBLE_INFORMATION = 2
    BOUNDARY_ESTIMATE = 3
    DEGENERATE_DATA = 4


@dataclass
class FitResult:
    """One fit. With ``DEGENERATE_DATA`` no fit is attempted and the numbers are NaN."""

    estimate: ThetaFull | ThetaNull | tuple[float, float]
    loglik: float
    observed_info_at_mle: np.ndarray
    status: FitStatus
    iterations: int

    @property
    def converged(self) -> bool:
        return self.status == FitStatus.CONVERGED


@dataclass
class BatchFit:
    """Fits of many datasets; row ``i`` belongs to dataset ``i``.

    ``info`` is the observed information at the estimate on the probability
    scale (4x4 for full fits, 3x3 ``M^T J M`` for null fits, 2x2 per region).
    """

    estimate: np.ndarray
    loglik: np.ndarray
    info: np.ndarray
    status: np.ndarray
    iterations: np.ndarray

    @property
    def ok(self) -> np.ndarray:
        return self.status == FitStatus.CONVERGED

    def __len__(self):
        return len(self.status)


def _logit(x):
    return np.log(x) - np.log1p(-x)


def _expit(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


Objective = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]


def newton_logit(objective: Objective, x0: np.ndarray, grad_tol: np.ndarray, mask=None):
    """Maximize a batch of objectives over the open unit cube.

    Parameters
    ----------
    objective : callable
        ``objective(x, rows)`` returns ``(loglik, score, info)`` for the
        datasets indexed by ``rows`` at probability-scale parameters ``x``;
        ``info`` is the negative Hessian.
    x0 : ndarray, shape (B, k)
        Starting values inside (0, 1).
    grad_tol : ndarray, shape (B,)
        Convergence threshold on the max-norm of the score.
    mask : ndarray of bool, optional
        Only rows where ``mask`` is true are fitted.

    Returns
    -------
    x, status, iterations
        ``status`` is CONVERGED, NO_CONVERGENCE or BOUNDARY_ESTIMATE.

    Notes
    -----
    A coordinate that runs within 1e-8 of 0 or 1 is frozen at 1e-10 from
    that edge and the remaining coordinates are optimized on, so boundary
    estimates are the maximizer along that face. Such rows end as BOUNDARY_ESTIMATE.
    """
    x = np.array(x0, dtype=float)
    B, k = x.shape
    status = np.full(B, FitStatus.NO_CONVERGENCE, dtype=np.int64)
    iterations = np.zeros(B, dtype=np.int64)
    active = np.ones(B, dtype=bool) if mask is None else np.array(mask, dtype=bool)
    grad_tol = np.broadcast_to(np.asarray(grad_tol, dtype=float), (B,))
    frozen = np.zeros((B, k), dtype=bool)

    for it in range(MAX_ITER + 1):
        rows = np.flatnonzero(active)
        if rows.size == 0:
            break
        xa = x[rows]
        ll, g, info = objective(xa, rows)

        newly = ((xa < _ESCAPE) | (xa > 1.0 - _ESCAPE)) & ~frozen[rows]
        if np.any(newly):
            # snap onto a fixed face so nested models share the same limit
            xa = np.where(newly, np.where(xa < 0.5, _FACE, 1.0 - _FACE), xa)
            x[rows] = xa
            ll, g, info = objective(xa, rows)
            frozen[rows] |= newly
        fz = frozen[rows]
        g = np.where(fz, 0.0, g)
        on_face = fz.any(axis=1)
        small = np.abs(g).max(axis=1) < grad_tol[rows]
        status[rows[small & ~on_face]] = FitStatus.CONVERGED
        status[rows[on_face]] = FitStatus.BOUNDARY_ESTIMATE
        done = small | fz.all(axis=1)
        if it == MAX_ITER:
            done[:] = True
        active[rows[done]] = False
        keep = ~done
        if not np.any(keep):
            break
        rows, xa, ll, g, info, fz = rows[keep], xa[keep], ll[keep], g[keep], info[keep], fz[keep]
        iterations[rows] = it + 1
        # frozen coordinates drop out of the Newton system
        pair = fz[:, :, None] | fz[:, None, :]
        info = np.where(pair, 0.0, info)
        info[:, np.arange(k), np.arange(k)] = np.where(fz, 1.0, info[:, np.arange(k), np.arange(k)])

        # chain rule to the logit scale
        dx = xa * (1.0 - xa)
        g_eta = g * dx
        neg_hess = info * dx[:, :, None] * dx[:, None, :]
        neg_hess[:, np.arange(k), np.arange(k)] -= g * dx * (1.0 - 2.0 * xa)
        neg_hess[:, np.arange(k), np.arange(k)] = np.where(fz, 1.0, neg_hess[:, np.arange(k), np.arange(k)])

        # The logit map adds curvature -g x(1-x)(1-2x) that turns the logit
        # Hessian indefinite near 0 or 1 even when the likelihood is locally
        # concave, so the probability-scale Newton step is tried first.
        prob_dir, prob_pd = _newton_direction(info, g)
        logit_dir, logit_pd = _newton_direction(neg_hess, g_eta)
        gnorm = np.abs(g_eta).max(axis=1, keepdims=True)
        direction = np.where(
            prob_pd[:, None],
            prob_dir / dx,
            np.where(logit_pd[:, None], logit_dir, g_eta / np.maximum(gnorm, 1e-300)),
        )
        direction = np.where(fz, 0.0, direction)
        big = np.abs(direction).max(axis=1, keepdims=True)
        direction = direction * np.minimum(1.0, MAX_LOGIT_STEP / np.maximum(big, 1e-300))

        eta = _logit(xa)
        step = np.ones(len(rows))
        accepted = np.zeros(len(rows), dtype=bool)
        x_new = xa.copy()
        slack = 1e-12 * np.maximum(1.0, np.abs(ll))
        for _ in range(MAX_HALVINGS):
            todo = np.flatnonzero(~accepted)
            if todo.size == 0:
                break
            cand = _expit(eta[todo] + step[todo, None] * direction[todo])
            cand = np.clip(cand, 1e-300, 1.0 - 1e-16)
            ll_c = objective(cand, rows[todo])[0]
            good = np.isfinite(ll_c) & (ll_c >= ll[todo] - slack[todo])
            x_new[todo[good]] = cand[good]
            accepted[todo[good]] = True
            step[todo[~good]] *= 0.5

        tiny = np.abs(step[:, None] * direction).max(axis=1) < STEP_TOL
        stalled = ~accepted | tiny
        x[rows] = x_new
        # a stalled line search ends the iteration; the status stays
        # NO_CONVERGENCE unless the score is already small enough
        if np.any(stalled):
            srows = rows[stalled]
            _, g_s, _ = objective(x[srows], srows)
            conv = np.abs(np.where(frozen[srows], 0.0, g_s)).max(axis=1) < grad_tol[srows]
            face = frozen[srows].any(axis=1)
            status[srows[conv & ~face]] = FitStatus.CONVERGED
            active[srows] = False

    return x, status, iterations


def _newton_direction(neg_hess, grad):
    """``neg_hess^{-1} grad`` where ``neg_hess`` is positive definite, plus that mask."""
    vals, vecs = np.linalg.eigh(neg_hess)
    pd = vals.min(axis=1) > 1e-12 * np.maximum(1.0, np.abs(vals).max(axis=1))
    safe = np.where(pd[:, None], vals, 1.0)
    return np.einsum("bij,bj,bkj,bk->bi", vecs, 1.0 / safe, vecs, grad), pd


def _finish(x, status, info_fn, boundary_mask):
    """Apply boundary and invertibility checks to raw optimizer output."""
    outside = np.any((x < BOUNDARY) | (x > 1.0 - BOUNDARY), axis=1)
    status = status.copy()
    status[outside & (status < FitStatus.BOUNDARY_ESTIMATE)] = FitStatus.BOUNDARY_ESTIMATE
    status[boundary_mask] = np.maximum(status[boundary_mask], FitStatus.BOUNDARY_ESTIMATE)
    info = info_fn(x)
    singular = ~well_conditioned(info)
    status[(status == FitStatus.CONVERGED) & singular] = FitStatus.NON_INVERTIBLE_INFORMATION
    return status, info


def region_start(s, d, N, K):
    """Moment-style starting values ``(psi0, p0)`` clamped to [0.05, 0.95]."""
    s = np.asarray(s, dtype=float)
    d = np.asarray(d, dtype=float)
    lo, hi = START_CLAMP
    with np.errstate(divide="ignore", invalid="ignore"):
        p0 = np.clip(np.where(s > 0, d / (s * K), 0.5), lo, hi)
        psi0 = np.clip(s / (N * theta_detect(p0, K)), lo, hi)
    return psi0, p0


def fit_region_batch(s, d, design: RegionDesign, start=None, grad_scale=None) -> BatchFit:
    """Fit ``(psi, p)`` of one region for arrays of summaries.

    ``grad_scale`` is the sample-size factor of the gradient tolerance
    (defaults to ``n_sites``).
    """
    N, K = design.n_sites, design.n_visits
    s = np.atleast_1d(np.asarray(s, dtype=float))
    d = np.atleast_1d(np.asarray(d, dtype=float))
    if start is None:
        x0 = np.stack(region_start(s, d, N, K), axis=1)
    else:
        x0 = np.broadcast_to(np.asarray(start, dtype=float), (len(s), 2)).copy()
    degenerate = s <= 0
    # unbounded likelihood directions: every detected site detected on every
    # visit (p -> 1), single detections only (p -> 0), or every site detected
    boundary = ~degenerate & ((d >= s * K) | (d <= s) | (s >= N))

    def objective(x, rows):
        ss, dd = s[rows], d[rows]
        return (
            loglik_terms(ss, dd, N, K, x[:, 0], x[:, 1]),
            score_terms(ss, dd, N, K, x[:, 0], x[:, 1]),
            info_terms(ss, dd, N, K, x[:, 0], x[:, 1]),
        )

    tol = GRAD_TOL * (N if grad_scale is None else grad_scale)
    x, status, iters = newton_logit(objective, x0, np.full(len(s), tol), mask=~degenerate)
    status, info = _finish(x, status, lambda xx: info_terms(s, d, N, K, xx[:, 0], xx[:, 1]), boundary)
    status[degenerate] = FitStatus.DEGENERATE_DATA
    with np.errstate(divide="ignore", invalid="ignore"):
        ll = loglik_terms(s, d, N, K, x[:, 0], x[:, 1])
    # no maximum is attained without detections; report no fitted values
    x[degenerate] = np.nan
    ll[degenerate] = np.nan
    info[degenerate] = np.nan
    return BatchFit(x, ll, info, status, iters)


def fit_full_batch(s1, d1, s2, d2, designs: Designs, start=None) -> BatchFit:
    """Unconstrained fits; the likelihood factorizes, so each region is fitted alone."""
    scale = designs[0].n_sites + designs[1].n_sites
    st1 = st2 = None
    if start is not None:
        st = np.asarray(start, dtype=float)
        st1, st2 = st[..., :2], st[..., 2:]
    f1 = fit_region_batch(s1, d1, designs[0], st1, grad_scale=scale)
    f2 = fit_region_batch(s2, d2, designs[1], st2, grad_scale=scale)
    x = np.concatenate([f1.estimate, f2.estimate], axis=1)
    info = np.zeros((len(x), 4, 4))
    info[:, :2, :2] = f1.info
    info[:, 2:, 2:] = f2.info
    status = np.maximum(f1.status, f2.status)
    # both blocks invertible does not guarantee the product is well conditioned
    status[(status == FitStatus.CONVERGED) & ~well_conditioned(info)] = FitStatus.NON_INVERTIBLE_INFORMATION
    return BatchFit(x, f1.loglik + f2.loglik, info, status, np.maximum(f1.iterations, f2.iterations))


def null_start(s1, d1, s2, d2, designs: Designs):
    """Starting ``(psi0, p1_0, p2_0)``: per-region ``p0`` and a pooled ``psi0``."""
    (N1, K1), (N2, K2) = ((g.n_sites, g.n_visits) for g in designs)
    _, p1 = region_start(s1, d1, N1, K1)
    _, p2 = region_start(s2, d2, N2, K2)
    lo, hi = START_CLAMP
    psi = np.clip((s1 + s2) / (N1 * theta_detect(p1, K1) + N2 * theta_detect(p2, K2)), lo, hi)
    return np.stack([psi, p1, p2], axis=1)


def _profile_on_grid(s, d, N, K, chunk=512):
    """Region log-likelihood on ``START_GRID`` for ``psi``, maximized over ``p`` on the same grid.

    Returns ``(loglik, p)``, each of shape ``(n, grid size)``.
    """
    g = START_GRID
    log_p, log_q = np.log(g), np.log1p(-g)
    absent = np.log1p(-g[:, None] * theta_detect(g, K)[None, :])  # [psi, p]
    loglik = np.empty((len(s), g.size))
    p_best = np.empty((len(s), g.size))
    for lo in range(0, len(s), chunk):
        ss, dd = s[lo : lo + chunk], d[lo : lo + chunk]
        detected = dd[:, None] * log_p + (K * ss - dd)[:, None] * log_q
        L = detected[:, None, :] + (N - ss)[:, None, None] * absent[None]
        j = L.argmax(axis=2)
        loglik[lo : lo + chunk] = np.take_along_axis(L, j[..., None], axis=2)[..., 0] + ss[:, None] * np.log(g)
        p_best[lo : lo + chunk] = g[j]
    return loglik, p_best


def null_grid_start(s1, d1, s2, d2, designs: Designs):
    """Best point of the null log-likelihood on a coarse grid.

    With ``psi`` fixed the null likelihood separates by region, so the grid
    search is a per-region profile over ``p`` followed by a search over ``psi``.
    """
    (N1, K1), (N2, K2) = ((g.n_sites, g.n_visits) for g in designs)
    L1, p1 = _profile_on_grid(np.asarray(s1, float), np.asarray(d1, float), N1, K1)
    L2, p2 = _profile_on_grid(np.asarray(s2, float), np.asarray(d2, float), N2, K2)
    k = np.argmax(L1 + L2, axis=1)
    rows = np.arange(len(k))
    return np.stack([START_GRID[k], p1[rows, k], p2[rows, k]], axis=1)


def _better(a: BatchFit, b: BatchFit) -> BatchFit:
    """Row-wise the fit with the higher log-likelihood; ``a`` wins ties."""
    take = np.isfinite(b.loglik) & ~(a.loglik >= b.loglik)
    pick = lambda u, v: np.where(take.reshape((-1,) + (1,) * (u.ndim - 1)), v, u)  # noqa: E731
    return BatchFit(*(pick(u, v) for u, v in zip(
        (a.estimate, a.loglik, a.info, a.status, a.iterations),
        (b.estimate, b.loglik, b.info, b.status, b.iterations),
    )))


def fit_null_batch(s1, d1, s2, d2, designs: Designs, start=None) -> BatchFit:
    """Fits of ``(psi, p1, p2)`` under ``psi1 = psi2``; ``info`` is ``M^T J M``.

    The null likelihood can have two local maxima in ``psi`` when the regions
    disagree (one explained by a small ``p``, the other by a small ``psi``).
    Without an explicit ``start`` the fit is run from the moment start and
    from the best point of a coarse grid, and the higher maximum is kept.
    """
    s1, d1, s2, d2 = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (s1, d1, s2, d2))
    if start is None:
        a = _fit_null_from(s1, d1, s2, d2, designs, null_start(s1, d1, s2, d2, designs))
        b = _fit_null_from(s1, d1, s2, d2, designs, null_grid_start(s1, d1, s2, d2, designs))
        return _better(a, b)
    x0 = np.broadcast_to(np.asarray(start, dtype=float), (len(s1), 3)).copy()
    return _fit_null_from(s1, d1, s2, d2, designs, x0)


def _fit_null_from(s1, d1, s2, d2, designs: Designs, x0) -> BatchFit:
    (N1, K1), (N2, K2) = ((g.n_sites, g.n_visits) for g in designs)

    degenerate = (s1 <= 0) | (s2 <= 0)
    # With psi shared, extreme detection counts in one region still leave an
    # interior optimum for that region's p; only all sites detected in both
    # regions forces psi -> 1.
    boundary = ~degenerate & (s1 >= N1) & (s2 >= N2)
    M = CONSTRAINT

    def objective(x, rows):
        full = x @ M.T
        args = (s1[rows], d1[rows], s2[rows], d2[rows], designs, full)
        return (
            full_loglik_arrays(*args),
            full_score_arrays(*args) @ M,
            M.T @ full_info_arrays(*args) @ M,
        )

    tol = GRAD_TOL * (N1 + N2)
    x, status, iters = newton_logit(objective, x0, np.full(len(s1), tol), mask=~degenerate)
    status, info = _finish(
        x, status, lambda xx: M.T @ full_info_arrays(s1, d1, s2, d2, designs, xx @ M.T) @ M, boundary
    )
    status[degenerate] = FitStatus.DEGENERATE_DATA
    with np.errstate(divide="ignore", invalid="ignore"):
        ll = full_loglik_arrays(s1, d1, s2, d2, designs, x @ M.T)
    x[degenerate] = np.nan
    ll[degenerate] = np.nan
    info[degenerate] = np.nan
    return BatchFit(x, ll, info, status, iters)


# --------------------------------------------------------------------------
# single-dataset API


def _one(batch: BatchFit, wrap) -> FitResult:
    x = batch.estimate[0]
    status = FitStatus(int(batch.status[0]))
    try:
        estimate = wrap(x)
    except ValueError:
        estimate = tuple(float(v) for v in x)
    return FitResult(estimate, float(batch.loglik[0]), batch.info[0], status, int(batch.iterations[0]))


def fit_region(summary: RegionSummary, design: RegionDesign, start=None) -> FitResult:
    """Fit one region. ``estimate`` is a ``(psi, p)`` tuple."""
    summary.validate(design)
    batch = fit_region_batch([summary.s_d], [summary.d], design, start)
    return _one(batch, lambda x: (float(x[0]), float(x[1])))


def fit_full(data: Sequence[RegionSummary], designs: Designs, start=None) -> FitResult:
    """Fit the four-parameter model; status is the worse of the two region fits."""
    for summary, design in zip(data, designs):
        summary.validate(design)
    a, b = data
    batch = fit_full_batch([a.s_d], [a.d], [b.s_d], [b.d], designs, start)
    return _one(batch, ThetaFull.from_array)


def fit_null(data: Sequence[RegionSummary], designs: Designs, start=None) -> FitResult:
    """Fit the null model ``psi1 = psi2``. ``observed_info_at_mle`` is ``M^T J M``."""
    for summary, design in zip(data, designs):
        summary.validate(design)
    a, b = data
    batch = fit_null_batch([a.s_d], [a.d], [b.s_d], [b.d], designs, start)
    return _one(batch, ThetaNull.from_array)
