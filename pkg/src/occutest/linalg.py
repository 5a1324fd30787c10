"""Small dense symmetric linear algebra (n <= 4), batched over leading axes.

The eigensolver is a cyclic Jacobi iteration. Every matrix in a batch is
rotated in the same ``(p, q)`` plane at each step, each with its own angle,
so thousands of 4x4 problems are solved in a handful of numpy operations.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

SYMMETRY_RTOL = 1e-8
OFFDIAG_TOL = 1e-12
PSD_CLIP = 1e-10
INVERSE_MIN_EIG = 1e-12
MAX_CONDITION = 1e12
_MAX_SWEEPS = 60


class SingularMatrixError(ValueError):
    """Raised when a matrix that must be inverted is (numerically) singular."""


class SymEigen(NamedTuple):
    values: np.ndarray
    vectors: np.ndarray


class SymRoots(NamedTuple):
    sqrt: np.ndarray
    inv: np.ndarray
    inv_sqrt: np.ndarray


def check_symmetric(a: np.ndarray, rtol: float = SYMMETRY_RTOL) -> None:
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    scale = np.maximum(np.abs(a).max(axis=(-2, -1), initial=0.0), 1.0)
    asym = np.abs(a - np.swapaxes(a, -1, -2)).max(axis=(-2, -1), initial=0.0)
    if np.any(asym > rtol * scale):
        raise ValueError("matrix is not symmetric")


def _offdiag_norm(a: np.ndarray) -> np.ndarray:
    n = a.shape[-1]
    mask = ~np.eye(n, dtype=bool)
    return np.sqrt((a[..., mask] ** 2).sum(axis=-1))


def sym_eigen(matrix) -> SymEigen:
    """Eigen-decomposition of real symmetric matrices by cyclic Jacobi rotations.

    Parameters
    ----------
    matrix : array_like, shape (..., n, n)
        Symmetric matrices, ``n <= 4`` in practice (any ``n`` works).

    Returns
    -------
    SymEigen
        ``values`` sorted in descending order with shape ``(..., n)`` and
        orthonormal eigenvectors as the columns of ``vectors``.
    """
    a = np.array(matrix, dtype=float)
    check_symmetric(a)
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    n = a.shape[-1]
    batch = a.shape[:-2]
    v = np.broadcast_to(np.eye(n), a.shape).copy()
    tol = OFFDIAG_TOL * np.maximum(1.0, np.sqrt((a**2).sum(axis=(-2, -1))))

    for _ in range(_MAX_SWEEPS):
        if np.all(_offdiag_norm(a) < tol):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[..., p, q]
                active = np.abs(apq) > 0.0
                if not np.any(active):
                    continue
                safe = np.where(active, apq, 1.0)
                # a denormal apq overflows tau to inf, which correctly gives t = 0
                with np.errstate(over="ignore"):
                    tau = (a[..., q, q] - a[..., p, p]) / (2.0 * safe)
                    t = np.where(tau >= 0.0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
                t = np.where(active, t, 0.0)
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                rot = np.broadcast_to(np.eye(n), batch + (n, n)).copy()
                rot[..., p, p] = c
                rot[..., q, q] = c
                rot[..., p, q] = s
                rot[..., q, p] = -s
                a = np.swapaxes(rot, -1, -2) @ a @ rot
                a[..., p, q] = 0.0
                a[..., q, p] = 0.0
                v = v @ rot

    values = np.diagonal(a, axis1=-2, axis2=-1).copy()
    order = np.argsort(-values, axis=-1, kind="stable")
    values = np.take_along_axis(values, order, axis=-1)
    vectors = np.take_along_axis(v, order[..., None, :], axis=-1)
    return SymEigen(values, vectors)


def _from_eigen(vectors: np.ndarray, values: np.ndarray) -> np.ndarray:
    out = (vectors * values[..., None, :]) @ np.swapaxes(vectors, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def sym_sqrt(matrix) -> np.ndarray:
    """Symmetric square root of a positive semi-definite matrix."""
    values, vectors = sym_eigen(matrix)
    if np.any(values < -PSD_CLIP):
        raise ValueError(f"matrix is not positive semi-definite (min eigenvalue {values.min():.3g})")
    return _from_eigen(vectors, np.sqrt(np.clip(values, 0.0, None)))


def sym_sqrt_and_inv(matrix) -> SymRoots:
    """Square root, inverse and inverse square root of an SPD matrix.

    Eigenvalues in ``[-1e-10, 0)`` are clipped to zero; the inverse paths
    then require the smallest eigenvalue to exceed ``1e-12``.
    """
    values, vectors = sym_eigen(matrix)
    if np.any(values < -PSD_CLIP):
        raise ValueError(f"matrix is not positive semi-definite (min eigenvalue {values.min():.3g})")
    values = np.clip(values, 0.0, None)
    if np.any(values <= INVERSE_MIN_EIG):
        raise SingularMatrixError("matrix is singular; inverse square root undefined")
    root = np.sqrt(values)
    return SymRoots(
        _from_eigen(vectors, root),
        _from_eigen(vectors, 1.0 / values),
        _from_eigen(vectors, 1.0 / root),
    )


def well_conditioned(matrix, max_condition: float = MAX_CONDITION) -> np.ndarray:
    """Boolean mask of matrices whose 2-norm condition number is at most ``max_condition``.

    Matrices with non-finite entries are reported as not well conditioned.
    """
    a = np.asarray(matrix, dtype=float)
    finite = np.all(np.isfinite(a), axis=(-2, -1))
    # SVD fails on NaN, so those entries are replaced before taking the condition number
    safe = np.where(finite[..., None, None], a, np.eye(a.shape[-1]))
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.linalg.cond(safe)
    return finite & np.isfinite(cond) & (cond <= max_condition)


def solve(matrix, rhs) -> np.ndarray:
    """Batched LU solve (partial pivoting). Singular or ill-conditioned systems give NaN."""
    a = np.asarray(matrix, dtype=float)
    b = np.asarray(rhs, dtype=float)
    ok = well_conditioned(a)
    eye = np.broadcast_to(np.eye(a.shape[-1]), a.shape)
    a_safe = np.where(ok[..., None, None], a, eye)
    x = np.linalg.solve(a_safe, b[..., None])[..., 0]
    return np.where(ok[..., None], x, np.nan)


def quad_form_inv(matrix, vec) -> np.ndarray:
    """``vec^T matrix^{-1} vec`` through a linear solve; NaN where singular."""
    x = solve(matrix, vec)
    return np.einsum("...i,...i->...", np.asarray(vec, dtype=float), x)
