"""Small dense linear algebra: induced norms, inverse, condition number."""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

PIVOT_TOL = 1e-13


class SingularMatrixError(ValueError):
    pass


def _check_p(p) -> float:
    if p in (1, 2):
        return p
    if p in (np.inf, "inf", "Inf", float("inf")):
        return np.inf
    raise ValueError(f"induced norm order must be 1, 2 or inf, got {p!r}")


def induced_norm(matrix, p=2) -> float:
    """Operator norm of ``matrix`` induced by the vector p-norm."""
    a = np.atleast_2d(np.asarray(matrix))
    p = _check_p(p)
    if p == 1:
        return float(np.abs(a).sum(axis=0).max())
    if p == np.inf:
        return float(np.abs(a).sum(axis=1).max())
    return float(np.linalg.svd(a, compute_uv=False)[0])


def inverse(matrix) -> np.ndarray:
    """Inverse by LU with partial pivoting; refuses numerically singular input."""
    a = np.atleast_2d(np.asarray(matrix))
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = induced_norm(a, 1)
    with warnings.catch_warnings():
        # an exact zero pivot is reported below as SingularMatrixError
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if scale == 0.0 or pivots.min() < PIVOT_TOL * scale:
        raise SingularMatrixError(
            f"matrix is numerically singular (smallest pivot {pivots.min():.3e})"
        )
    return scipy.linalg.lu_solve((lu, piv), np.eye(n, dtype=lu.dtype))


def cond(matrix, p=2) -> float:
    return induced_norm(matrix, p) * induced_norm(inverse(matrix), p)


def random_orthogonal(n: int, seed: int = 42) -> np.ndarray:
    """Seeded orthogonal matrix: QR of a standard normal draw, diagonal signs fixed."""
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))
