"""Small dense least-squares and sandwich primitives.

Everything here operates on plain numpy arrays. Matrices are small
(thousands of rows, tens of columns at most), so we favor numerically
stable direct factorizations over anything clever.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

RANK_TOL = 1e-10
GENINV_TOL = 1e-12


@dataclass(frozen=True)
class LsSolution:
    """Result of a weighted least-squares fit.

    Coefficients of rank-dropped columns are reported as 0 and their
    indices listed in ``dropped_columns``.
    """

    coefficients: np.ndarray
    residuals: np.ndarray
    rank: int
    dropped_columns: tuple[int, ...] = field(default=())


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite entries")


def wls_solve(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> LsSolution:
    """Solve min_beta sum_i w_i (y_i - x_i' beta)^2.

    Rank-deficient columns are detected by pivoted QR on the
    weight-scaled design with tolerance RANK_TOL times the largest
    pivot, and dropped (coefficient 0).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if x.ndim != 2:
        raise ValueError("design matrix must be 2-d")
    n, p = x.shape
    if n < 1:
        raise ValueError("need at least one observation")
    if y.shape != (n,) or w.shape != (n,):
        raise ValueError("dimension mismatch between X, y, w")
    _check_finite("X", x)
    _check_finite("y", y)
    _check_finite("w", w)
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")

    sw = np.sqrt(w)
    xw = x * sw[:, None]
    yw = y * sw

    q, r, piv = scipy.linalg.qr(xw, mode="economic", pivoting=True, check_finite=False)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        rank = 0
    else:
        rank = int(np.sum(diag > RANK_TOL * diag[0]))

    beta = np.zeros(p)
    if rank == p:
        rhs = q.T @ yw
        beta[piv] = scipy.linalg.solve_triangular(r, rhs, check_finite=False)
        dropped: tuple[int, ...] = ()
    elif rank > 0:
        keep = np.sort(piv[:rank])
        sub = wls_solve(x[:, keep], y, w)
        beta[keep] = sub.coefficients
        dropped = tuple(int(j) for j in np.sort(piv[rank:]))
    else:
        dropped = tuple(range(p))

    residuals = y - x @ beta
    return LsSolution(coefficients=beta, residuals=residuals, rank=rank, dropped_columns=dropped)


def sandwich(bread_inv: np.ndarray, meat: np.ndarray) -> np.ndarray:
    """Return bread_inv @ meat @ bread_inv, symmetrized."""
    bread_inv = np.asarray(bread_inv, dtype=float)
    meat = np.asarray(meat, dtype=float)
    if bread_inv.shape != meat.shape or bread_inv.shape[0] != bread_inv.shape[1]:
        raise ValueError("sandwich inputs must be conformable square matrices")
    out = bread_inv @ meat @ bread_inv
    return 0.5 * (out + out.T)


def quadform_geninv(m: np.ndarray, v: np.ndarray) -> float:
    """Return v' M^+ v with M^+ the eigendecomposition pseudo-inverse.

    Eigenvalues below GENINV_TOL times the largest are treated as zero,
    so the quadratic form is well defined even for singular M.
    """
    m = np.asarray(m, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_finite("M", m)
    _check_finite("v", v)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or v.shape != (m.shape[0],):
        raise ValueError("dimension mismatch")
    if np.abs(m - m.T).max(initial=0.0) > 1e-10:
        raise ValueError("M must be symmetric")
    vals, vecs = np.linalg.eigh(0.5 * (m + m.T))
    top = np.max(np.abs(vals), initial=0.0)
    keep = vals > GENINV_TOL * top if top > 0 else np.zeros_like(vals, dtype=bool)
    proj = vecs[:, keep].T @ v
    out = float(np.sum(proj * proj / vals[keep])) if np.any(keep) else 0.0
    return max(out, 0.0)
