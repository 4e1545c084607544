"""Sturm-sequence counting and bisection for symmetric tridiagonal matrices.

Every eigenvalue returned here comes with a bracket ``[lo, hi)`` of width at most
``tol`` that contains exactly the requested index, certified by Sturm counts.
"""

from __future__ import annotations

import numba
import numpy as np

from .errors import ConfigError, DomainError
from .operators import TridiagonalMatrix

PIVOT_EPS = 2.0**-40
EIGEN_ALL_CAP = 5000


@numba.njit(cache=True)
def _sturm(diag, off2, x, pivmin):
    # number of negative pivots of LDL^T(T - x I) == #eigenvalues < x
    count = 0
    q = diag[0] - x
    if abs(q) < pivmin:
        q = -pivmin if q < 0.0 else pivmin
    if q < 0.0:
        count += 1
    for i in range(1, diag.size):
        q = diag[i] - x - off2[i - 1] / q
        if abs(q) < pivmin:
            q = -pivmin if q < 0.0 else pivmin
        if q < 0.0:
            count += 1
    return count


@numba.njit(cache=True)
def _bisect_indices(diag, off2, indices, lo0, hi0, tol, pivmin):
    """Brackets [lo, hi) for the sorted target indices; neighbours share information."""
    k = indices.size
    lo = np.full(k, lo0)
    hi = np.full(k, hi0)
    for t in range(k):
        while hi[t] - lo[t] > tol:
            mid = 0.5 * (lo[t] + hi[t])
            if mid <= lo[t] or mid >= hi[t]:
                break
            c = _sturm(diag, off2, mid, pivmin)
            for s in range(k):
                if indices[s] < c:
                    if mid < hi[s]:
                        hi[s] = mid
                elif mid > lo[s]:
                    lo[s] = mid
    return lo, hi


def _prepare(matrix: TridiagonalMatrix):
    diag = np.ascontiguousarray(matrix.diag, dtype=np.float64)
    off = np.ascontiguousarray(matrix.offdiag, dtype=np.float64)
    if not (np.all(np.isfinite(diag)) and np.all(np.isfinite(off))):
        raise DomainError("matrix has non-finite entries")
    return diag, off * off


def _pivmin(matrix: TridiagonalMatrix) -> float:
    return PIVOT_EPS * max(matrix.norm_bound(), np.finfo(float).tiny)


def default_tol(matrix: TridiagonalMatrix) -> float:
    return 1e-10 * max(1.0, matrix.norm_bound())


def sturm_count(matrix: TridiagonalMatrix, x: float) -> int:
    """Number of eigenvalues strictly below ``x``."""
    diag, off2 = _prepare(matrix)
    if np.isnan(x):
        raise DomainError("shift is NaN")
    if x == np.inf:
        return matrix.n
    if x == -np.inf:
        return 0
    return int(_sturm(diag, off2, float(x), _pivmin(matrix)))


def _brackets(matrix: TridiagonalMatrix, indices: np.ndarray, tol: float):
    if not tol > 0:
        raise DomainError(f"tol must be positive, got {tol}")
    diag, off2 = _prepare(matrix)
    lo, hi = matrix.gershgorin()
    pad = max(tol, 1e-12 * max(1.0, abs(lo), abs(hi)))
    return _bisect_indices(diag, off2, np.ascontiguousarray(indices, dtype=np.int64), lo - pad, hi + pad,
                           float(tol), _pivmin(matrix))


def eigen_extreme(matrix: TridiagonalMatrix, k: int, side: str = "largest", tol: float | None = None) -> np.ndarray:
    """k largest (descending) or smallest (ascending) eigenvalues, each bracketed to ``tol``."""
    n = matrix.n
    if not 1 <= k <= n:
        raise DomainError(f"need 1 <= k <= n, got k={k}, n={n}")
    if side not in ("largest", "smallest"):
        raise ConfigError(f"side must be 'largest' or 'smallest', got {side!r}")
    tol = default_tol(matrix) if tol is None else tol
    indices = np.arange(k) if side == "smallest" else np.arange(n - 1, n - 1 - k, -1)
    lo, hi = _brackets(matrix, indices, tol)
    return 0.5 * (lo + hi)


def eigen_all(matrix: TridiagonalMatrix, tol: float | None = None, cap: int = EIGEN_ALL_CAP) -> np.ndarray:
    """All eigenvalues in ascending order."""
    n = matrix.n
    if n > cap:
        raise ConfigError(f"eigen_all is capped at n={cap}, got n={n}")
    tol = default_tol(matrix) if tol is None else tol
    lo_g, hi_g = matrix.gershgorin()
    total = sturm_count(matrix, hi_g + 1.0 + abs(hi_g)) - sturm_count(matrix, lo_g - 1.0 - abs(lo_g))
    if total != n:
        raise DomainError(f"Sturm count over the Gershgorin interval is {total}, expected {n}")
    lo, hi = _brackets(matrix, np.arange(n), tol)
    return 0.5 * (lo + hi)


def certify(matrix: TridiagonalMatrix, eigs, tol: float) -> np.ndarray:
    """Per-eigenvalue check that sturm_count(lam - tol) < sturm_count(lam + tol)."""
    diag, off2 = _prepare(matrix)
    piv = _pivmin(matrix)
    eigs = np.atleast_1d(np.asarray(eigs, dtype=float))
    return np.array([_sturm(diag, off2, e - tol, piv) < _sturm(diag, off2, e + tol, piv) for e in eigs],
                    dtype=bool)
