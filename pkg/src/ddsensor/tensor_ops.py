"""Vectorization algebra for symmetric quadratic forms and an SVD pseudoinverse.

Index convention used everywhere in the package: half-vectorized coordinates
walk the lower triangle column by column,

    (0,0), (1,0), ..., (d-1,0), (1,1), (2,1), ..., (d-1,d-1)

so that ``vecs(z z^T) @ vech(W) == z^T W z`` for every symmetric ``W``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg


def kron(a, b) -> np.ndarray:
    """Kronecker product of two matrices (or vectors)."""
    return np.kron(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def vec(m) -> np.ndarray:
    """Stack the columns of ``m`` into a single vector."""
    m = np.asarray(m, dtype=float)
    return m.reshape(-1, order="F")


def unvec(v, rows: int, cols: int) -> np.ndarray:
    v = np.asarray(v, dtype=float).ravel()
    if v.size != rows * cols:
        raise ValueError(f"cannot reshape vector of length {v.size} to {rows}x{cols}")
    return v.reshape((rows, cols), order="F")


@lru_cache(maxsize=64)
def half_indices(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column indices of the lower triangle in column-major order."""
    cols, rows = np.triu_indices(d)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def half_dim(d: int) -> int:
    return d * (d + 1) // 2


def tri_root(length: int) -> int:
    """Return ``d`` such that ``d*(d+1)/2 == length``; raise otherwise."""
    d = (math.isqrt(8 * length + 1) - 1) // 2
    if d < 1 or half_dim(d) != length:
        raise ValueError(f"{length} is not a triangular number")
    return d


def _check_symmetric(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.abs(m).max(initial=0.0)))
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-9 * scale):
        raise ValueError("matrix is not symmetric")
    return m


def symmetrize(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def vech(m) -> np.ndarray:
    m = _check_symmetric(m)
    rows, cols = half_indices(m.shape[0])
    return m[rows, cols].copy()


def _offdiag_scale(d: int) -> np.ndarray:
    rows, cols = half_indices(d)
    return np.where(rows == cols, 1.0, 2.0)


def vecs(m) -> np.ndarray:
    """Half-vectorization with strictly off-diagonal entries doubled."""
    m = _check_symmetric(m)
    d = m.shape[0]
    rows, cols = half_indices(d)
    return m[rows, cols] * _offdiag_scale(d)


def unvech(v) -> np.ndarray:
    v = np.asarray(v, dtype=float).ravel()
    d = tri_root(v.size)
    rows, cols = half_indices(d)
    out = np.zeros((d, d))
    out[rows, cols] = v
    out[cols, rows] = v
    return out


def unvecs(v) -> np.ndarray:
    v = np.asarray(v, dtype=float).ravel()
    d = tri_root(v.size)
    return unvech(v / _offdiag_scale(d))


def op_H(v) -> np.ndarray:
    """``vecs(unvec(v))`` for a vector of square length ``d**2``.

    The reshaped matrix is symmetrized first; callers only pass Kronecker
    squares or differences of them, which are symmetric up to round-off.
    """
    v = np.asarray(v, dtype=float).ravel()
    d = math.isqrt(v.size)
    if d * d != v.size or d == 0:
        raise ValueError(f"length {v.size} is not a perfect square")
    return vecs(symmetrize(unvec(v, d, d)))


def quadratic_features(Z) -> np.ndarray:
    """Columnwise ``H(z ⊗ z)`` for a ``d x k`` matrix of stacked vectors.

    Returns a ``d(d+1)/2 x k`` array. Equivalent to applying :func:`op_H` to
    ``kron(z, z)`` for every column, without forming the Kronecker squares.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    d = Z.shape[0]
    rows, cols = half_indices(d)
    out = Z[rows] * Z[cols]
    out *= _offdiag_scale(d)[:, None]
    return out


def duplication_matrix(d: int) -> np.ndarray:
    """Matrix ``D`` with ``vec(W) == D @ vech(W)`` for symmetric ``W``."""
    rows, cols = half_indices(d)
    out = np.zeros((d * d, rows.size))
    j = np.arange(rows.size)
    out[cols * d + rows, j] = 1.0
    out[rows * d + cols, j] = 1.0
    return out


def elimination_matrix(d: int) -> np.ndarray:
    """Matrix ``L`` with ``vech(W) == L @ vec(W)``."""
    rows, cols = half_indices(d)
    out = np.zeros((rows.size, d * d))
    out[np.arange(rows.size), cols * d + rows] = 1.0
    return out


@dataclass(frozen=True)
class PinvResult:
    """Truncated SVD pseudoinverse of a ``rows x cols`` matrix.

    Only the retained singular triplets are stored; :attr:`pseudoinverse`
    materializes the dense ``cols x rows`` matrix on demand and
    :meth:`apply` multiplies by it without forming it.
    """

    shape: tuple[int, int]
    singular_values: np.ndarray
    tolerance_used: float
    u: np.ndarray = field(repr=False)
    vt: np.ndarray = field(repr=False)

    @property
    def numerical_rank(self) -> int:
        return int(self.u.shape[1])

    @property
    def retained(self) -> np.ndarray:
        return self.singular_values[: self.numerical_rank]

    @property
    def pseudoinverse(self) -> np.ndarray:
        return (self.vt.T / self.retained) @ self.u.T

    def apply(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        coeffs = (self.u.T @ b)
        coeffs = coeffs / (self.retained if coeffs.ndim == 1 else self.retained[:, None])
        return self.vt.T @ coeffs

    @property
    def smallest_retained(self) -> float:
        r = self.numerical_rank
        return float(self.singular_values[r - 1]) if r else 0.0


def default_tolerance(sigma_max: float, shape) -> float:
    return float(sigma_max) * max(shape) * np.finfo(float).eps


def resolve_tolerance(singular_values, shape, rtol=None, atol=None) -> float:
    """Tolerance below which singular values count as zero.

    ``rtol`` is relative to the largest singular value, ``atol`` absolute;
    with neither given the ``sigma_max * max(shape) * eps`` heuristic applies,
    with both the larger wins.
    """
    smax = float(singular_values[0]) if len(singular_values) else 0.0
    if rtol is None and atol is None:
        return default_tolerance(smax, shape)
    tol = 0.0
    if rtol is not None:
        tol = max(tol, float(rtol) * smax)
    if atol is not None:
        tol = max(tol, float(atol))
    return tol


def pinv_tol(m, rtol: float | None = None, atol: float | None = None) -> PinvResult:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.size == 0:
        raise ValueError(f"pinv_tol needs a nonempty 2-D matrix, got shape {m.shape}")
    try:
        u, s, vt = scipy.linalg.svd(m, full_matrices=False, check_finite=False,
                                    lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        u, s, vt = scipy.linalg.svd(m, full_matrices=False, check_finite=False,
                                    lapack_driver="gesvd")
    tol = resolve_tolerance(s, m.shape, rtol, atol)
    r = int(np.count_nonzero(s > tol))
    return PinvResult(shape=m.shape, singular_values=s, tolerance_used=tol,
                      u=np.ascontiguousarray(u[:, :r]), vt=np.ascontiguousarray(vt[:r]))


def numerical_rank(m, rtol: float | None = None, atol: float | None = None) -> tuple[int, np.ndarray, float]:
    """Rank, singular values and tolerance of ``m`` under the same policy as :func:`pinv_tol`."""
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0, np.zeros(0), 0.0
    s = scipy.linalg.svdvals(m, check_finite=False)
    tol = resolve_tolerance(s, m.shape, rtol, atol)
    return int(np.count_nonzero(s > tol)), s, tol
