"""Dense float64 linear-algebra kernel.

Every routine accepts either a single operand (a 2-D matrix, a 1-D vector)
or a stack of operands with arbitrary leading batch axes, e.g. ``(T, m, n)``
matrices paired with ``(T, m)`` vectors.  Single operands are promoted to a
batch of one internally, so a 2-D call and the matching slice of a batched
call run the same LAPACK kernels and give bit-identical results.
"""

from __future__ import annotations

import numpy as np

from iterblue.errors import ContractError, DimensionError, NotPositiveDefiniteError, RankError

__all__ = [
    "as_matrix",
    "as_vector",
    "mat_mul",
    "cholesky_spd",
    "solve_lower",
    "solve_spd",
    "lstsq",
    "SYMMETRY_RTOL",
    "RANK_RTOL",
]

SYMMETRY_RTOL = 1e-10
RANK_RTOL = 1e-12


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a float64 array with at least two axes, all entries finite."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim < 2:
        raise DimensionError(f"{name} must have at least 2 axes, got shape {arr.shape}")
    if arr.shape[-1] < 1 or arr.shape[-2] < 1:
        raise DimensionError(f"{name} must have at least one row and column, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} contains non-finite entries")
    return arr


def as_vector(v, name: str = "vector") -> np.ndarray:
    """Return ``v`` as a float64 array with at least one axis, all entries finite."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim < 1:
        arr = arr.reshape(1)
    if arr.shape[-1] < 1:
        raise DimensionError(f"{name} must have length >= 1")
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} contains non-finite entries")
    return arr


def _promote(a: np.ndarray, core: int) -> tuple[np.ndarray, bool]:
    # lift a bare operand to a batch of one so every call takes the stacked path
    if a.ndim == core:
        return a[np.newaxis], True
    return a, False


def mat_mul(a, b) -> np.ndarray:
    """Matrix product ``a @ b`` with explicit shape checking.

    Raises
    ------
    DimensionError
        If ``a.shape[-1] != b.shape[-2]``.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return np.matmul(a, b)


def _check_square(a: np.ndarray, name: str) -> None:
    if a.shape[-1] != a.shape[-2]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")


def _symmetrize(a: np.ndarray, name: str) -> np.ndarray:
    _check_square(a, name)
    at = np.swapaxes(a, -1, -2)
    asym = np.max(np.abs(a - at), axis=(-2, -1))
    scale = np.max(np.abs(a), axis=(-2, -1))
    if np.any(asym > SYMMETRY_RTOL * scale):
        raise ContractError(f"{name} is not symmetric within relative tolerance {SYMMETRY_RTOL:g}")
    return 0.5 * (a + at)


def cholesky_spd(a) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive-definite matrix (or stack).

    The input is checked for symmetry and symmetrized as ``(a + a.T) / 2``
    before factoring.

    Raises
    ------
    ContractError
        If ``a`` is not symmetric within ``SYMMETRY_RTOL`` (relative to its
        largest entry).
    NotPositiveDefiniteError
        If the factorization meets a non-positive pivot.
    """
    a = _symmetrize(as_matrix(a, "a"), "a")
    a, single = _promote(a, 2)
    try:
        low = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("matrix is not positive definite") from exc
    return low[0] if single else low


def _solve_stacked(m: np.ndarray, b: np.ndarray, vec: bool) -> np.ndarray:
    rhs = b[..., np.newaxis] if vec else b
    single = m.ndim == 2 and rhs.ndim == 2
    if single:
        m, rhs = m[np.newaxis], rhs[np.newaxis]
    x = np.linalg.solve(m, rhs)
    if single:
        x = x[0]
    return x[..., 0] if vec else x


def solve_lower(low: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``low @ x = b`` for a lower-triangular factor; ``b`` may be a vector or matrix."""
    return _solve_stacked(low, b, b.ndim == low.ndim - 1)


def solve_spd(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` for symmetric positive-definite ``a``.

    Uses the Cholesky factor and two triangular solves; ``a`` is never
    inverted.  ``b`` may be a matrix (``(..., n, k)``) or a vector
    (``(..., n)``).
    """
    a = as_matrix(a, "a")
    _check_square(a, "a")
    b = np.asarray(b, dtype=np.float64)
    vec = b.ndim == a.ndim - 1
    if vec:
        b = as_vector(b, "b")
        rows = b.shape[-1]
    else:
        b = as_matrix(b, "b")
        rows = b.shape[-2]
    if rows != a.shape[-1]:
        raise DimensionError(f"right-hand side with {rows} rows does not match {a.shape}")
    low = cholesky_spd(a)
    z = _solve_stacked(low, b, vec)
    return _solve_stacked(np.swapaxes(low, -1, -2), z, vec)


def lstsq(a, y) -> np.ndarray:
    """Least-squares solution ``argmin ||a x - y||_2`` via a reduced QR factorization.

    Parameters
    ----------
    a : array_like, shape (..., m, n)
        Design matrix (or stack), ``m >= n``.
    y : array_like, shape (..., m)
        Observations.

    Returns
    -------
    numpy.ndarray, shape (..., n)

    Raises
    ------
    RankError
        If some ``|R[i, i]|`` falls below ``RANK_RTOL`` times the largest one.
    """
    a = as_matrix(a, "a")
    y = as_vector(y, "y")
    m, n = a.shape[-2:]
    if m < n:
        raise DimensionError(f"lstsq needs rows >= cols, got shape {a.shape}")
    if y.shape[-1] != m:
        raise DimensionError(f"y has length {y.shape[-1]}, expected {m}")
    single = a.ndim == 2 and y.ndim == 1
    if single:
        a, y = a[np.newaxis], y[np.newaxis]
    q, r = np.linalg.qr(a, mode="reduced")
    diag = np.abs(np.diagonal(r, axis1=-2, axis2=-1))
    if np.any(diag.min(axis=-1) < RANK_RTOL * diag.max(axis=-1)) or np.any(diag.max(axis=-1) == 0.0):
        raise RankError("design matrix is numerically rank deficient")
    qty = np.matmul(np.swapaxes(q, -1, -2), y[..., np.newaxis])
    x = np.linalg.solve(r, qty)[..., 0]
    return x[0] if single else x
