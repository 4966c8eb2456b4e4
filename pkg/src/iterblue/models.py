"""Measurement-matrix uncertainty models and the overall-noise covariance.

With ``H = H_hat + B`` the measurements read ``y = H_hat x + w`` where the
overall noise ``w = B x + n`` has a covariance that depends on ``x``.  Two
error classes are supported:

``Unstructured``
    Independent zero-mean errors with per-entry variances ``V``; the
    covariance is ``diag(V |x|^2) + C_nn``.
``Convolution``
    ``H`` is the linear-convolution matrix of an impulse response whose
    estimate carries an error with covariance ``C_ee``.  The error enters
    every column of ``B``, so ``B x = P(x) b1`` with ``P(x)`` a polynomial in
    the down-shift matrix, and the covariance is
    ``P(x) C_b1b1 P(x)^T + C_nn``.

All functions accept stacked inputs with leading batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from iterblue.errors import ContractError, DimensionError
from iterblue.numerics import SYMMETRY_RTOL, as_matrix, as_vector

__all__ = [
    "ModelDims",
    "Unstructured",
    "Convolution",
    "UncertaintyModel",
    "conv_matrix",
    "shift_matrix",
    "build_px",
    "cov_unstructured",
    "cov_convolution",
    "PSD_RTOL",
]

PSD_RTOL = 1e-12


@dataclass(frozen=True)
class ModelDims:
    """Problem dimensions; ``n_h`` is only meaningful for convolution models."""

    n_y: int
    n_x: int
    n_h: int | None = None

    def __post_init__(self):
        if self.n_x < 1 or self.n_y <= self.n_x:
            raise DimensionError(f"need n_y > n_x >= 1, got n_y={self.n_y}, n_x={self.n_x}")
        if self.n_h is not None and self.n_y != self.n_x + self.n_h - 1:
            raise DimensionError(
                f"convolution needs n_y == n_x + n_h - 1, got {self.n_y} != {self.n_x} + {self.n_h} - 1"
            )


def _check_psd(c: np.ndarray, name: str) -> None:
    if c.shape[-1] != c.shape[-2]:
        raise DimensionError(f"{name} must be square, got shape {c.shape}")
    scale = np.max(np.abs(c))
    if np.max(np.abs(c - np.swapaxes(c, -1, -2))) > SYMMETRY_RTOL * scale:
        raise ContractError(f"{name} is not symmetric")
    eig = np.linalg.eigvalsh(0.5 * (c + np.swapaxes(c, -1, -2)))
    trace = np.trace(c, axis1=-2, axis2=-1)
    if np.any(eig.min(axis=-1) < -PSD_RTOL * np.abs(trace)):
        raise ContractError(f"{name} is not positive semidefinite")


@dataclass(frozen=True, eq=False)
class Unstructured:
    """Independent entry errors with variance matrix ``v`` (same shape as ``H``)."""

    v: np.ndarray

    def __post_init__(self):
        v = as_matrix(self.v, "v")
        if np.any(v < 0):
            raise ContractError("error variances v must be non-negative")
        v.setflags(write=False)
        object.__setattr__(self, "v", v)

    def dims(self) -> ModelDims:
        n_y, n_x = self.v.shape[-2:]
        return ModelDims(n_y, n_x)

    def covariance(self, x, c_nn) -> np.ndarray:
        return cov_unstructured(self.v, x, c_nn)


@dataclass(frozen=True, eq=False)
class Convolution:
    """Convolution-structured errors: impulse-response error covariance ``c_ee``."""

    c_ee: np.ndarray
    n_x: int

    def __post_init__(self):
        c_ee = as_matrix(self.c_ee, "c_ee")
        _check_psd(c_ee, "c_ee")
        if self.n_x < 1:
            raise DimensionError("n_x must be >= 1")
        c_ee.setflags(write=False)
        object.__setattr__(self, "c_ee", c_ee)

    @property
    def n_h(self) -> int:
        return self.c_ee.shape[-1]

    def dims(self) -> ModelDims:
        return ModelDims(self.n_x + self.n_h - 1, self.n_x, self.n_h)

    def covariance(self, x, c_nn) -> np.ndarray:
        return cov_convolution(self.c_ee, x, c_nn)


UncertaintyModel = Unstructured | Convolution


def conv_matrix(h, n_x: int) -> np.ndarray:
    """Linear-convolution matrix of ``h`` with ``n_x`` columns.

    Column ``i`` holds ``h`` shifted down by ``i`` places and zero padded, so
    ``conv_matrix(h, n_x) @ x == np.convolve(h, x)``.

    Parameters
    ----------
    h : array_like, shape (..., n_h)
    n_x : int

    Returns
    -------
    numpy.ndarray, shape (..., n_h + n_x - 1, n_x)
    """
    h = as_vector(h, "h")
    if n_x < 1:
        raise DimensionError("n_x must be >= 1")
    n_h = h.shape[-1]
    out = np.zeros(h.shape[:-1] + (n_h + n_x - 1, n_x))
    rows = np.arange(n_h)[:, None] + np.arange(n_x)[None, :]
    cols = np.broadcast_to(np.arange(n_x), (n_h, n_x))
    out[..., rows, cols] = h[..., :, None]
    return out


def shift_matrix(n: int) -> np.ndarray:
    """``n x n`` down-shift matrix: ones on the first subdiagonal."""
    if n < 1:
        raise DimensionError("n must be >= 1")
    return np.eye(n, k=-1)


def build_px(x, n_y: int) -> np.ndarray:
    """``P(x) = sum_k x[k] D^k`` as an ``n_y x n_y`` lower-triangular Toeplitz matrix.

    Built by placing ``x[k]`` on the ``k``-th subdiagonal rather than by
    summing powers of the shift matrix.
    """
    x = as_vector(x, "x")
    if n_y < x.shape[-1]:
        raise DimensionError(f"n_y={n_y} is smaller than len(x)={x.shape[-1]}")
    return conv_matrix(x, n_y)[..., :n_y, :]


def _check_square_size(c: np.ndarray, n: int, name: str) -> None:
    if c.shape[-2:] != (n, n):
        raise DimensionError(f"{name} must be {n} x {n}, got shape {c.shape}")


def cov_unstructured(v, x, c_nn) -> np.ndarray:
    """Overall-noise covariance ``diag(v @ x**2) + c_nn`` for independent entry errors.

    Diagonal entry ``i`` is ``sum_j v[i, j] x[j]**2 + c_nn[i, i]``.
    """
    v = as_matrix(v, "v")
    x = as_vector(x, "x")
    c_nn = as_matrix(c_nn, "c_nn")
    n_y, n_x = v.shape[-2:]
    if x.shape[-1] != n_x:
        raise DimensionError(f"x has length {x.shape[-1]}, v expects {n_x}")
    _check_square_size(c_nn, n_y, "c_nn")
    var = np.matmul(v, (np.abs(x) ** 2)[..., None])[..., 0]
    idx = np.arange(n_y)
    out = np.array(np.broadcast_to(c_nn, np.broadcast_shapes(c_nn.shape, var.shape[:-1] + (n_y, n_y))))
    out[..., idx, idx] += var
    return out


def cov_convolution(c_ee, x, c_nn) -> np.ndarray:
    """Overall-noise covariance ``P(x) C_b1b1 P(x)^T + c_nn`` for convolution errors.

    ``C_b1b1`` is ``c_ee`` padded with zeros to ``n_y x n_y``; only the first
    ``n_h`` columns of ``P(x)`` meet its non-zero block, and those columns
    form ``conv_matrix(x, n_h)``.  The result is symmetrized exactly.
    """
    c_ee = as_matrix(c_ee, "c_ee")
    x = as_vector(x, "x")
    c_nn = as_matrix(c_nn, "c_nn")
    n_h = c_ee.shape[-1]
    if c_ee.shape[-2] != n_h:
        raise DimensionError(f"c_ee must be square, got shape {c_ee.shape}")
    n_y = n_h + x.shape[-1] - 1
    _check_square_size(c_nn, n_y, "c_nn")
    px_head = conv_matrix(x, n_h)
    out = np.matmul(np.matmul(px_head, c_ee), np.swapaxes(px_head, -1, -2))
    out = 0.5 * (out + np.swapaxes(out, -1, -2))
    return out + c_nn
