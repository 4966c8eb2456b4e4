"""Least-squares, BLUE and iterative-BLUE estimators.

The iterative BLUE starts from the LS estimate, plugs the current estimate
into the overall-noise covariance of the uncertainty model, and re-solves
the weighted problem::

    x_0     = argmin ||H_hat x - y||
    C_k     = C_ww(x_k)                      # model.covariance(x_k, C_nn)
    x_{k+1} = (H_hat^T C_k^-1 H_hat)^-1 H_hat^T C_k^-1 y
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from iterblue.errors import (
    DimensionError,
    DivergenceError,
    EstimationError,
    IterBlueError,
)
from iterblue.models import Convolution, UncertaintyModel, Unstructured
from iterblue.numerics import as_matrix, as_vector, cholesky_spd, lstsq, solve_lower

__all__ = [
    "LinearProblem",
    "IterationConfig",
    "EstimateTrace",
    "ls_estimate",
    "blue",
    "oracle_blue_perfect_model",
    "oracle_blue_perfect_cww",
    "iterative_blue",
    "iterate_batch",
    "DIVERGENCE_GROWTH",
]

# an iterate larger than this multiple of ||x_0|| counts as divergent
DIVERGENCE_GROWTH = 1e12


@dataclass(frozen=True, eq=False)
class LinearProblem:
    """Measurements ``y = H_hat x + w`` together with everything needed to model ``w``.

    Parameters
    ----------
    y : array_like, shape (n_y,)
    h_hat : array_like, shape (n_y, n_x)
        Estimated measurement matrix.
    c_nn : array_like, shape (n_y, n_y)
        Measurement-noise covariance; must be positive definite since it
        keeps every plug-in covariance invertible.
    uncertainty : Unstructured or Convolution
    """

    y: np.ndarray
    h_hat: np.ndarray
    c_nn: np.ndarray
    uncertainty: UncertaintyModel

    def __post_init__(self):
        y = as_vector(self.y, "y")
        h_hat = as_matrix(self.h_hat, "h_hat")
        c_nn = as_matrix(self.c_nn, "c_nn")
        if y.ndim != 1 or h_hat.ndim != 2 or c_nn.ndim != 2:
            raise DimensionError("LinearProblem holds a single problem; use iterate_batch for stacks")
        n_y, n_x = h_hat.shape
        if y.shape[0] != n_y or c_nn.shape != (n_y, n_y):
            raise DimensionError(
                f"inconsistent shapes: y {y.shape}, h_hat {h_hat.shape}, c_nn {c_nn.shape}"
            )
        if not isinstance(self.uncertainty, (Unstructured, Convolution)):
            raise TypeError(f"unsupported uncertainty model {type(self.uncertainty).__name__}")
        dims = self.uncertainty.dims()
        if (dims.n_y, dims.n_x) != (n_y, n_x):
            raise DimensionError(
                f"uncertainty model is {dims.n_y} x {dims.n_x}, h_hat is {n_y} x {n_x}"
            )
        cholesky_spd(c_nn)
        for arr in (y, h_hat, c_nn):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "h_hat", h_hat)
        object.__setattr__(self, "c_nn", c_nn)

    @property
    def n_x(self) -> int:
        return self.h_hat.shape[1]

    def covariance(self, x) -> np.ndarray:
        """Overall-noise covariance evaluated at ``x``."""
        return self.uncertainty.covariance(x, self.c_nn)


@dataclass(frozen=True)
class IterationConfig:
    """``n_iter`` caps the number of BLUE updates; ``stop_tol > 0`` enables early stopping."""

    n_iter: int = 10
    stop_tol: float = 0.0

    def __post_init__(self):
        if self.n_iter < 0:
            raise ValueError("n_iter must be >= 0")
        if not self.stop_tol >= 0:
            raise ValueError("stop_tol must be >= 0")


@dataclass
class EstimateTrace:
    """Iterates ``x_0 .. x_K`` of the iterative BLUE; ``estimates[0]`` is the LS estimate."""

    estimates: list[np.ndarray] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def iterations_run(self) -> int:
        return max(len(self.estimates) - 1, 0)

    @property
    def final(self) -> np.ndarray:
        return self.estimates[-1]

    def as_array(self) -> np.ndarray:
        return np.stack(self.estimates)


def ls_estimate(h_hat, y) -> np.ndarray:
    """Ordinary least-squares estimate, ignoring all noise statistics."""
    return lstsq(h_hat, y)


def blue(h, c, y) -> np.ndarray:
    """Best linear unbiased estimate ``(H^T C^-1 H)^-1 H^T C^-1 y``.

    ``C`` is Cholesky-factored as ``L L^T``; ``H`` and ``y`` are whitened
    with ``L^-1`` and the whitened problem is solved by QR least squares.
    Stacked inputs are supported.

    Raises
    ------
    NotPositiveDefiniteError
        If ``c`` is not positive definite.
    RankError
        If the whitened ``h`` is rank deficient.
    """
    h = as_matrix(h, "h")
    y = as_vector(y, "y")
    c = as_matrix(c, "c")
    if c.shape[-1] != h.shape[-2] or y.shape[-1] != h.shape[-2]:
        raise DimensionError(f"inconsistent shapes: h {h.shape}, c {c.shape}, y {y.shape}")
    batch = np.broadcast_shapes(h.shape[:-2], c.shape[:-2], y.shape[:-1])
    low = np.broadcast_to(cholesky_spd(c), batch + c.shape[-2:])
    # whiten [H | y] with one triangular solve
    rhs = np.concatenate(
        [np.broadcast_to(h, batch + h.shape[-2:]), np.broadcast_to(y, batch + y.shape[-1:])[..., None]],
        axis=-1,
    )
    white = solve_lower(low, rhs)
    return lstsq(white[..., :-1], white[..., -1])


def oracle_blue_perfect_model(h_true, c_nn, y) -> np.ndarray:
    """BLUE on the true measurement matrix; a bound unavailable in practice."""
    return blue(h_true, c_nn, y)


def oracle_blue_perfect_cww(h_hat, c_ww_true, y) -> np.ndarray:
    """BLUE on ``h_hat`` weighted by the overall-noise covariance built from the true ``x``."""
    return blue(h_hat, c_ww_true, y)


def iterate_batch(
    h_hat: np.ndarray,
    y: np.ndarray,
    covariance: Callable[[np.ndarray], np.ndarray],
    n_iter: int,
    stop_tol: float = 0.0,
    on_covariance: Callable[[int, np.ndarray], None] | None = None,
) -> tuple[np.ndarray, np.ndarray, int, bool]:
    """Run the iterative BLUE on a stack of problems at once.

    Parameters
    ----------
    h_hat : ndarray, shape (T, n_y, n_x)
    y : ndarray, shape (T, n_y)
    covariance : callable
        Maps a stack of estimates ``(T, n_x)`` to covariances ``(T, n_y, n_y)``.
    n_iter : int
    stop_tol : float
        Stop once every row changed by at most ``stop_tol`` (relative l2).
    on_covariance : callable, optional
        Called as ``on_covariance(k, C_k)`` before each update; used by tests
        to inspect the plug-in covariances.

    Returns
    -------
    iterates : ndarray, shape (T, K + 1, n_x)
        Rows of divergent problems are NaN from the divergent iterate on.
    divergent : ndarray of bool, shape (T,)
    iterations : int
        ``K``, the number of updates performed.
    stopped_early : bool
    """
    x0 = ls_estimate(h_hat, y)
    n0 = np.linalg.norm(x0, axis=-1)
    limit = np.where(n0 > 0, DIVERGENCE_GROWTH * n0, np.inf)
    history = [x0]
    divergent = np.zeros(x0.shape[0], dtype=bool)
    current = x0
    stopped = False
    for k in range(n_iter):
        # divergent rows fall back to the zero vector so their covariance stays C_nn
        safe = np.where(divergent[:, None], 0.0, current)
        c_k = covariance(safe)
        if on_covariance is not None:
            on_covariance(k, c_k)
        nxt = blue(h_hat, c_k, y)
        bad = ~np.all(np.isfinite(nxt), axis=-1)
        bad |= np.linalg.norm(np.where(np.isfinite(nxt), nxt, 0.0), axis=-1) > limit
        divergent |= bad
        nxt = np.where(divergent[:, None], np.nan, nxt)
        history.append(nxt)
        if stop_tol > 0:
            live = ~divergent
            step = np.linalg.norm(nxt[live] - current[live], axis=-1)
            ref = np.maximum(np.linalg.norm(current[live], axis=-1), 1e-300)
            if np.all(step <= stop_tol * ref):
                current = nxt
                stopped = k + 1 < n_iter
                break
        current = nxt
    return np.stack(history, axis=1), divergent, len(history) - 1, stopped


def iterative_blue(problem: LinearProblem, config: IterationConfig | None = None) -> EstimateTrace:
    """Iterative BLUE with plug-in overall-noise covariance.

    Returns the full trace of iterates.  With ``config.stop_tol > 0`` the
    loop ends early once ``||x_{k+1} - x_k|| <= stop_tol * ||x_k||``.

    Raises
    ------
    DivergenceError
        If an iterate is non-finite or exceeds ``DIVERGENCE_GROWTH`` times
        the norm of the LS start.  ``exc.trace`` holds the finite iterates.
    EstimationError
        Wrapping any solver error raised mid-iteration, again with ``trace``.
    """
    config = config or IterationConfig()
    trace = EstimateTrace()
    trace.estimates.append(ls_estimate(problem.h_hat, problem.y))
    x0_norm = np.linalg.norm(trace.estimates[0])
    limit = DIVERGENCE_GROWTH * x0_norm if x0_norm > 0 else np.inf
    current = trace.estimates[0]
    for k in range(config.n_iter):
        try:
            nxt = blue(problem.h_hat, problem.covariance(current), problem.y)
        except IterBlueError as exc:
            raise EstimationError(f"iteration {k + 1} failed: {exc}", trace) from exc
        if not np.all(np.isfinite(nxt)) or np.linalg.norm(nxt) > limit:
            raise DivergenceError(f"iterate {k + 1} diverged", trace)
        trace.estimates.append(nxt)
        if config.stop_tol > 0:
            step = np.linalg.norm(nxt - current)
            if step <= config.stop_tol * max(np.linalg.norm(current), 1e-300):
                trace.stopped_early = k + 1 < config.n_iter
                break
        current = nxt
    return trace
