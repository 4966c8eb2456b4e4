"""Monte Carlo harness for the convolution deconvolution experiment.

A scenario draws a random impulse response ``h ~ N(h_mean, C_hh)``, an
estimation error ``e ~ N(0, C_ee)`` with ``h_hat = h - e``, and measurement
noise ``n ~ N(0, sigma_n_sq I)``; the measurements are
``y = conv_matrix(h, n_x) @ x_true + n``.  Every estimator in a trial sees
the same draw.

Each trial owns an RNG stream seeded from ``(seed, sigma_n_sq, trial)``, so
adding grid points or trials never perturbs existing cells and results do
not depend on how cells are spread over worker threads.
"""

from __future__ import annotations

import struct
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from iterblue.errors import ContractError, DimensionError, IterBlueError
from iterblue.estimators import LinearProblem, blue, iterate_batch, ls_estimate
from iterblue.models import Convolution, UncertaintyModel, _check_psd, conv_matrix
from iterblue.numerics import as_matrix, as_vector

__all__ = [
    "REFERENCE_C_EE",
    "REFERENCE_X_TRUE",
    "default_sigma_grid",
    "ScenarioConfig",
    "Scenario",
    "SweepConfig",
    "TrialBatch",
    "TrialResult",
    "MseRow",
    "MseReport",
    "ESTIMATORS",
    "DEFAULT_ESTIMATORS",
    "register_estimator",
    "derive_seed",
    "gen_scenario",
    "draw_batch",
    "evaluate_batch",
    "run_trial",
    "mse_sweep",
    "convergence_curve",
]

REFERENCE_X_TRUE = (1.0, 0.5, 0.25)
REFERENCE_C_EE_DIAG = (1e-4, 1e-5, 1e-6, 1e-6, 1e-6)
REFERENCE_C_EE = tuple(
    tuple(REFERENCE_C_EE_DIAG[i] if i == j else 0.0 for j in range(5)) for i in range(5)
)


def default_sigma_grid(per_decade: int = 6, low_exp: int = -8, high_exp: int = -3) -> tuple[float, ...]:
    """Log-spaced noise variances, ``per_decade`` points per decade, end points included."""
    n = per_decade * (high_exp - low_exp) + 1
    return tuple(10.0 ** (low_exp + i / per_decade) for i in range(n))


def _identity(n: int) -> tuple[tuple[float, ...], ...]:
    return tuple(tuple(1.0 if i == j else 0.0 for j in range(n)) for i in range(n))


def _psd_factor(c: np.ndarray, name: str) -> np.ndarray:
    # square-root factor F with F F^T = c; tolerates singular (PSD) c
    _check_psd(c, name)
    lam, vec = np.linalg.eigh(0.5 * (c + c.T))
    return vec * np.sqrt(np.clip(lam, 0.0, None))


@dataclass(frozen=True)
class ScenarioConfig:
    """Distribution of one randomized convolution scenario.

    Defaults reproduce the reference experiment: a length-5 impulse response
    drawn from ``N(0, I)``, ``x_true = (1, 0.5, 0.25)``, and a diagonal
    impulse-response error covariance decaying from ``1e-4`` to ``1e-6``.
    Vectors and matrices are stored as tuples so configs hash and compare.
    """

    n_h: int = 5
    n_x: int = 3
    x_true: tuple[float, ...] = REFERENCE_X_TRUE
    h_mean: tuple[float, ...] = (0.0,) * 5
    c_hh: tuple[tuple[float, ...], ...] = _identity(5)
    c_ee: tuple[tuple[float, ...], ...] = REFERENCE_C_EE
    sigma_n_sq: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.n_h < 1 or self.n_x < 1:
            raise DimensionError("n_h and n_x must be >= 1")
        if self.n_h < 2:
            # n_y = n_x + n_h - 1 must exceed n_x
            raise DimensionError("n_h must be >= 2 for an overdetermined problem")
        if len(self.x_true) != self.n_x:
            raise DimensionError(f"x_true has length {len(self.x_true)}, n_x = {self.n_x}")
        if len(self.h_mean) != self.n_h:
            raise DimensionError(f"h_mean has length {len(self.h_mean)}, n_h = {self.n_h}")
        for name in ("c_hh", "c_ee"):
            m = getattr(self, name)
            if len(m) != self.n_h or any(len(r) != self.n_h for r in m):
                raise DimensionError(f"{name} must be {self.n_h} x {self.n_h}")
            _check_psd(as_matrix(m, name), name)
        as_vector(self.x_true, "x_true")
        as_vector(self.h_mean, "h_mean")
        if not (np.isfinite(self.sigma_n_sq) and self.sigma_n_sq >= 0):
            raise ContractError("sigma_n_sq must be a finite non-negative number")
        if not 0 <= self.seed < 2**64:
            raise ContractError("seed must be an unsigned 64-bit integer")

    @property
    def n_y(self) -> int:
        return self.n_x + self.n_h - 1

    @property
    def x_array(self) -> np.ndarray:
        return np.array(self.x_true, dtype=np.float64)

    @property
    def c_ee_array(self) -> np.ndarray:
        return np.array(self.c_ee, dtype=np.float64)

    def c_nn(self, sigma_n_sq: float | None = None) -> np.ndarray:
        s = self.sigma_n_sq if sigma_n_sq is None else sigma_n_sq
        return s * np.eye(self.n_y)

    def model(self) -> Convolution:
        return Convolution(self.c_ee_array, self.n_x)


@dataclass(frozen=True, eq=False)
class Scenario:
    """One realized draw.  ``problem`` is built on first access and needs ``sigma_n_sq > 0``."""

    h_true: np.ndarray | None
    h_hat: np.ndarray | None
    H_true: np.ndarray
    H_hat: np.ndarray
    y: np.ndarray
    c_nn: np.ndarray
    uncertainty: UncertaintyModel
    x_true: np.ndarray

    @cached_property
    def problem(self) -> LinearProblem:
        return LinearProblem(self.y, self.H_hat, self.c_nn, self.uncertainty)


@dataclass(frozen=True)
class SweepConfig:
    """A Monte Carlo campaign.

    ``scenario.sigma_n_sq`` is replaced by each grid value; ``scenario.seed``
    is the master seed.
    """

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    sigma_grid: tuple[float, ...] = field(default_factory=default_sigma_grid)
    trials: int = 10_000
    n_iter: int = 10
    estimators: tuple[str, ...] = ("ls", "proposed", "blue_perfect_model", "blue_perfect_cww")

    def __post_init__(self):
        if self.trials < 1:
            raise ContractError("trials must be >= 1")
        if self.n_iter < 0:
            raise ContractError("n_iter must be >= 0")
        grid = np.asarray(self.sigma_grid, dtype=np.float64)
        if np.any(~np.isfinite(grid)) or np.any(grid <= 0):
            raise ContractError("sigma_grid entries must be finite and positive")
        if np.any(np.diff(grid) <= 0):
            raise ContractError("sigma_grid must be strictly increasing")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown:
            raise ContractError(f"unknown estimators: {', '.join(unknown)}")
        if not self.estimators:
            raise ContractError("at least one estimator is required")

    @property
    def seed(self) -> int:
        return self.scenario.seed


def _sigma_bits(sigma: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(sigma)))[0]


def derive_seed(seed: int, sigma_n_sq: float, trial: int) -> int:
    """64-bit seed of one trial stream, a hash of (master seed, sigma bits, trial index)."""
    words = []
    for value in (seed, _sigma_bits(sigma_n_sq), trial):
        words += [value & 0xFFFFFFFF, value >> 32]
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])


@dataclass
class TrialBatch:
    """``T`` scenarios sharing one config, stacked along axis 0."""

    x_true: np.ndarray
    H_true: np.ndarray
    H_hat: np.ndarray
    y: np.ndarray
    c_nn: np.ndarray
    uncertainty: UncertaintyModel
    h_true: np.ndarray | None = None
    h_hat: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.y.shape[0]

    def covariance(self, x: np.ndarray) -> np.ndarray:
        return self.uncertainty.covariance(x, self.c_nn)

    def take(self, idx) -> TrialBatch:
        pick = lambda a: None if a is None else a[idx]  # noqa: E731
        return replace(
            self,
            H_true=pick(self.H_true),
            H_hat=pick(self.H_hat),
            y=pick(self.y),
            h_true=pick(self.h_true),
            h_hat=pick(self.h_hat),
        )

    @classmethod
    def from_scenario(cls, s: Scenario) -> TrialBatch:
        wrap = lambda a: None if a is None else a[np.newaxis]  # noqa: E731
        return cls(
            x_true=s.x_true,
            H_true=wrap(s.H_true),
            H_hat=wrap(s.H_hat),
            y=wrap(s.y),
            c_nn=s.c_nn,
            uncertainty=s.uncertainty,
            h_true=wrap(s.h_true),
            h_hat=wrap(s.h_hat),
        )


def draw_batch(cfg: ScenarioConfig, seeds: Sequence[int]) -> TrialBatch:
    """Draw one scenario per seed from ``cfg``, ignoring ``cfg.seed``.

    Per trial the stream yields, in order, the standard normals for ``h``,
    for ``e`` and for ``n``.  Row ``t`` depends only on ``seeds[t]``.
    """
    n_h, n_y = cfg.n_h, cfg.n_y
    z = np.empty((len(seeds), 2 * n_h + n_y))
    for t, s in enumerate(seeds):
        z[t] = np.random.default_rng(s).standard_normal(2 * n_h + n_y)
    f_hh = _psd_factor(np.array(cfg.c_hh), "c_hh")
    f_ee = _psd_factor(cfg.c_ee_array, "c_ee")
    # elementwise multiply-and-sum keeps every row independent of the batch size
    h_true = np.array(cfg.h_mean) + (f_hh[None] * z[:, None, :n_h]).sum(axis=-1)
    e = (f_ee[None] * z[:, None, n_h : 2 * n_h]).sum(axis=-1)
    n = np.sqrt(cfg.sigma_n_sq) * z[:, 2 * n_h :]
    h_hat = h_true - e
    x = cfg.x_array
    H_true = conv_matrix(h_true, cfg.n_x)
    H_hat = conv_matrix(h_hat, cfg.n_x)
    y = (H_true * x).sum(axis=-1) + n
    return TrialBatch(
        x_true=x,
        H_true=H_true,
        H_hat=H_hat,
        y=y,
        c_nn=cfg.c_nn(),
        uncertainty=cfg.model(),
        h_true=h_true,
        h_hat=h_hat,
    )


def gen_scenario(cfg: ScenarioConfig) -> Scenario:
    """Draw a single scenario from ``cfg`` using ``cfg.seed``."""
    b = draw_batch(cfg, [cfg.seed])
    return Scenario(
        h_true=b.h_true[0],
        h_hat=b.h_hat[0],
        H_true=b.H_true[0],
        H_hat=b.H_hat[0],
        y=b.y[0],
        c_nn=b.c_nn,
        uncertainty=b.uncertainty,
        x_true=b.x_true,
    )


# --- estimator registry -------------------------------------------------------

# An estimator maps (batch, n_iter) to a stack of estimates (T, n_x) or, for
# iterative methods, a stack of traces (T, K + 1, n_x).  Rows that failed are NaN.
EstimatorFn = Callable[[TrialBatch, int], np.ndarray]


@dataclass(frozen=True)
class EstimatorSpec:
    fn: EstimatorFn
    iterative: bool = False


ESTIMATORS: dict[str, EstimatorSpec] = {}


def register_estimator(name: str, fn: EstimatorFn, iterative: bool = False) -> None:
    """Make ``fn`` available to sweeps under ``name``."""
    ESTIMATORS[name] = EstimatorSpec(fn, iterative)


def _rowwise(fn: Callable[[TrialBatch], np.ndarray], batch: TrialBatch) -> np.ndarray:
    # whole-batch call first; on a solver error, isolate the failing rows
    try:
        return fn(batch)
    except IterBlueError:
        rows = []
        for t in range(batch.size):
            try:
                rows.append(fn(batch.take(slice(t, t + 1)))[0])
            except IterBlueError:
                rows.append(None)
        shape = next((r.shape for r in rows if r is not None), None)
        if shape is None:
            return np.full((batch.size, batch.x_true.shape[0]), np.nan)
        return np.stack([np.full(shape, np.nan) if r is None else r for r in rows])


def _ls(batch: TrialBatch, n_iter: int) -> np.ndarray:
    return _rowwise(lambda b: ls_estimate(b.H_hat, b.y), batch)


def _blue_cnn(batch: TrialBatch, n_iter: int) -> np.ndarray:
    return _rowwise(lambda b: blue(b.H_hat, b.c_nn, b.y), batch)


def _perfect_model(batch: TrialBatch, n_iter: int) -> np.ndarray:
    return _rowwise(lambda b: blue(b.H_true, b.c_nn, b.y), batch)


def _perfect_cww(batch: TrialBatch, n_iter: int) -> np.ndarray:
    c_ww = batch.covariance(batch.x_true)
    return _rowwise(lambda b: blue(b.H_hat, c_ww, b.y), batch)


def _proposed(batch: TrialBatch, n_iter: int) -> np.ndarray:
    return _rowwise(lambda b: iterate_batch(b.H_hat, b.y, b.covariance, n_iter)[0], batch)


register_estimator("ls", _ls)
register_estimator("blue_cnn", _blue_cnn)
register_estimator("blue_perfect_model", _perfect_model)
register_estimator("blue_perfect_cww", _perfect_cww)
register_estimator("proposed", _proposed, iterative=True)

DEFAULT_ESTIMATORS = ("ls", "proposed", "blue_perfect_model", "blue_perfect_cww")


@dataclass
class TrialResult:
    """Squared errors ``|x_hat - x_true|**2`` per estimator.

    ``sq_errors[name]`` has shape ``(T, n_x)`` (final estimate), ``traces[name]``
    has shape ``(T, K + 1, n_x)`` for iterative estimators, and
    ``divergent[name]`` flags rows with a non-finite result.
    """

    sq_errors: dict[str, np.ndarray]
    traces: dict[str, np.ndarray]
    divergent: dict[str, np.ndarray]


def evaluate_batch(batch: TrialBatch, estimators: Sequence[str], n_iter: int) -> TrialResult:
    """Run every named estimator on every trial of ``batch``."""
    sq, traces, div = {}, {}, {}
    for name in estimators:
        spec = ESTIMATORS[name]
        out = spec.fn(batch, n_iter)
        err = (out - batch.x_true) ** 2
        if spec.iterative:
            traces[name] = err
            err = err[:, -1]
        sq[name] = err
        div[name] = ~np.all(np.isfinite(err), axis=-1)
    return TrialResult(sq, traces, div)


def run_trial(
    s: Scenario, estimators: Sequence[str] = DEFAULT_ESTIMATORS, n_iter: int = 10
) -> TrialResult:
    """Evaluate estimators on one scenario; arrays in the result lose the batch axis."""
    res = evaluate_batch(TrialBatch.from_scenario(s), estimators, n_iter)
    return TrialResult(
        {k: v[0] for k, v in res.sq_errors.items()},
        {k: v[0] for k, v in res.traces.items()},
        {k: bool(v[0]) for k, v in res.divergent.items()},
    )


# --- aggregation ----------------------------------------------------------------


@dataclass(frozen=True)
class MseRow:
    """Average MSE of one estimator at one sigma (or iteration).

    ``mse`` is the mean over non-divergent trials of ``||x_hat - x||^2 / n_x``;
    ``mc_stderr`` is the sample standard deviation of that per-trial quantity
    divided by the square root of the trial count.
    """

    estimator: str
    key: float | int
    mse: float
    mc_stderr: float
    trials: int
    divergent: int
    per_component: tuple[float, ...] = ()


@dataclass
class MseReport:
    kind: str  # "sigma" or "iteration"
    rows: list[MseRow]
    seed: int
    meta: dict[str, str] = field(default_factory=dict)

    def get(self, estimator: str, key) -> MseRow:
        for r in self.rows:
            if r.estimator == estimator and r.key == key:
                return r
        raise KeyError((estimator, key))

    def series(self, estimator: str) -> list[MseRow]:
        return [r for r in self.rows if r.estimator == estimator]

    @property
    def total_trials(self) -> int:
        return sum(r.trials + r.divergent for r in self.rows)

    @property
    def total_divergent(self) -> int:
        return sum(r.divergent for r in self.rows)

    def divergence_rate(self, estimator: str | None = None) -> float:
        rows = self.rows if estimator is None else self.series(estimator)
        total = sum(r.trials + r.divergent for r in rows)
        return sum(r.divergent for r in rows) / total if total else 0.0


def _aggregate(estimator: str, key, sq: np.ndarray, divergent: np.ndarray) -> MseRow:
    good = sq[~divergent]
    per_trial = good.mean(axis=-1)
    n = per_trial.shape[0]
    if n:
        mse = float(per_trial.mean())
        comp = tuple(float(v) for v in good.mean(axis=0))
    else:
        mse, comp = float("nan"), ()
    se = float(per_trial.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
    return MseRow(estimator, key, mse, se, n, int(divergent.sum()), comp)


def _cell(cfg: SweepConfig, sigma: float, chunk: int) -> TrialResult:
    scen = replace(cfg.scenario, sigma_n_sq=sigma)
    seeds = [derive_seed(cfg.seed, sigma, t) for t in range(cfg.trials)]
    parts = [
        evaluate_batch(draw_batch(scen, seeds[i : i + chunk]), cfg.estimators, cfg.n_iter)
        for i in range(0, len(seeds), chunk)
    ]
    cat = lambda attr: {  # noqa: E731
        k: np.concatenate([getattr(p, attr)[k] for p in parts]) for k in getattr(parts[0], attr)
    }
    return TrialResult(cat("sq_errors"), cat("traces"), cat("divergent"))


def _run_cells(cfg: SweepConfig, sigmas: Sequence[float], workers: int, chunk: int) -> list[TrialResult]:
    if workers <= 1 or len(sigmas) == 1:
        return [_cell(cfg, s, chunk) for s in sigmas]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: _cell(cfg, s, chunk), sigmas))


def mse_sweep(cfg: SweepConfig, workers: int = 1, chunk: int = 2500) -> MseReport:
    """Average MSE of each estimator at each grid sigma.

    Rows are ordered by estimator (config order), then by sigma.
    """
    results = _run_cells(cfg, cfg.sigma_grid, workers, chunk)
    rows = []
    for name in cfg.estimators:
        for sigma, res in zip(cfg.sigma_grid, results):
            rows.append(_aggregate(name, sigma, res.sq_errors[name], res.divergent[name]))
    return MseReport("sigma", rows, cfg.seed)


def convergence_curve(cfg: SweepConfig, workers: int = 1, chunk: int = 2500) -> MseReport:
    """Average MSE per iteration (0 = LS start) of every iterative estimator at a single sigma."""
    if len(cfg.sigma_grid) != 1:
        raise ContractError("convergence_curve needs exactly one sigma in the grid")
    sigma = cfg.sigma_grid[0]
    names = tuple(n for n in cfg.estimators if ESTIMATORS[n].iterative)
    if not names:
        raise ContractError("no iterative estimator selected")
    res = _run_cells(replace(cfg, estimators=names), [sigma], workers, chunk)[0]
    rows = []
    for name in names:
        tr = res.traces[name]
        for k in range(tr.shape[1]):
            rows.append(_aggregate(name, k, tr[:, k], res.divergent[name]))
    return MseReport("iteration", rows, cfg.seed)
