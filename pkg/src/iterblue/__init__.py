"""Iterative BLUE for linear models with an uncertain measurement matrix."""

__version__ = "0.1.0"

from iterblue.errors import (  # noqa: E402
    ConfigError,
    ContractError,
    DimensionError,
    DivergenceError,
    EstimationError,
    IterBlueError,
    NotPositiveDefiniteError,
    RankError,
)
from iterblue.estimators import (  # noqa: E402
    EstimateTrace,
    IterationConfig,
    LinearProblem,
    blue,
    iterative_blue,
    ls_estimate,
    oracle_blue_perfect_cww,
    oracle_blue_perfect_model,
)
from iterblue.models import (  # noqa: E402
    Convolution,
    ModelDims,
    Unstructured,
    build_px,
    conv_matrix,
    cov_convolution,
    cov_unstructured,
    shift_matrix,
)
from iterblue.numerics import lstsq, mat_mul, solve_spd  # noqa: E402
