# # MSE versus measurement-noise variance
#
# A reduced version of the reference campaign: 13 noise levels and 2000
# trials per level (the full run uses 31 levels and 10^4 trials; see
# ``iterblue sweep``).  At low noise the matrix error dominates and
# weighting by the right covariance pays off by more than an order of
# magnitude.  At high noise ``w`` is nearly white and every estimator
# collapses onto least squares.

# %%
import sys

from iterblue.cli import emit_report
from iterblue.simulation import SweepConfig, default_sigma_grid, mse_sweep

cfg = SweepConfig(sigma_grid=default_sigma_grid(per_decade=2), trials=2000)
report = mse_sweep(cfg, workers=4)

# %%
names = cfg.estimators
print(f"{'sigma_n^2':>10s}" + "".join(f"{n:>20s}" for n in names))
for sigma in cfg.sigma_grid:
    print(f"{sigma:10.1e}" + "".join(f"{report.get(n, sigma).mse:20.3e}" for n in names))

# %% [markdown]
# Optional plot, if matplotlib happens to be installed.

# %%
try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None
if plt is not None and "--plot" in sys.argv:
    for n in names:
        rows = report.series(n)
        plt.loglog([r.key for r in rows], [r.mse for r in rows], marker="o", label=n)
    plt.xlabel("measurement noise variance")
    plt.ylabel("MSE")
    plt.legend()
    plt.show()

# %% [markdown]
# The same table in the CLI's CSV format:

# %%
emit_report(report, sys.stdout)
