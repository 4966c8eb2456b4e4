# # How many iterations are needed?
#
# MSE of the iterate ``x_k`` at one noise level.  Almost everything is
# gained by the first update; later iterations barely move.

# %%
from iterblue.simulation import SweepConfig, convergence_curve

cfg = SweepConfig(sigma_grid=(1e-6,), trials=3000, n_iter=10)
curve = convergence_curve(cfg)
rows = curve.series("proposed")
for r in rows:
    print(f"k = {r.key:2d}   MSE = {r.mse:.4e} +- {r.mc_stderr:.1e}")

# %%
m0, m1, m10 = rows[0].mse, rows[1].mse, rows[10].mse
print(f"share of the total gain left after one update: {(m1 - m10) / (m0 - m10):.2e}")
