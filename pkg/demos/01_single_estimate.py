# # One draw, four estimators
#
# A random 5-tap impulse response ``h`` is convolved with a short input
# ``x``.  We only know ``h_hat = h - e``, so the equation ``y = H_hat x + w``
# carries an overall noise ``w = B x + n`` whose covariance depends on the
# very ``x`` we want.  The iterative BLUE starts at least squares and keeps
# plugging its own estimate back into that covariance.

# %%
import numpy as np

from iterblue import IterationConfig, iterative_blue
from iterblue.simulation import ScenarioConfig, gen_scenario, run_trial

cfg = ScenarioConfig(sigma_n_sq=1e-7, seed=3)
s = gen_scenario(cfg)
print("true x      ", s.x_true)
print("h_true      ", np.round(s.h_true, 4))
print("h_hat       ", np.round(s.h_hat, 4))

# %% [markdown]
# The iterate trace: ``x_0`` is least squares, the rest are BLUE updates.

# %%
trace = iterative_blue(s.problem, IterationConfig(n_iter=5))
for k, x in enumerate(trace.estimates):
    print(f"x_{k} = {x}   sq.err = {np.mean((x - s.x_true) ** 2):.3e}")

# %% [markdown]
# Compared with the two oracles, which know the true matrix or the true
# overall-noise covariance.  The proposed estimator should sit on top of the
# covariance oracle.

# %%
res = run_trial(s, n_iter=5)
for name, err in res.sq_errors.items():
    print(f"{name:20s} {np.atleast_1d(err)[-1]:.3e}")
