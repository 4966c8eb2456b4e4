# # Unstructured uncertainty
#
# Without convolution structure each entry of the matrix error is
# independent with its own variance ``V[i, j]``.  The overall-noise
# covariance is then diagonal: ``C_nn + diag(V |x|^2)``.

# %%
import numpy as np

from iterblue import IterationConfig, LinearProblem, Unstructured, blue, iterative_blue, ls_estimate
from iterblue.models import cov_unstructured

rng = np.random.default_rng(11)
n_y, n_x, sigma = 40, 4, 1e-6
x = np.array([2.0, -1.0, 0.5, 0.0])
H = rng.standard_normal((n_y, n_x))
V = rng.uniform(0.0, 1e-2, size=(n_y, n_x))
V[: n_y // 4] *= 100  # a quarter of the rows are far less reliable

# %% [markdown]
# Draw a few hundred measurements and compare LS, the iterative BLUE and the
# BLUE that knows the true covariance.

# %%
err = {"ls": [], "proposed": [], "oracle": []}
c_nn = sigma * np.eye(n_y)
model = Unstructured(V)
for _ in range(300):
    H_hat = H - rng.standard_normal((n_y, n_x)) * np.sqrt(V)
    y = H @ x + np.sqrt(sigma) * rng.standard_normal(n_y)
    prob = LinearProblem(y, H_hat, c_nn, model)
    err["ls"].append(np.mean((ls_estimate(H_hat, y) - x) ** 2))
    err["proposed"].append(np.mean((iterative_blue(prob, IterationConfig(3)).final - x) ** 2))
    err["oracle"].append(np.mean((blue(H_hat, cov_unstructured(V, x, c_nn), y) - x) ** 2))

for name, e in err.items():
    print(f"{name:10s} MSE = {np.mean(e):.3e}")

# %% [markdown]
# When every entry has the same variance the weighting is uniform, so the
# iterations cannot improve on least squares and return it unchanged.

# %%
flat = LinearProblem(y, H_hat, c_nn, Unstructured(np.full((n_y, n_x), 1e-3)))
tr = iterative_blue(flat, IterationConfig(5))
print("max |x_k - x_0|:", max(np.max(np.abs(e - tr.estimates[0])) for e in tr.estimates))
