# %% [markdown]
# # Bayesian optimization with expected improvement
#
# ``bo_run`` fits a GP to the observations, maximizes expected improvement
# from many Sobol starts and evaluates the winner. Maximization negates the
# values internally.

# %%
import numpy as np

from rdopt import BoxDomain, bo_run, expected_improvement

print("EI(mu=0, var=1, best=0) =", expected_improvement(0.0, 1.0, 0.0))


def branin(p):
    x, y = p
    return (y - 5.1 / (4 * np.pi ** 2) * x ** 2 + 5 / np.pi * x - 6) ** 2 + 10 * (1 - 1 / (8 * np.pi)) * np.cos(x) + 10


dom = BoxDomain([-5.0, 0.0], [10.0, 15.0])
res = bo_run(branin, dom, 30, mode="minimize", rng=0, restarts=32)
print("best", res.best_point, res.best_value, "(global minimum 0.3979)")

# %%
for h in res.history[-5:]:
    print(h["iteration"], h["source"], np.round(h["point"], 3), round(h["value"], 4))
