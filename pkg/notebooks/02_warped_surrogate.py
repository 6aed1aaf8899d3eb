# %% [markdown]
# # A surrogate that respects a lower bound
#
# Figures of merit such as an enhancement factor are positive. A plain GP
# happily predicts negative values between samples; fitting the GP to
# transformed values ``g(y)`` and mapping predictions back with the monotone
# ``g^-1`` keeps every prediction above the bound.

# %%
import numpy as np

from rdopt import BoxDomain, fit_warped, gp
from rdopt.objectives import reference_ridge_plateau
from rdopt.sobol import sobol_in_domain
from rdopt.warp import derive_warp, g_inverse

w = derive_warp(0.0, 1.0, 0.0)
print(w)
print(g_inverse(w, np.array([-5.0, -1.0, 0.0, 2.0])))

# %% [markdown]
# Train both kinds of model on a 2-D cut through the reference landscape,
# where most of the box is close to zero and a narrow ridge is very tall.

# %%
f = reference_ridge_plateau(2)
dom = BoxDomain.cube(56.0, 616.0, 2)
X = sobol_in_domain(dom, 256)
y = f.evaluate_many(X)
plain = gp.fit(X, y, restarts=3, seed=0, domain=dom)
warped = fit_warped(X, y, restarts=3, seed=0, domain=dom)

test = sobol_in_domain(dom, 2048, skip=256)
print("plain GP minimum prediction:", plain.predict_batch(test).mean.min())
print("warped GP minimum prediction:", warped.predict_bounded_batch(test).median.min())

# %% [markdown]
# Bounded predictions come with asymmetric spreads derived from the
# transformed-space standard deviation.

# %%
print(warped.predict_bounded(f.spec.plateau_center))
print(warped.warp)
