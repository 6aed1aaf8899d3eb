# %% [markdown]
# # Sobol sampling and parameter boxes
#
# Training data and robust-map centers are Sobol points scaled to a box.
# The first point is the lower corner, the second the box center, and the
# first 2^k points put exactly one point in every 1/2^k slab of each axis.

# %%
import numpy as np

from rdopt import BoxDomain, narrow_domain, shrink_eval_domain, sobol_sequence
from rdopt.sobol import sobol_in_domain

print(sobol_sequence(1, 8).ravel())

# %%
wide = BoxDomain.cube(56.0, 616.0, 4, labels=("w", "h", "a", "d"), units="nm")
pts = sobol_in_domain(wide, 1024)
print(pts[:3])
counts = np.bincount(((pts[:, 0] - 56) / 560 * 16).astype(int), minlength=16)
print("points per 1/16 slab along w:", counts)

# %% [markdown]
# Robust estimates need manufacturing samples that stay where the surrogate
# was trained, so centers come from the training box shrunk by three sigma.
# The refined second pass uses a box of ±5 sigma around the first winner.

# %%
sigma = 16.8
print(shrink_eval_domain(wide, sigma))
print(narrow_domain([428.6, 282.5, 369.5, 253.0], sigma, 5.0))
