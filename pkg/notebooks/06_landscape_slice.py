# %% [markdown]
# # Landscape slices for plotting
#
# A slice evaluates the surrogate (or the model) on a grid in one parameter
# plane around a design and returns the 1/2/3 sigma ellipses of the
# manufacturing distribution for overlaying. The CLI writes the same data as
# CSV plus a JSON sidecar.

# %%
import tempfile
from pathlib import Path

import numpy as np

from rdopt import landscape_slice
from rdopt.cli import read_slice, write_slice
from rdopt.objectives import reference_ridge_plateau

f = reference_ridge_plateau(4)
sl = landscape_slice(f, f.spec.ridge_center, 0, 1, 41, 3.0, 16.8)
print("ridge value range on the slice:", sl.values.min(), sl.values.max())
print(sl.ellipses[0])

# %%
out = Path(tempfile.mkdtemp()) / "slice.csv"
write_slice(sl, out, ("w", "h"), source="model")
pi, pj, vals = read_slice(out)
print(out.read_text().splitlines()[:3])
print("CSV round trip exact:", np.array_equal(vals, sl.values))
