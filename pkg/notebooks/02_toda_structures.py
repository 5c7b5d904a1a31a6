# %% [markdown]
# # Counting Toda structures
#
# A Toda structure is a parallel section of a rank-4 connection. Its
# curvature operators at the base point bound the count from above, and
# loop holonomy confirms the survivors.

# %%
from ewlab.catalog import catalog
from ewlab.toda import toda_structure_count

# %%
for label in ["flat", "hyperbolic", "taubnut"]:
    W = catalog(label).structure
    res = toda_structure_count(W)
    print(f"{label:12s} bound={res.upper_bound} confirmed={res.confirmed} "
          f"gap={res.gap:.1e} loop={res.loop_residual:.1e}")

# %% [markdown]
# With two structures the Wronskian K is a Killing field. On Ward spaces it
# points along the axial direction.

# %%
import numpy as np
from ewlab.toda import wronskian, axial_symmetry_checks

W = catalog("taubnut").structure
res = toda_structure_count(W)
K = wronskian(W, res.basis[0], res.basis[1])
base = res.base
print("K at base:", np.round(K(base[None])[0], 6))
print(axial_symmetry_checks(W, K, base[None]))
