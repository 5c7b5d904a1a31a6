# %% [markdown]
# # Ward profiles and the LeBrun-Ward height
#
# Any axisymmetric harmonic V(rho, eta) yields an Einstein-Weyl space. Here
# we check harmonicity for two profiles and integrate the height function
# along a short path.

# %%
import numpy as np

from ewlab.charts import sample_points
from ewlab.ward import harmonic_residual, lw_height, point_source, taubnut_profile

# %%
for P in (point_source(1.0), taubnut_profile(1.0, 1.0, 1.0)):
    pts = sample_points(P.chart, 50, seed=0)
    print(P.label, "max |Laplacian V| =", f"{np.abs(harmonic_residual(P, pts)).max():.1e}")

# %%
P = taubnut_profile(1.0, 1.0, 1.0)
path = np.array([[0.5, -0.5, 0.0], [0.5, 0.5, 0.0], [1.2, 0.5, 0.0]])
print("height gained along the path:", lw_height(P, path))
