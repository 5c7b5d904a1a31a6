# %% [markdown]
# # Curvature tour
#
# Build a few catalog spaces and look at their Weyl curvature at a handful
# of seeded probe points. Einstein-Weyl spaces have a vanishing trace-free
# symmetric Ricci part; the Faraday form F and the Weyl scalar curvature
# are what is left.

# %%
import numpy as np

from ewlab.catalog import catalog
from ewlab.charts import sample_points
from ewlab.weylgeom import ew_residual, faraday, scal_weyl

# %%
for label in ["flat", "hyperbolic", "taubnut", "eguchi-hanson-1"]:
    W = catalog(label).structure
    pts = sample_points(W.chart, 8, seed=0)
    ew = np.abs(ew_residual(W, pts)).max()
    F = np.abs(faraday(W, pts)).max()
    s = scal_weyl(W, pts)
    print(f"{label:16s} max|EW|={ew:.1e}  max|F|={F:.3f}  scal in [{s.min():+.3f}, {s.max():+.3f}]")

# %% [markdown]
# The Berger sphere family is Einstein-Weyl only for a < 1, with the Weyl
# form fitted numerically. At a = 1.5 the best fit is not Einstein-Weyl.

# %%
for a in (0.7, 1.5):
    e = catalog("berger", {"a": a})
    W = e.structure
    pts = sample_points(W.chart, 8, seed=0)
    print(f"berger a={a}: lambda={e.params.get('lambda', float('nan')):.6f}  "
          f"max|EW|={np.abs(ew_residual(W, pts)).max():.2e}")
