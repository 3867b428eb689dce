"""Walk through a single-covariate fit, start to finish.

Simulates Poisson counts whose log mean is a smooth curve, fits it with
both smoothers, and compares the fitted component against the truth and
against the pointwise reference estimator.  With one covariate the
backfitting system has nothing to couple, so the additive fit and the
classical local smoother agree to machine precision; this is the quickest
sanity check the library offers.

Run:  python3 demos/01_fit_one_covariate.py
"""

import numpy as np

from sbgam import Dataset, fit_ll, fit_nw
from sbgam.oracles import newton_pointwise

rng = np.random.default_rng(42)
n = 400

x = rng.uniform(-2.0, 2.0, size=(n, 1))
truth = lambda t: 0.4 + 0.9 * np.sin(0.5 * np.pi * t)
y = rng.poisson(np.exp(truth(x[:, 0]))).astype(float)

# the dataset owns the mapping onto the unit working interval
ds = Dataset.from_raw(x, y)
h = 0.15

nw = fit_nw(ds, h, family="poisson")
ll = fit_ll(ds, h, family="poisson")

print(f"n = {n}, bandwidth = {h} (rescaled scale)")
print(f"NW: converged={nw.diagnostics.converged} in "
      f"{nw.diagnostics.outer_iterations} outer steps, "
      f"intercept {nw.eta0:+.4f}")
print(f"LL: converged={ll.diagnostics.converged} in "
      f"{ll.diagnostics.outer_iterations} outer steps, "
      f"intercept {ll.eta00:+.4f}")

# with d = 1 the fit must match the pointwise Newton solver exactly
grid = nw.grid
theta, ok = newton_pointwise(ds, h, grid=grid, family="poisson")
gap = np.abs(nw.eta0 + nw.components[0] - theta).max()
print(f"sup gap to the pointwise reference: {gap:.2e}")

# tabulate fitted vs true curve on a few original-scale points
print(f"\n{'x':>6} {'truth':>9} {'NW fit':>9} {'LL fit':>9} {'LL slope':>9}")
probe = np.linspace(-1.8, 1.8, 9)
span = ds.hi[0] - ds.lo[0]
for t in probe:
    eta_nw = nw.predict(np.array([[t]]))[0]
    eta_ll = ll.predict(np.array([[t]]))[0]
    u = (t - ds.lo[0]) / span
    slope = np.interp(u, grid.points[0], ll.derivative_curve(0)) / span
    print(f"{t:6.2f} {truth(t):9.4f} {eta_nw:9.4f} {eta_ll:9.4f} "
          f"{slope:9.4f}")

rms_nw = np.sqrt(np.mean((nw.predict(probe[:, None]) - truth(probe)) ** 2))
rms_ll = np.sqrt(np.mean((ll.predict(probe[:, None]) - truth(probe)) ** 2))
print(f"\nRMS error over the probe points: NW {rms_nw:.4f}, LL {rms_ll:.4f}")
print("LL is exact on linear pieces and loses less at the boundary;")
print("NW pays a design-density bias but needs one moment fewer.")
