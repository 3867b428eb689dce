"""Fit a five-covariate model without ever building the full grid.

Backfitting needs only one- and two-dimensional marginals of the kernel
weights, so memory grows with d * G + d^2 * G^2 rather than G^d.  This
demo fits d = 5 on a 21-point-per-axis working grid (21^5 would be four
million cells per field if materialized) and reports timing, iteration
counts, and the interior accuracy of each recovered component.

Run:  python3 demos/05_many_covariates.py          (about ten seconds)
"""

import time

import numpy as np

from sbgam import Dataset, Grid, fit_nw

rng = np.random.default_rng(12)
n, d = 1500, 5

x = rng.uniform(-1.0, 1.0, size=(n, d))
parts = [
    np.sin(np.pi * x[:, 0]),
    0.8 * x[:, 1] ** 2 - 0.8 / 3.0,
    0.6 * x[:, 2],
    -0.5 * np.abs(x[:, 3]) + 0.25,
    np.zeros(n),
]
eta = 0.3 + sum(parts)
y = eta + rng.normal(scale=0.4, size=n)

ds = Dataset.with_support(x, y, -1.0, 1.0)
grid = Grid.uniform(d, 21)

t0 = time.perf_counter()
fit = fit_nw(ds, 0.2, grid=grid)
dt = time.perf_counter() - t0

diag = fit.diagnostics
print(f"d={d}, n={n}, grid 21 points per axis")
print(f"fit time {dt:.2f}s, {diag.outer_iterations} outer steps, "
      f"inner sweeps per step: {diag.inner_sweep_counts}")
print(f"intercept {fit.eta0:+.4f} (truth 0.3)")

truths = [
    lambda t: np.sin(np.pi * t),
    lambda t: 0.8 * t * t - 0.8 / 3.0,
    lambda t: 0.6 * t,
    lambda t: -0.5 * np.abs(t) + 0.25,
    lambda t: 0.0 * t,
]
for j in range(d):
    xo = ds.to_original(grid.points[j], j)
    tv = truths[j](xo)
    tv = tv - np.trapezoid(tv, xo) / 2.0
    interior = (grid.points[j] > 0.15) & (grid.points[j] < 0.85)
    err = np.abs(fit.components[j] - tv)[interior].max()
    print(f"component {j + 1}: interior max error {err:.3f}")
print("component 5 is genuinely zero; its fitted curve is pure noise "
      "and should be small")
