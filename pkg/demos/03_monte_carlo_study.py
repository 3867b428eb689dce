"""Reproduce a scaled-down slice of the benchmark simulation study.

The four standard settings cross a response family (Bernoulli logit or
Poisson log) with an independent or strongly correlated covariate pair.
This demo runs one cell at two sample sizes with 50 replications each
(the full protocol uses 200 or more) and prints the integrated squared
bias / variance split, the bad-fit screen, and the observed MISE decay.
Bandwidths follow the deviation rule h ~ sd * n^{-1/5}, so both bias and
variance shrink with n and the MISE should track the one-dimensional
n^{-4/5} rate that additive models retain in any dimension.

Run:  python3 demos/03_monte_carlo_study.py          (about a minute)
"""

import numpy as np

from sbgam import SimModel, run_study
from sbgam.sim import write_study_csv

reps = 50
cells = []
for n in (100, 400):
    model = SimModel.from_label("2,1", n=n, seed=2024)
    for est in ("nw", "ll"):
        res = run_study(model, estimator=est, reps=reps,
                        bandwidths=None, bandwidth_scale=2.0)
        cells.append(res)
        print(f"model (2,1) {est.upper()} n={n}: "
              f"ISB {res.isb_avg:.4f} + IV {res.iv_avg:.4f} "
              f"= MISE {res.mise_avg:.4f}  "
              f"[bad {res.bad_count}/{reps}, "
              f"{res.elapsed_seconds:.1f}s]")

for est in ("nw", "ll"):
    pair = [r for r in cells if r.estimator == est]
    ratio = pair[1].mise_avg / pair[0].mise_avg
    print(f"{est.upper()} MISE ratio n=400/n=100: {ratio:.3f} "
          f"(one-dimensional rate predicts about 0.33)")

write_study_csv(cells, "study_demo.csv")
print("\nwrote study_demo.csv (rows: metric, columns: estimator x n)")

# the same study is exactly reproducible, replication by replication,
# because each draw uses its own seed sequence
again = run_study(SimModel.from_label("2,1", n=100, seed=2024),
                  estimator="nw", reps=reps,
                  bandwidths=None, bandwidth_scale=2.0)
assert np.array_equal(again.mise, cells[0].mise)
print("re-run reproduced the first cell bit for bit")
