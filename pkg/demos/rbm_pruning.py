"""Testing a perturbed RBM with a few pruned active slices.

The data come from an RBM whose weights were jittered by sigma; the model
is the unperturbed RBM.  Keeping only the top m eigenvectors of S already
gives most of the power, and the test cost grows with m.
"""

import numpy as np

from sksd.gof import MethodConfig, RBMBenchmark, run_trials

TRIALS = 10

for sigma in (0.0, 0.02, 0.05):
    bench = RBMBenchmark(dim=20, n_hidden=15, sigma=sigma, burn_in=1000)
    cells = []
    for m in (1, 3, 20):
        method = MethodConfig(r_mode="active", prune=m)
        records = run_trials(bench, method, TRIALS, seed=2)
        rate = np.mean([r["reject"] for r in records])
        secs = np.mean([r["seconds"] for r in records])
        cells.append(f"m={m}: {rate:.2f} ({secs:.2f}s)")
    print(f"sigma={sigma:<5} " + "   ".join(cells))
