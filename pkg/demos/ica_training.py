"""Learning an ICA mixing matrix by minimizing the sliced discrepancy.

The score of ICA(W) only needs W^{-1}, so no normalizing constant is
involved during training; held-out NLL is only used for monitoring.
Because the source distribution is spherical, W is identified only up to
an orthogonal factor, so we compare W W^T rather than W itself.
"""

import numpy as np

from sksd.ica import IcaConfig, generate_ica_data, heldout_nll, train_ica

DIM = 5
data_rng = np.random.default_rng(0)
W_true, train, test = generate_ica_data(DIM, 2000, 500, data_rng)

cfg = IcaConfig(iterations=1000, epoch_length=200, checkpoint_every=100, seed=1)
W, curve = train_ica(train, test, DIM, cfg)

for it, nll in curve:
    print(f"iter {it:5d}  test NLL {nll:.4f}")
print(f"generator W    test NLL {heldout_nll(test, W_true):.4f}")

C, C_true = W @ W.T, W_true @ W_true.T
print(f"relative error of W W^T: {np.linalg.norm(C - C_true) / np.linalg.norm(C_true):.3f}")
