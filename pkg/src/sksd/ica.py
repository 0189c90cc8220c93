"""Training a linear ICA model by minimizing the sliced Stein discrepancy.

The model is ``x = W z`` with ``z`` a joint multivariate-t.  The loss is the
SKSD-g U-statistic of a minibatch under the model score; slices are refreshed
with the active-slice algorithm at the start of each epoch and the g rows are
then pushed adversarially (ascent) while W descends.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .active_slices import active_slice_algorithm
from .discrepancy import SliceSet, ksd_gram, projected_bandwidths, sksd_gram_sum, u_statistic
from .kernels import median_heuristic_ambient
from .models import ICA
from .refinement import Adam, slice_gradients

__all__ = [
    "IcaConfig",
    "TrainState",
    "random_mixing",
    "generate_ica_data",
    "ica_loss",
    "ica_loss_grad_W",
    "ksd_loss",
    "ksd_loss_grad_W",
    "heldout_nll",
    "train_ica",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IcaConfig:
    iterations: int = 15000
    epoch_length: int = 200
    batch_size: int = 100
    step_size: float = 1e-3
    moment_decays: tuple = (0.9, 0.99)
    estimator: str = "ke"
    slice_points: int = 3000
    df: float = 5.0
    checkpoint_every: int = 200
    loss: str = "sksd"
    seed: int = 0

    def __post_init__(self):
        if min(self.iterations, self.epoch_length, self.checkpoint_every) < 1:
            raise ValueError("iteration counts must be positive")
        if self.batch_size < 2 or self.slice_points < 2:
            raise ValueError("batch_size and slice_points must be >= 2")
        if self.step_size <= 0 or self.df <= 0:
            raise ValueError("step_size and df must be positive")
        if self.estimator not in ("ke", "ge"):
            # the exact field would need the (unknown) data density
            raise ValueError(f"estimator must be 'ke' or 'ge', got {self.estimator!r}")
        if self.loss not in ("sksd", "ksd"):
            raise ValueError(f"unknown loss {self.loss!r}")


@dataclass
class TrainState:
    W: np.ndarray
    slices: SliceSet | None = None
    opt_W: Adam | None = None
    opt_g: Adam | None = None
    iteration: int = 0
    rejected_steps: int = 0


def random_mixing(dim, rng, max_tries=100_000):
    """Gaussian matrix redrawn until its condition number is below ``dim``."""
    for _ in range(max_tries):
        W = rng.standard_normal((dim, dim))
        if dim == 1 or np.linalg.cond(W) < dim:
            return W
    raise RuntimeError(f"no mixing matrix with condition number < {dim} in {max_tries} draws")


def generate_ica_data(dim, n_train, n_test, rng, df=5.0):
    """Returns ``(W_true, train, test)`` with ``x = W z`` and joint-t ``z``."""
    W = random_mixing(dim, rng)
    model = ICA(W, df)
    data = model.sample(n_train + n_test, rng)
    return W, data[:n_train], data[n_train:]


def _model(W, df):
    return ICA(W, df)


def _mvt_jvp(Z, V, df):
    """Rows of ``J_z(z_i) v_i`` for the joint-t score, without forming J."""
    D = Z.shape[1]
    q = df + np.sum(Z**2, axis=1, keepdims=True)
    zv = np.sum(Z * V, axis=1, keepdims=True)
    return -(df + D) * (V / q - 2 * Z * zv / q**2)


def _chain_to_W(X, model: ICA, U):
    """Pull a score sensitivity ``dL/ds_i = U_i`` back to ``dL/dW``."""
    A = model.W_inv
    Z = X @ A.T
    sz = model.base._score(Z)
    AU = U @ A.T
    G = sz.T @ U + _mvt_jvp(Z, AU, model.df).T @ X
    return -A.T @ G @ A.T


def _sksd_sensitivity(X, scores, slices: SliceSet, bandwidths):
    n = X.shape[0]
    norm = 1.0 / (n * (n - 1))
    A = X @ slices.g.T
    s = (scores @ slices.r.T).T  # (m, n)
    c = np.sum(slices.r * slices.g, axis=1)[:, None, None]
    h = np.asarray(bandwidths, dtype=float)[:, None, None]
    d = A.T[:, :, None] - A.T[:, None, :]
    K = np.exp(-(d**2) / h) * (1.0 - np.eye(n))
    v = 2 * norm * (np.matmul(K, s[:, :, None])[:, :, 0] + c[:, :, 0] * (2 * d / h * K).sum(axis=2))
    return v.T @ slices.r  # (n, D)


def ica_loss(batch, W, slices: SliceSet, df=5.0, bandwidths=None):
    """SKSD-g statistic of ``batch`` under ``ICA(W)``."""
    X = np.asarray(batch, dtype=float)
    if X.shape[0] < 2:
        raise ValueError("batch size must be >= 2")
    model = _model(W, df)
    if bandwidths is None:
        bandwidths = projected_bandwidths(X, slices.g)
    return u_statistic(sksd_gram_sum(X, model.score(X), slices, bandwidths))


def ica_loss_grad_W(batch, W, slices: SliceSet, df=5.0, bandwidths=None):
    """Analytic gradient of :func:`ica_loss` with respect to ``W``.

    Bandwidths depend only on ``batch @ g`` and so are constant in ``W``.
    """
    X = np.asarray(batch, dtype=float)
    if X.shape[0] < 2:
        raise ValueError("batch size must be >= 2")
    model = _model(W, df)
    if bandwidths is None:
        bandwidths = projected_bandwidths(X, slices.g)
    U = _sksd_sensitivity(X, model.score(X), slices, bandwidths)
    return _chain_to_W(X, model, U)


def ksd_loss(batch, W, df=5.0, spec=None):
    X = np.asarray(batch, dtype=float)
    spec = spec or median_heuristic_ambient(X)
    return u_statistic(ksd_gram(X, _model(W, df).score(X), spec))


def ksd_loss_grad_W(batch, W, df=5.0, spec=None):
    X = np.asarray(batch, dtype=float)
    n = X.shape[0]
    spec = spec or median_heuristic_ambient(X)
    h = spec.bandwidth_sq
    model = _model(W, df)
    S = model.score(X)
    diff = X[:, None, :] - X[None, :, :]
    K = np.exp(-np.sum(diff**2, axis=2) / h)
    np.fill_diagonal(K, 0.0)
    # dL/ds_i = 2/(N(N-1)) sum_j K_ij (s_j + 2 (x_i - x_j) / h)
    U = 2.0 / (n * (n - 1)) * (K @ S + 2 / h * np.einsum("ij,ijd->id", K, diff))
    return _chain_to_W(X, model, U)


def heldout_nll(test_data, W, df=5.0):
    """Mean negative log-likelihood including the ``log|det W|`` term."""
    return float(-np.mean(_model(W, df).logp(np.asarray(test_data, dtype=float))))


def _acceptable(W, max_cond=1e8):
    if not np.all(np.isfinite(W)):
        return False
    sign, logdet = np.linalg.slogdet(W)
    # |det| compared against the scale of W so that rescaling does not trip it
    scale = W.shape[0] * np.log(max(np.linalg.norm(W, 2), 1e-300))
    return sign != 0 and logdet - scale > np.log(1e-12) and np.linalg.cond(W) < max_cond


def _refresh_slices(state: TrainState, train, cfg: IcaConfig, rng):
    n = train.shape[0]
    idx = rng.choice(n, size=min(cfg.slice_points, n), replace=False)
    subset = train[idx]
    model = _model(state.W, cfg.df)
    state.slices = active_slice_algorithm(subset, model, estimator=cfg.estimator, r_mode="active")
    state.opt_g = Adam(state.slices.g.shape, cfg.step_size, cfg.moment_decays)


def train_ica(train_data, test_data, dim, cfg: IcaConfig = IcaConfig(), W_init=None):
    """Returns ``(W_final, nll_curve)`` with ``nll_curve`` a list of ``(iter, nll)``.

    The curve starts with the NLL of the initial ``W`` at iteration 0.
    """
    train = np.asarray(train_data, dtype=float)
    test = np.asarray(test_data, dtype=float)
    if train.ndim != 2 or train.shape[1] != dim or test.ndim != 2 or test.shape[1] != dim:
        raise ValueError(f"data must be shaped (N, {dim})")
    if train.shape[0] < cfg.batch_size:
        raise ValueError("fewer training points than the batch size")
    rng = np.random.default_rng(cfg.seed)
    W = random_mixing(dim, rng) if W_init is None else np.array(W_init, dtype=float)
    state = TrainState(W=W, opt_W=Adam(W.shape, cfg.step_size, cfg.moment_decays))
    curve = [(0, heldout_nll(test, W, cfg.df))]
    n = train.shape[0]
    order = rng.permutation(n)
    cursor = 0
    for it in range(1, cfg.iterations + 1):
        if cfg.loss == "sksd" and (it - 1) % cfg.epoch_length == 0:
            _refresh_slices(state, train, cfg, rng)
        if cursor + cfg.batch_size > n:
            order = rng.permutation(n)
            cursor = 0
        batch = train[order[cursor : cursor + cfg.batch_size]]
        cursor += cfg.batch_size

        if cfg.loss == "sksd":
            sl = state.slices
            h = projected_bandwidths(batch, sl.g)
            model = _model(state.W, cfg.df)
            _, _, grad_g = slice_gradients(batch, model.score(batch), sl.r, sl.g, h)
            G = state.opt_g.step(sl.g, -grad_g)
            state.slices = SliceSet(sl.r, G / np.linalg.norm(G, axis=1, keepdims=True))
            gW = ica_loss_grad_W(batch, state.W, state.slices, cfg.df)
        else:
            gW = ksd_loss_grad_W(batch, state.W, cfg.df)

        W_new = state.opt_W.step(state.W, gW)
        if _acceptable(W_new):
            state.W = W_new
        else:
            state.rejected_steps += 1
        state.iteration = it
        if it % cfg.checkpoint_every == 0 or it == cfg.iterations:
            nll = heldout_nll(test, state.W, cfg.df)
            curve.append((it, nll))
            log.debug("iter %d test nll %.4f", it, nll)
    return state.W, curve
