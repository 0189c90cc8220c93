"""Gradient refinement of slices by Adam ascent on the minibatch SKSD-g statistic.

Rows are renormalized to the unit sphere after every update.  Bandwidths
are recomputed from each minibatch's projections and treated as constants
when differentiating.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _accel
from .discrepancy import SliceSet, projected_bandwidths
from .kernels import KernelSpec

__all__ = [
    "GoConfig",
    "Adam",
    "sksd_slice_gradient",
    "slice_gradients",
    "refine_slices",
]


@dataclass(frozen=True)
class GoConfig:
    epochs: int = 50
    batch_size: int = 100
    step_size: float = 1e-3
    moment_decays: tuple = (0.9, 0.99)
    optimize_r: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if not all(0 <= b < 1 for b in self.moment_decays):
            raise ValueError("moment decays must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 2:
            raise ValueError("epochs must be >= 0 and batch_size >= 2")


class Adam:
    """Minimal Adam optimizer over a single array parameter (descent)."""

    def __init__(self, shape, lr=1e-3, betas=(0.9, 0.99), eps=1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, param, grad):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad**2
        m_hat = self.m / (1 - self.b1**self.t)
        v_hat = self.v / (1 - self.b2**self.t)
        return param - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def slice_gradients(X, scores, R, G, bandwidths, use_numba=True):
    """Per-slice U-statistic values and gradients with respect to r and g.

    Returns ``(values (m,), grad_r (m, D), grad_g (m, D))`` for the mu
    U-statistic of each slice pair on the batch ``X``.
    """
    X = np.asarray(X, dtype=float)
    R = np.atleast_2d(R)
    G = np.atleast_2d(G)
    n = X.shape[0]
    norm = 1.0 / (n * (n - 1))
    if use_numba and _accel.slice_terms is not None:
        m = R.shape[0]
        c = np.sum(R * G, axis=1)
        values, dc = np.empty(m), np.empty(m)
        v, w = np.zeros((m, n)), np.zeros((m, n))
        _accel.slice_terms(
            np.ascontiguousarray(X @ G.T),
            np.ascontiguousarray(scores @ R.T),
            c,
            np.ascontiguousarray(bandwidths, dtype=float),
            values,
            v,
            dc,
            w,
        )
        grad_g = norm * (w @ X + dc[:, None] * R)
        grad_r = norm * (v @ scores + dc[:, None] * G)
        return norm * values, grad_r, grad_g
    A = X @ G.T
    s = (scores @ R.T).T[:, :, None]  # (m, n, 1)
    st = np.swapaxes(s, 1, 2)
    c = np.sum(R * G, axis=1)[:, None, None]
    h = np.asarray(bandwidths, dtype=float)[:, None, None]
    d = A.T[:, :, None] - A.T[:, None, :]
    off = 1.0 - np.eye(n)
    K = np.exp(-(d**2) / h) * off
    two_d_h = 2 * d / h
    g2 = two_d_h * K  # dk/db at (a_i, a_j); equals dk/da at (a_j, a_i)
    chi = (2 / h - 4 * d**2 / h**2) * K
    ds = s - st  # s_i - s_j

    values = norm * np.sum(s * st * K + c * g2 * ds + c**2 * chi, axis=(1, 2))

    v = 2 * (np.matmul(K, s)[:, :, 0] + c[:, :, 0] * g2.sum(axis=2))
    dc = np.sum(-g2 * st + g2 * s + 2 * c * chi, axis=(1, 2))
    M = (
        s * st * (-two_d_h) * K
        + c * ds * (2 / h) * (1 - 2 * d**2 / h) * K
        + c**2 * K * (-12 * d / h**2 + 8 * d**3 / h**3)
    )
    grad_g = norm * ((M.sum(axis=2) - M.sum(axis=1)) @ X + dc[:, None] * R)
    grad_r = norm * (v @ scores + dc[:, None] * G)
    return values, grad_r, grad_g


def sksd_slice_gradient(minibatch, model_p, r, g, spec: KernelSpec):
    """Gradient of the minibatch mu U-statistic for one pair, at a fixed bandwidth."""
    X = np.asarray(minibatch, dtype=float)
    _, gr, gg = slice_gradients(X, model_p.score(X), np.asarray(r)[None], np.asarray(g)[None], [spec.bandwidth_sq])
    return gr[0], gg[0]


def _unit_rows(M):
    return M / np.linalg.norm(M, axis=1, keepdims=True)


def refine_slices(samples, model_p, slices: SliceSet, cfg: GoConfig) -> SliceSet:
    """Adam ascent of the minibatch SKSD-g statistic over g (and r) rows."""
    X = np.asarray(samples, dtype=float)
    if cfg.epochs == 0:
        return slices
    scores = model_p.score(X)
    n = X.shape[0]
    bs = min(cfg.batch_size, n)
    rng = np.random.default_rng(cfg.seed)
    R, G = slices.r.copy(), slices.g.copy()
    opt_g = Adam(G.shape, cfg.step_size, cfg.moment_decays)
    opt_r = Adam(R.shape, cfg.step_size, cfg.moment_decays) if cfg.optimize_r else None
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n - bs + 1, bs):
            idx = order[start : start + bs]
            xb, sb = X[idx], scores[idx]
            h = projected_bandwidths(xb, G)
            _, grad_r, grad_g = slice_gradients(xb, sb, R, G, h)
            G = _unit_rows(opt_g.step(G, -grad_g))
            if opt_r is not None:
                R = _unit_rows(opt_r.step(R, -grad_r))
    return SliceSet(R, G)
