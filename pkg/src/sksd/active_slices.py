"""Spectral search for active slices.

``r`` slices are eigenvectors of ``S = E_q[Delta Delta^T]`` and each ``g_r``
is the top eigenvector of ``H_r = E_q[(J^T r)(J^T r)^T]`` where ``J`` is the
Jacobian of the score difference.  Eigenvalues are sorted in descending
order everywhere in this module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .discrepancy import SliceSet
from .score_estimation import DEFAULT_RIDGE, ScoreDiffField, build_field

__all__ = [
    "SpectralSummary",
    "symmetric_eig",
    "compute_S",
    "compute_H_r",
    "compute_H_batch",
    "active_slice_algorithm",
    "eig_perturbation_bound",
]

# H_r with a top eigenvalue at or below this is treated as zero
DEGENERATE_EIG = 1e-12


def symmetric_eig(M):
    """Descending eigendecomposition with the largest-|component| of each vector positive.

    Works on a single matrix or a stack ``(..., D, D)``.
    """
    M = np.asarray(M, dtype=float)
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    lam, V = np.linalg.eigh(M)
    lam = lam[..., ::-1]
    V = V[..., ::-1]
    idx = np.argmax(np.abs(V), axis=-2)
    lead = np.take_along_axis(V, idx[..., None, :], axis=-2)
    V = V * np.where(lead < 0, -1.0, 1.0)
    return lam, V


@dataclass
class SpectralSummary:
    S: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    H: np.ndarray | None = None
    H_eigenvalues: np.ndarray | None = None
    g_dirs: np.ndarray | None = None
    extra: dict = field(default_factory=dict)


def compute_S(field_: ScoreDiffField) -> SpectralSummary:
    """Second-moment matrix of the score difference and its spectrum."""
    delta = np.asarray(field_.values, dtype=float)
    if delta.shape[0] < 2:
        raise ValueError("need at least 2 support points")
    if not np.all(np.isfinite(delta)):
        raise ValueError("score difference contains non-finite values")
    S = delta.T @ delta / delta.shape[0]
    S = 0.5 * (S + S.T)
    lam, V = symmetric_eig(S)
    return SpectralSummary(S=S, eigenvalues=lam, eigenvectors=V)


def compute_H_batch(jacobians, R):
    """``H_r`` for every row of ``R``; returns (H (m, D, D), top eigenvalues, g rows).

    Slices whose ``H_r`` is numerically zero fall back to ``g_r = r``.
    """
    J = np.asarray(jacobians, dtype=float)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n = J.shape[0]
    grads = np.tensordot(R, J, axes=([1], [1]))  # (m, n, D): rows J_n^T r
    H = np.matmul(np.swapaxes(grads, 1, 2), grads) / n
    lam, V = symmetric_eig(H)
    top = lam[:, 0]
    G = V[:, :, 0].copy()
    degenerate = ~(top > DEGENERATE_EIG)
    G[degenerate] = R[degenerate] / np.linalg.norm(R[degenerate], axis=1, keepdims=True)
    return H, top, G


def compute_H_r(field_: ScoreDiffField, r, jacobians=None):
    """``H_r`` and its top eigenpair ``(lambda, g_r)``."""
    J = field_.jacobian_at_support() if jacobians is None else jacobians
    H, top, G = compute_H_batch(J, np.asarray(r, dtype=float)[None])
    return H[0], (float(top[0]), G[0])


def _noisy_unit(M, gamma, rng):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if gamma > 0:
        M = M + gamma * rng.standard_normal(M.shape)
    return M / np.linalg.norm(M, axis=1, keepdims=True)


def active_slice_algorithm(
    samples,
    p,
    q=None,
    estimator="ke",
    prune=None,
    gamma=0.0,
    refine=None,
    seed=None,
    r_mode="active",
    ridge=DEFAULT_RIDGE,
    field=None,
    return_summary=False,
):
    """Active slices from samples of ``q`` and the score of ``p``.

    Parameters
    ----------
    estimator : {"ex", "ke", "ge"}
        How the score difference is built; ``"ex"`` needs the model ``q``.
    prune : int, optional
        Keep only the top ``prune`` eigenvectors of ``S``.
    gamma : float
        Standard deviation of the Gaussian noise added to each slice before
        renormalizing it to the unit sphere.
    refine : GoConfig, optional
        Run gradient refinement on ``samples`` afterwards.
    r_mode : {"active", "identity"}
        ``"identity"`` fixes the r basis to the coordinate axes; with pruning
        the axes with the largest diagonal entries of ``S`` are kept.
    field : ScoreDiffField, optional
        Reuse a prebuilt field instead of constructing one.
    """
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    D = X.shape[1]
    if prune is not None and not 1 <= int(prune) <= D:
        raise ValueError(f"pruning level must lie in [1, {D}], got {prune}")
    rng = np.random.default_rng(seed)
    if field is None:
        field = build_field(estimator, X, p, q, ridge=ridge)
    summary = compute_S(field)
    m = D if prune is None else int(prune)
    if r_mode == "active":
        R = summary.eigenvectors[:, :m].T
    elif r_mode == "identity":
        order = np.argsort(-np.diag(summary.S), kind="stable")[:m] if prune is not None else np.arange(D)
        R = np.eye(D)[order]
    else:
        raise ValueError(f"unknown r_mode {r_mode!r}")
    R = _noisy_unit(R, gamma, rng)
    H, top, G = compute_H_batch(field.jacobian_at_support(), R)
    G = _noisy_unit(G, gamma, rng)
    slices = SliceSet(R, G)
    if refine is not None:
        from .refinement import refine_slices

        slices = refine_slices(X, p, slices, refine)
    summary.H, summary.H_eigenvalues, summary.g_dirs = H, top, G
    if return_summary:
        return slices, summary
    return slices


def eig_perturbation_bound(H, H_hat, sym_tol=1e-8):
    """Distance between top eigenvectors of ``H`` and ``H_hat`` and its bound.

    Returns ``(min_eps |g - eps g_hat|, 2^{3/2} |H_hat - H|_op / (l1 - l2))``;
    the bound is ``inf`` when the top eigenvalues of ``H`` coincide.
    """
    H = np.asarray(H, dtype=float)
    H_hat = np.asarray(H_hat, dtype=float)
    if H.shape != H_hat.shape or H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("H and H_hat must be square and of equal shape")
    for M in (H, H_hat):
        if np.max(np.abs(M - M.T)) > sym_tol * max(1.0, np.max(np.abs(M))):
            raise ValueError("matrices must be symmetric")
    lam, V = symmetric_eig(H)
    _, V_hat = symmetric_eig(H_hat)
    g, g_hat = V[:, 0], V_hat[:, 0]
    dist = min(np.linalg.norm(g - g_hat), np.linalg.norm(g + g_hat))
    err = np.linalg.norm(H_hat - H, ord=2)
    gap = lam[0] - lam[1] if lam.size > 1 else np.inf
    if gap <= 0:
        return float(dist), float("inf")
    return float(dist), float(2**1.5 * err / gap)
