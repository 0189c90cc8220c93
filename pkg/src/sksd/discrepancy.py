"""KSD and sliced KSD pair kernels, U-statistics and the projected Stein value.

Pair kernels are returned as dense ``N x N`` Gram matrices so that the same
values can be re-weighted by the bootstrap without re-evaluation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from . import _accel
from .kernels import KernelSpec, median_heuristic_ambient, rbf_cross, rbf_eval, rbf_grad1, rbf_grad2

__all__ = [
    "SliceSet",
    "ksd_u_kernel",
    "ksd_gram",
    "ksd_statistic",
    "sksd_u_kernel",
    "sksd_gram",
    "sksd_gram_sum",
    "projected_bandwidths",
    "u_statistic",
    "sksd_g_statistic",
    "psd_value",
]

_CHUNK_ELEMENTS = 4_000_000
_UNIT_TOL = 1e-8


def _normalize_rows(M):
    return M / np.linalg.norm(M, axis=1, keepdims=True)


@dataclass(frozen=True)
class SliceSet:
    """Paired slice directions: row ``i`` of ``r`` goes with row ``i`` of ``g``."""

    r: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        r = np.atleast_2d(np.asarray(self.r, dtype=float))
        g = np.atleast_2d(np.asarray(self.g, dtype=float))
        if r.shape != g.shape or r.shape[0] < 1:
            raise ValueError(f"r and g must share a shape (m >= 1, D), got {r.shape} and {g.shape}")
        for name, M in (("r", r), ("g", g)):
            if not np.all(np.isfinite(M)):
                raise ValueError(f"{name} slices must be finite")
            norms = np.linalg.norm(M, axis=1)
            if np.any(np.abs(norms - 1.0) > _UNIT_TOL):
                raise ValueError(f"{name} slices must have unit norm")
        r.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "g", g)

    @classmethod
    def from_unnormalized(cls, r, g):
        return cls(_normalize_rows(np.atleast_2d(r)), _normalize_rows(np.atleast_2d(g)))

    @classmethod
    def identity(cls, dim):
        eye = np.eye(dim)
        return cls(eye, eye.copy())

    @property
    def m(self):
        return self.r.shape[0]

    @property
    def dim(self):
        return self.r.shape[1]

    def __len__(self):
        return self.m

    def __getitem__(self, idx):
        idx = np.atleast_1d(np.arange(self.m)[idx])
        return SliceSet(self.r[idx], self.g[idx])

    def concat(self, other: "SliceSet"):
        return SliceSet(np.vstack([self.r, other.r]), np.vstack([self.g, other.g]))

    def to_dict(self):
        return {"r": self.r.tolist(), "g": self.g.tolist()}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["r"], doc["g"])

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


# -- KSD -------------------------------------------------------------------


def ksd_u_kernel(x, y, model, spec: KernelSpec):
    """Stein kernel u_p(x, y) with the multivariate RBF exp(-|x - y|^2 / h)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (model.dim,) or y.shape != (model.dim,):
        raise ValueError("points must match the model dimension")
    h = spec.bandwidth_sq
    sx, sy = model.score(x), model.score(y)
    diff = x - y
    sq = diff @ diff
    k = np.exp(-sq / h)
    grad_y = 2 * diff / h * k
    grad_x = -grad_y
    trace = (2 * model.dim / h - 4 * sq / h**2) * k
    return float(sx @ sy * k + sx @ grad_y + sy @ grad_x + trace)


def ksd_gram(samples, scores, spec: KernelSpec):
    """Gram matrix of u_p over all sample pairs given precomputed scores."""
    X = np.asarray(samples, dtype=float)
    S = np.asarray(scores, dtype=float)
    h = spec.bandwidth_sq
    D = X.shape[1]
    sq = cdist(X, X, "sqeuclidean")
    K = np.exp(-sq / h)
    # s_x^T (x - y) summed against the kernel, both orientations
    sx_dot = np.sum(S * X, axis=1)
    sx_diff = sx_dot[:, None] - S @ X.T  # s_i^T (x_i - x_j)
    sy_diff = (S @ X.T).T - sx_dot[None, :]  # s_j^T (x_i - x_j)
    gram = (S @ S.T) * K
    gram += 2 / h * K * sx_diff
    gram -= 2 / h * K * sy_diff
    gram += (2 * D / h - 4 * sq / h**2) * K
    return 0.5 * (gram + gram.T)


def ksd_statistic(samples, model, spec=None):
    """KSD U-statistic with an ambient median-heuristic bandwidth by default."""
    X = np.asarray(samples, dtype=float)
    spec = spec or median_heuristic_ambient(X)
    return u_statistic(ksd_gram(X, model.score(X), spec))


# -- sliced KSD ------------------------------------------------------------


def _check_unit(v, name, tol=1e-6):
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > tol:
        raise ValueError(f"{name} must be a unit vector")
    return v


def sksd_u_kernel(x, y, model, r, g, spec: KernelSpec):
    """Sliced Stein kernel mu_{p,r,g}(x, y) for a single (r, g) pair."""
    r = _check_unit(r, "r")
    g = _check_unit(g, "g")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a, b = x @ g, y @ g
    s_x = model.score(x) @ r
    s_y = model.score(y) @ r
    c = r @ g
    return float(
        s_x * rbf_eval(a, b, spec) * s_y
        + c * s_y * rbf_grad1(a, b, spec)
        + c * s_x * rbf_grad2(a, b, spec)
        + c**2 * rbf_cross(a, b, spec)
    )


def _pair_terms(A, Sr, c, h):
    """Stacked mu Gram matrices, shape (k, N, N), for k slices.

    ``A`` and ``Sr`` are (N, k) projections x^T g and s_p(x)^T r, ``c`` holds
    r^T g and ``h`` the squared bandwidths.
    """
    d = A.T[:, :, None] - A.T[:, None, :]
    h = h[:, None, None]
    K = np.exp(-(d**2) / h)
    s = Sr.T
    cc = c[:, None, None]
    gram = s[:, :, None] * s[:, None, :] * K
    # c * s_j * dk/da + c * s_i * dk/db = c * (2 d / h) * k * (s_i - s_j)
    gram += cc * (2 * d / h) * K * (s[:, :, None] - s[:, None, :])
    gram += cc**2 * (2 / h - 4 * d**2 / h**2) * K
    return gram


def _chunks(m, n):
    step = max(1, _CHUNK_ELEMENTS // max(n * n, 1))
    for start in range(0, m, step):
        yield slice(start, min(m, start + step))


def projected_bandwidths(samples, g_dirs):
    """Median-heuristic squared bandwidth of each projection ``X @ g``."""
    X = np.asarray(samples, dtype=float)
    P = X @ np.atleast_2d(g_dirs).T
    n, m = P.shape
    if n < 2:
        raise ValueError("median heuristic needs at least 2 samples")
    npairs = n * (n - 1) // 2
    kth = (npairs - 1) // 2
    out = np.empty(m)
    if npairs > 50_000:
        for k in range(m):
            sq = pdist(P[:, k : k + 1], "sqeuclidean")
            out[k] = np.partition(sq, kth)[kth]
        out[out <= 0] = 1.0
        return out
    iu, ju = np.triu_indices(n, 1)
    step = max(1, _CHUNK_ELEMENTS // npairs)
    for start in range(0, m, step):
        cols = P[:, start : start + step]
        sq = (cols[iu] - cols[ju]) ** 2
        out[start : start + step] = np.partition(sq, kth, axis=0)[kth]
    out[out <= 0] = 1.0
    return out


def sksd_gram(samples, scores, r, g, spec: KernelSpec):
    """Gram matrix of mu_{p,r,g} for one slice pair."""
    X = np.asarray(samples, dtype=float)
    S = np.asarray(scores, dtype=float)
    r = np.asarray(r, dtype=float)
    g = np.asarray(g, dtype=float)
    A = (X @ g)[:, None]
    Sr = (S @ r)[:, None]
    return _pair_terms(A, Sr, np.array([r @ g]), np.array([spec.bandwidth_sq]))[0]


def sksd_gram_sum(samples, scores, slices: SliceSet, bandwidths=None, use_numba=True):
    """Sum over slice pairs of the mu Gram matrices.

    ``bandwidths`` defaults to the per-slice median heuristic on ``X @ g``.
    The compiled kernel is used when numba is installed and ``use_numba``.
    """
    X = np.asarray(samples, dtype=float)
    S = np.asarray(scores, dtype=float)
    n = X.shape[0]
    if bandwidths is None:
        bandwidths = projected_bandwidths(X, slices.g)
    bandwidths = np.broadcast_to(np.asarray(bandwidths, dtype=float), (slices.m,))
    A = X @ slices.g.T
    Sr = S @ slices.r.T
    c = np.sum(slices.r * slices.g, axis=1)
    if use_numba and _accel.gram_sum is not None:
        return _accel.gram_sum(
            np.ascontiguousarray(A), np.ascontiguousarray(Sr), c, np.ascontiguousarray(bandwidths), np.empty((n, n))
        )
    total = np.zeros((n, n))
    for sl in _chunks(slices.m, n):
        total += _pair_terms(A[:, sl], Sr[:, sl], c[sl], bandwidths[sl]).sum(axis=0)
    return total


def u_statistic(gram, samples=None):
    """U-statistic ``sum_{i != j} gram_ij / (N (N - 1))``.

    ``gram`` is either a precomputed ``N x N`` matrix, or a pair function
    ``f(x, y)`` evaluated on every ordered pair of rows of ``samples``.
    """
    if callable(gram):
        X = np.asarray(samples, dtype=float)
        n = X.shape[0]
        if n < 2:
            raise ValueError("U-statistic needs at least 2 samples")
        total = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    total += gram(X[i], X[j])
        return total / (n * (n - 1))
    G = np.asarray(gram, dtype=float)
    n = G.shape[0]
    if G.ndim != 2 or G.shape[1] != n:
        raise ValueError("gram must be square")
    if n < 2:
        raise ValueError("U-statistic needs at least 2 samples")
    return float((G.sum() - np.trace(G)) / (n * (n - 1)))


def sksd_g_statistic(samples, model, slices: SliceSet, bandwidths=None):
    """Sliced KSD summed over slice pairs (SKSD-g; SKSD-rg when m = 1)."""
    X = np.asarray(samples, dtype=float)
    return u_statistic(sksd_gram_sum(X, model.score(X), slices, bandwidths))


def psd_value(score_diffs, r):
    """Monte-Carlo projected Stein value ``mean_i (Delta_i^T r)^2``."""
    proj = np.asarray(score_diffs, dtype=float) @ np.asarray(r, dtype=float)
    return float(np.mean(proj**2))
