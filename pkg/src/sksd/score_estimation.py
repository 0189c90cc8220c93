"""Estimators of the score-difference field ``Delta(x) = s_p(x) - s_q(x)``.

Three constructions are provided:

* ``exact_diff``  -- both scores known analytically (ablation reference);
* ``ke_diff``     -- kernel smoothing of Delta, which by integration by parts
  only needs ``s_p`` and samples from ``q``;
* ``ge_diff``     -- ``s_q`` replaced by the ridge-regularized Stein gradient
  estimator evaluated at the samples.

Each returns a :class:`ScoreDiffField` caching Delta at its support points
and exposing Jacobians ``J[n, d, e] = dDelta_d / dx_e``.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist

from .kernels import KernelSpec, median_heuristic_ambient

__all__ = [
    "ScoreDiffField",
    "ExactField",
    "KernelSmoothedField",
    "SteinGradientField",
    "exact_diff",
    "ke_diff",
    "ge_diff",
    "stein_gradient_estimate",
    "jacobian_at_support",
    "build_field",
    "finite_difference_jacobian",
]

DEFAULT_RIDGE = 1e-3


def finite_difference_jacobian(fn, points, rel_step=1e-4):
    """Central-difference Jacobian of a batched map R^D -> R^D.

    The step at point ``y`` is ``rel_step * (1 + |y|)``.
    """
    Y = np.atleast_2d(np.asarray(points, dtype=float))
    n, D = Y.shape
    t = rel_step * (1.0 + np.linalg.norm(Y, axis=1))
    J = np.empty((n, D, D))
    for e in range(D):
        shift = np.zeros((n, D))
        shift[:, e] = t
        J[:, :, e] = (fn(Y + shift) - fn(Y - shift)) / (2 * t[:, None])
    return J


class ScoreDiffField:
    """Score difference cached at ``support`` points."""

    kind = "base"

    def __init__(self, support, values):
        self.support = np.asarray(support, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("score difference contains non-finite values")

    @property
    def n(self):
        return self.support.shape[0]

    @property
    def dim(self):
        return self.support.shape[1]

    def __call__(self, y):
        raise NotImplementedError

    def jacobian(self, y):
        raise NotImplementedError

    def jacobian_at_support(self):
        return self.jacobian(self.support)


class ExactField(ScoreDiffField):
    kind = "Exact"

    def __init__(self, samples, p, q):
        for model in (p, q):
            if not callable(getattr(model, "score", None)):
                raise TypeError(f"{model!r} does not expose an analytic score")
        if p.dim != q.dim:
            raise ValueError("p and q must share a dimension")
        self.p, self.q = p, q
        X = np.atleast_2d(np.asarray(samples, dtype=float))
        super().__init__(X, p.score(X) - q.score(X))

    def __call__(self, y):
        return self.p.score(y) - self.q.score(y)

    def jacobian(self, y):
        Y = np.atleast_2d(np.asarray(y, dtype=float))
        if getattr(self.p, "has_score_jacobian", False) and getattr(self.q, "has_score_jacobian", False):
            return self.p.score_jacobian(Y) - self.q.score_jacobian(Y)
        return finite_difference_jacobian(self.__call__, Y)


class KernelSmoothedField(ScoreDiffField):
    """``Delta(y) ~ mean_i [s_p(x_i) k(x_i, y) + grad_{x_i} k(x_i, y)]``."""

    kind = "KE"

    def __init__(self, samples, p, spec: KernelSpec | None = None):
        X = np.atleast_2d(np.asarray(samples, dtype=float))
        if spec is None:
            spec = median_heuristic_ambient(X) if X.shape[0] >= 2 else KernelSpec(1.0)
        self.spec = spec
        self.p = p
        self._X = X
        self._S = p.score(X)
        super().__init__(X, self.__call__(X))

    def _kernel(self, Y):
        return np.exp(-cdist(Y, self._X, "sqeuclidean") / self.spec.bandwidth_sq)

    def __call__(self, y):
        Y = np.atleast_2d(np.asarray(y, dtype=float))
        K = self._kernel(Y)
        h, n = self.spec.bandwidth_sq, self._X.shape[0]
        # grad_x k(x, y) = -2 (x - y) / h * k
        out = K @ self._S - 2 / h * (K @ self._X - K.sum(axis=1, keepdims=True) * Y)
        out /= n
        return out[0] if np.ndim(y) == 1 else out

    def jacobian(self, y):
        Y = np.atleast_2d(np.asarray(y, dtype=float))
        X, S = self._X, self._S
        n, D = X.shape
        h = self.spec.bandwidth_sq
        K = self._kernel(Y)
        ksum = K.sum(axis=1)
        kx = K @ X
        ks = K @ S
        ksx = (K @ (S[:, :, None] * X[:, None, :]).reshape(n, D * D)).reshape(-1, D, D)
        kxx = (K @ (X[:, :, None] * X[:, None, :]).reshape(n, D * D)).reshape(-1, D, D)
        t1 = ksx - ks[:, :, None] * Y[:, None, :]
        t3 = (
            kxx
            - kx[:, :, None] * Y[:, None, :]
            - Y[:, :, None] * kx[:, None, :]
            + ksum[:, None, None] * Y[:, :, None] * Y[:, None, :]
        )
        J = 2 / h * t1 - 4 / h**2 * t3
        J += (2 / h) * ksum[:, None, None] * np.eye(D)[None]
        return J / n


def stein_gradient_estimate(samples, spec: KernelSpec | None = None, ridge=DEFAULT_RIDGE):
    """Ridge-regularized Stein gradient estimate of ``s_q`` at the samples.

    Solves ``(K + ridge I) S = -<grad, K>`` with
    ``<grad, K>_{i,d} = sum_j dk(x_i, x_j) / dx_{j,d}``.
    """
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    n = X.shape[0]
    if n < 2:
        raise ValueError("Stein gradient estimator needs at least 2 samples")
    if ridge <= 0:
        raise ValueError("ridge must be positive")
    spec = spec or median_heuristic_ambient(X)
    K, rhs = _stein_system(X, spec)
    try:
        return scipy.linalg.solve(K + ridge * np.eye(n), -rhs, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise np.linalg.LinAlgError("ridged Stein system is singular") from exc


def _stein_system(X, spec):
    h = spec.bandwidth_sq
    K = np.exp(-cdist(X, X, "sqeuclidean") / h)
    grad_k = 2 / h * (K.sum(axis=1, keepdims=True) * X - K @ X)
    return K, grad_k


class SteinGradientField(ScoreDiffField):
    """``Delta_i = s_p(x_i) - S_q[i]`` with a Nadaraya-Watson off-sample extension."""

    kind = "GE"

    def __init__(self, samples, p, spec: KernelSpec | None = None, ridge=DEFAULT_RIDGE):
        X = np.atleast_2d(np.asarray(samples, dtype=float))
        self.spec = spec or median_heuristic_ambient(X)
        self.ridge = ridge
        self.p = p
        self.q_score = stein_gradient_estimate(X, self.spec, ridge)
        super().__init__(X, p.score(X) - self.q_score)

    def _weights(self, Y):
        logk = -cdist(Y, self.support, "sqeuclidean") / self.spec.bandwidth_sq
        logk -= logk.max(axis=1, keepdims=True)
        w = np.exp(logk)
        return w / w.sum(axis=1, keepdims=True)

    def __call__(self, y):
        Y = np.atleast_2d(np.asarray(y, dtype=float))
        out = self._weights(Y) @ self.values
        return out[0] if np.ndim(y) == 1 else out

    def jacobian(self, y):
        # d/dy of sum_i w_i(y) Delta_i reduces to a weighted covariance of Delta and x
        Y = np.atleast_2d(np.asarray(y, dtype=float))
        W = self._weights(Y)
        n, D = self.support.shape
        wdx = (W @ (self.values[:, :, None] * self.support[:, None, :]).reshape(n, D * D)).reshape(-1, D, D)
        smooth = W @ self.values
        xbar = W @ self.support
        return 2 / self.spec.bandwidth_sq * (wdx - smooth[:, :, None] * xbar[:, None, :])


def exact_diff(samples, p, q):
    return ExactField(samples, p, q)


def ke_diff(samples, p, spec=None):
    return KernelSmoothedField(samples, p, spec)


def ge_diff(samples, p, spec=None, ridge=DEFAULT_RIDGE):
    return SteinGradientField(samples, p, spec, ridge)


def jacobian_at_support(field: ScoreDiffField):
    """Jacobians ``J_i`` of Delta at each support point, shape (N, D, D)."""
    return field.jacobian_at_support()


def build_field(kind, samples, p, q=None, ridge=DEFAULT_RIDGE):
    """Construct a field by estimator name: ``ex``, ``ke`` or ``ge``."""
    kind = kind.lower()
    if kind in ("ex", "exact"):
        if q is None:
            raise ValueError("the exact estimator needs the data model q")
        return exact_diff(samples, p, q)
    if kind == "ke":
        return ke_diff(samples, p)
    if kind == "ge":
        return ge_diff(samples, p, ridge=ridge)
    raise ValueError(f"unknown estimator {kind!r}")
