"""One-dimensional RBF kernels on projected inputs.

The kernel is ``k(a, b) = exp(-(a - b)**2 / h)`` where ``h`` is the squared
length scale.  All functions broadcast over numpy arrays, so a full Gram
matrix is obtained by passing ``a[:, None]`` and ``b[None, :]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

__all__ = [
    "KernelSpec",
    "rbf_eval",
    "rbf_grad1",
    "rbf_grad2",
    "rbf_cross",
    "median_heuristic",
    "median_heuristic_ambient",
    "lower_median",
]


@dataclass(frozen=True)
class KernelSpec:
    """RBF kernel with squared bandwidth ``bandwidth_sq``."""

    bandwidth_sq: float = 1.0
    family: str = "RBF"

    def __post_init__(self):
        if self.family != "RBF":
            raise ValueError(f"unsupported kernel family {self.family!r}")
        h = float(self.bandwidth_sq)
        if not np.isfinite(h) or h <= 0:
            raise ValueError(f"bandwidth_sq must be positive and finite, got {h}")
        object.__setattr__(self, "bandwidth_sq", h)


def _check_finite(*arrays):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise ValueError("kernel inputs must be finite")


def _diff(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_finite(a, b)
    return a - b


def rbf_eval(a, b, spec: KernelSpec):
    """k(a, b) = exp(-(a - b)^2 / h)."""
    d = _diff(a, b)
    return np.exp(-(d**2) / spec.bandwidth_sq)


def rbf_grad1(a, b, spec: KernelSpec):
    """Derivative of k with respect to its first argument."""
    d = _diff(a, b)
    h = spec.bandwidth_sq
    return -2.0 * d / h * np.exp(-(d**2) / h)


def rbf_grad2(a, b, spec: KernelSpec):
    """Derivative of k with respect to its second argument."""
    d = _diff(a, b)
    h = spec.bandwidth_sq
    return 2.0 * d / h * np.exp(-(d**2) / h)


def rbf_cross(a, b, spec: KernelSpec):
    """Mixed second derivative d^2 k / (da db)."""
    d = _diff(a, b)
    h = spec.bandwidth_sq
    return (2.0 / h - 4.0 * d**2 / h**2) * np.exp(-(d**2) / h)


def lower_median(values) -> float:
    """Median of a 1-d array; for even counts the lower-middle element."""
    values = np.asarray(values, dtype=float).ravel()
    k = (values.size - 1) // 2
    return float(np.partition(values, k)[k])


def median_heuristic(values) -> KernelSpec:
    """Bandwidth from the median squared distance over distinct pairs of scalars.

    Falls back to ``h = 1`` when all values coincide.
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size < 2:
        raise ValueError("median heuristic needs at least 2 values")
    _check_finite(values)
    sq = pdist(values[:, None], metric="sqeuclidean")
    h = lower_median(sq)
    return KernelSpec(h if h > 0 else 1.0)


def median_heuristic_ambient(samples) -> KernelSpec:
    """Same rule on squared Euclidean distances between rows of ``samples``."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] < 2:
        raise ValueError("median heuristic needs at least 2 samples")
    _check_finite(samples)
    h = lower_median(pdist(samples, metric="sqeuclidean"))
    return KernelSpec(h if h > 0 else 1.0)
