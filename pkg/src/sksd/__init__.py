"""Sliced kernelized Stein discrepancies with spectral active-slice search."""

from importlib.metadata import PackageNotFoundError, version

from .active_slices import active_slice_algorithm, compute_H_r, compute_S, eig_perturbation_bound
from .discrepancy import (
    SliceSet,
    ksd_statistic,
    ksd_u_kernel,
    psd_value,
    sksd_g_statistic,
    sksd_u_kernel,
    u_statistic,
)
from .gof import MethodConfig, gof_test, ksd_test, make_benchmark, rejection_rate, run_trials
from .kernels import KernelSpec, median_heuristic
from .models import ICA, RBM, FactorizedT, Gaussian, Laplace, MultivariateT
from .refinement import GoConfig, refine_slices
from .score_estimation import ge_diff, ke_diff, exact_diff

try:
    __version__ = version("sksd")
except PackageNotFoundError:  # pragma: no cover - source checkout without install
    __version__ = "0.0.0"

__all__ = [
    "KernelSpec",
    "median_heuristic",
    "Gaussian",
    "Laplace",
    "FactorizedT",
    "MultivariateT",
    "RBM",
    "ICA",
    "SliceSet",
    "ksd_u_kernel",
    "ksd_statistic",
    "sksd_u_kernel",
    "sksd_g_statistic",
    "u_statistic",
    "psd_value",
    "exact_diff",
    "ke_diff",
    "ge_diff",
    "compute_S",
    "compute_H_r",
    "active_slice_algorithm",
    "eig_perturbation_bound",
    "GoConfig",
    "refine_slices",
    "gof_test",
    "ksd_test",
    "make_benchmark",
    "MethodConfig",
    "run_trials",
    "rejection_rate",
]
