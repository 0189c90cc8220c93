"""Goodness-of-fit testing with a multinomial weighted bootstrap.

The test statistic is the U-statistic of a (summed) Stein pair kernel and
the null distribution is simulated by re-weighting the same Gram matrix
with centred multinomial weights, so the kernel is evaluated exactly once.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .active_slices import active_slice_algorithm
from .discrepancy import SliceSet, ksd_gram, sksd_gram_sum, u_statistic
from .kernels import median_heuristic_ambient
from .models import FactorizedT, Gaussian, Laplace, perturb_rbm, random_rbm, rbm_gibbs_sample
from .refinement import GoConfig, refine_slices
from .score_estimation import DEFAULT_RIDGE

__all__ = [
    "GofOutcome",
    "bootstrap_samples",
    "decide",
    "gof_test",
    "ksd_test",
    "Benchmark",
    "RBMBenchmark",
    "make_benchmark",
    "MethodConfig",
    "trial_seed",
    "run_trial",
    "run_trials",
    "rejection_rate",
    "BENCHMARKS",
]

BENCHMARKS = ("laplace", "mvt", "diffusion", "null")


@dataclass
class GofOutcome:
    statistic: float
    bootstrap: np.ndarray
    proportion_above: float
    reject: bool
    alpha: float


def bootstrap_samples(gram, M=1000, seed=None, chunk=250):
    """Weighted-bootstrap replicates ``sum_{i != j} (w_i - 1/N)(w_j - 1/N) gram_ij``.

    ``w = n / N`` with ``n ~ Multinomial(N, uniform)``.
    """
    if M < 1:
        raise ValueError("number of bootstrap samples must be >= 1")
    G = np.array(gram, dtype=float)
    n = G.shape[0]
    if G.ndim != 2 or G.shape[1] != n or n < 2:
        raise ValueError("gram must be a square matrix with N >= 2")
    if not np.allclose(G, G.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(G).max())):
        raise ValueError("gram must be symmetric")
    np.fill_diagonal(G, 0.0)
    rng = np.random.default_rng(seed)
    pvals = np.full(n, 1.0 / n)
    out = np.empty(M)
    for start in range(0, M, chunk):
        k = min(chunk, M - start)
        w = rng.multinomial(n, pvals, size=k) / n - 1.0 / n
        out[start : start + k] = np.einsum("mi,mi->m", w @ G, w)
    return out


def decide(statistic, boot, alpha=0.05):
    """Reject when fewer than ``alpha`` of the replicates strictly exceed the statistic."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    boot = np.asarray(boot, dtype=float)
    prop = float(np.mean(boot > statistic))
    return GofOutcome(float(statistic), boot, prop, prop < alpha, float(alpha))


def gof_test(samples, model_p, slices: SliceSet, M=1000, alpha=0.05, seed=None, bandwidths=None):
    """Bootstrap test of H0: samples ~ p using the summed sliced Stein kernel."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    X = np.asarray(samples, dtype=float)
    gram = sksd_gram_sum(X, model_p.score(X), slices, bandwidths)
    return decide(u_statistic(gram), bootstrap_samples(gram, M, seed), alpha)


def ksd_test(samples, model_p, M=1000, alpha=0.05, seed=None, spec=None):
    """Same test with the full-dimensional KSD and an ambient median bandwidth."""
    X = np.asarray(samples, dtype=float)
    spec = spec or median_heuristic_ambient(X)
    gram = ksd_gram(X, model_p.score(X), spec)
    return decide(u_statistic(gram), bootstrap_samples(gram, M, seed), alpha)


# -- benchmark problems ----------------------------------------------------


@dataclass
class Benchmark:
    """Fixed target ``p`` and data distribution ``q``."""

    name: str
    p: object
    q: object

    @property
    def dim(self):
        return self.p.dim

    def draw(self, rng, n_train, n_test):
        data = self.q.sample(n_train + n_test, rng)
        return self.p, self.q, data[:n_train], data[n_train:]


@dataclass
class RBMBenchmark:
    """Random RBM target with a copy whose weights are perturbed by ``sigma``.

    Test points come from independent Gibbs chains after ``burn_in`` sweeps;
    the training pool collects early burn-in states of ``pool_chains``
    separate chains at sweeps ``pool_start + 1 ...``.
    """

    dim: int = 50
    n_hidden: int = 40
    sigma: float = 0.01
    burn_in: int = 2000
    pool_chains: int = 100
    pool_start: int = 80

    @property
    def name(self):
        return f"rbm(sigma={self.sigma:g})"

    def draw(self, rng, n_train, n_test):
        p = random_rbm(self.dim, self.n_hidden, rng)
        noise = rng.standard_normal(p.B.shape)
        q = perturb_rbm(p, self.sigma, noise)
        test = rbm_gibbs_sample(q.B, q.b, q.c, n_test, self.burn_in, rng)
        steps = math.ceil(n_train / self.pool_chains)
        record = range(self.pool_start + 1, self.pool_start + steps + 1)
        _, pool = rbm_gibbs_sample(
            q.B, q.b, q.c, self.pool_chains, self.pool_start + steps, rng, record_steps=record
        )
        return p, q, pool[:n_train], test


def make_benchmark(name, dim):
    """The four standard problems; ``p`` is the model and ``q`` generates data."""
    dim = int(dim)
    if dim < 1:
        raise ValueError("dimension must be positive")
    if name == "laplace":
        return Benchmark(name, Gaussian.standard(dim), Laplace(dim, 1 / math.sqrt(2)))
    if name == "mvt":
        return Benchmark(name, Gaussian.standard(dim, 5.0 / 3.0), FactorizedT(dim, 5.0))
    if name == "diffusion":
        var = np.ones(dim)
        var[0] = 0.3
        return Benchmark(name, Gaussian.standard(dim), Gaussian(np.zeros(dim), var))
    if name == "null":
        return Benchmark(name, Gaussian.standard(dim), Gaussian.standard(dim))
    raise ValueError(f"unknown benchmark {name!r}; expected one of {BENCHMARKS}")


# -- trial harness -----------------------------------------------------------


@dataclass(frozen=True)
class MethodConfig:
    """How slices are obtained and how the test is run.

    ``kind`` is ``"active"`` (spectral slices, optionally refined with
    ``go``), ``"go"`` (gradient optimization from ``go_init``) or ``"ksd"``.
    """

    kind: str = "active"
    estimator: str = "ex"
    r_mode: str = "identity"
    prune: int | None = None
    gamma: float = 0.0
    go: GoConfig | None = None
    go_init: str = "random"
    ridge: float = DEFAULT_RIDGE
    n_train: int = 200
    n_test: int = 800
    M: int = 1000
    alpha: float = 0.05

    def __post_init__(self):
        if self.kind not in ("active", "go", "ksd"):
            raise ValueError(f"unknown method kind {self.kind!r}")
        if self.estimator not in ("ex", "ke", "ge"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.kind == "go" and self.go is None:
            raise ValueError("method 'go' needs a GoConfig")
        if self.n_train < 2 or self.n_test < 2 or self.M < 1:
            raise ValueError("sample sizes must be >= 2 and M >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")

    @property
    def label(self):
        if self.kind == "ksd":
            return "KSD"
        family = "SKSD-g" if self.r_mode == "identity" and self.kind == "active" else "SKSD-rg"
        if self.kind == "go":
            family = "SKSD-rg" if self.go.optimize_r else "SKSD-g"
            return f"{family}+GO"
        name = f"{family}+{self.estimator.upper() if self.estimator != 'ex' else 'Ex'}"
        if self.prune is not None:
            name += f"(m={self.prune})"
        return name + ("+GO" if self.go is not None else "")


def trial_seed(seed, trial):
    """Counter-based per-trial seed: independent of how many trials are run."""
    return int(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(trial),)).generate_state(1)[0])


def _go_slices(method, train, p, rng, dim):
    if method.go_init == "identity":
        eye = np.eye(dim)
        init = SliceSet(eye, eye.copy())
    else:
        g = rng.standard_normal((dim, dim))
        init = SliceSet(np.eye(dim), g / np.linalg.norm(g, axis=1, keepdims=True))
    cfg = replace(method.go, seed=int(rng.integers(2**31)))
    return refine_slices(train, p, init, cfg)


def find_slices(method: MethodConfig, p, q, train, rng):
    """Slice construction for one trial (not used by ``kind='ksd'``)."""
    if method.kind == "go":
        return _go_slices(method, train, p, rng, train.shape[1])
    refine = None
    if method.go is not None:
        refine = replace(method.go, seed=int(rng.integers(2**31)))
    return active_slice_algorithm(
        train,
        p,
        q,
        estimator=method.estimator,
        prune=method.prune,
        gamma=method.gamma,
        refine=refine,
        seed=int(rng.integers(2**31)),
        r_mode=method.r_mode,
        ridge=method.ridge,
    )


def run_trial(benchmark, method: MethodConfig, trial, seed, keep_slices=False):
    """One trial: fresh data, slices from the training split, test on the rest."""
    s = trial_seed(seed, trial)
    rng = np.random.default_rng(s)
    p, q, train, test = benchmark.draw(rng, method.n_train, method.n_test)
    t0 = time.perf_counter()
    boot_seed = int(rng.integers(2**31))
    slices = None
    if method.kind == "ksd":
        outcome = ksd_test(test, p, method.M, method.alpha, boot_seed)
    else:
        slices = find_slices(method, p, q, train, rng)
        outcome = gof_test(test, p, slices, method.M, method.alpha, boot_seed)
    record = {
        "trial": int(trial),
        "statistic": outcome.statistic,
        "threshold_prop": outcome.proportion_above,
        "reject": bool(outcome.reject),
        "seed": s,
        "seconds": time.perf_counter() - t0,
    }
    if keep_slices:
        record["slices"] = slices
    return record


def run_trials(benchmark, method: MethodConfig, trials, seed=0, threads=1, keep_slices=False):
    """Per-trial records in trial order; results do not depend on ``threads``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")

    def one(i):
        return run_trial(benchmark, method, i, seed, keep_slices)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(trials)))
    return [one(i) for i in range(trials)]


def rejection_rate(benchmark, method: MethodConfig, trials, seed=0, threads=1):
    records = run_trials(benchmark, method, trials, seed, threads)
    return float(np.mean([rec["reject"] for rec in records]))
