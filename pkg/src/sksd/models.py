"""Score models for the benchmark, RBM and ICA experiments.

Every model exposes ``score(x)`` for a single point (shape ``(D,)``) or a
batch (shape ``(N, D)``).  Log-densities, score Jacobians and samplers are
available where the distribution admits them; see the ``has_*`` flags.
"""

from __future__ import annotations

import json
import math

import numpy as np
from scipy.special import digamma, gammaln

__all__ = [
    "ScoreModel",
    "Gaussian",
    "Laplace",
    "FactorizedT",
    "MultivariateT",
    "RBM",
    "ICA",
    "gaussian_score",
    "laplace_score",
    "mvt_score",
    "factorized_t_score",
    "rbm_score",
    "rbm_gibbs_sample",
    "ica_logp",
    "ica_score",
    "model_to_dict",
    "model_from_dict",
    "dumps_model",
    "loads_model",
    "perturb_rbm",
    "random_rbm",
]


def _as_batch(x, dim=None):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if dim is not None and X.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got {X.shape[-1]}")
    return X, single


def _restore(out, single):
    return out[0] if single else out


# -- functional forms ------------------------------------------------------


def gaussian_score(x, mean, var_diag):
    """Score of N(mean, diag(var_diag)): ``-(x - mean) / var``."""
    var_diag = np.asarray(var_diag, dtype=float)
    if np.any(var_diag <= 0):
        raise ValueError("variances must be strictly positive")
    return -(np.asarray(x, dtype=float) - mean) / var_diag


def laplace_score(x, scale=1 / math.sqrt(2)):
    """Score of the factorized Laplace(0, scale); ``sign(0)`` is taken as 0."""
    if scale <= 0:
        raise ValueError("Laplace scale must be positive")
    return -np.sign(x) / scale


def factorized_t_score(x, df):
    """Score of a product of standard Student-t marginals."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    x = np.asarray(x, dtype=float)
    return -(df + 1.0) * x / (df + x**2)


def mvt_score(x, df, joint=True):
    """Score of the standard multivariate-t (``joint=True``) or factorized t."""
    if not joint:
        return factorized_t_score(x, df)
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    x = np.asarray(x, dtype=float)
    D = x.shape[-1]
    sq = np.sum(x**2, axis=-1, keepdims=True)
    return -(df + D) * x / (df + sq)


def rbm_score(x, B, b, c):
    """Marginal score of a Gaussian-Bernoulli RBM with +-1 hidden units."""
    B = np.asarray(B, dtype=float)
    x = np.asarray(x, dtype=float)
    if B.shape[0] != x.shape[-1] or np.shape(b) != (B.shape[0],) or np.shape(c) != (B.shape[1],):
        raise ValueError("RBM parameter shapes are inconsistent with x")
    return b - x + np.tanh(x @ B + c) @ B.T


def _mvt_logpdf(z, df):
    D = z.shape[-1]
    sq = np.sum(z**2, axis=-1)
    return (
        gammaln((df + D) / 2)
        - gammaln(df / 2)
        - 0.5 * D * math.log(df * math.pi)
        - 0.5 * (df + D) * np.log1p(sq / df)
    )


def ica_logp(x, W, df=5.0):
    """``log p_z(W^{-1} x) - log|det W|`` with a joint multivariate-t ``p_z``."""
    return ICA(W, df).logp(x)


def ica_score(x, W, df=5.0):
    """``W^{-T} s_z(W^{-1} x)``."""
    return ICA(W, df).score(x)


# -- model classes ---------------------------------------------------------


class ScoreModel:
    """Base class: a distribution on R^D with an analytic score."""

    kind = "base"
    has_logp = True
    has_score_jacobian = True
    has_sampler = True

    def __init__(self, dim):
        self.dim = int(dim)
        if self.dim < 1:
            raise ValueError("dimension must be positive")

    def score(self, x):
        X, single = _as_batch(x, self.dim)
        return _restore(self._score(X), single)

    def logp(self, x):
        if not self.has_logp:
            raise NotImplementedError(f"{type(self).__name__} has no log-density")
        X, single = _as_batch(x, self.dim)
        return _restore(self._logp(X), single)

    def score_jacobian(self, x):
        """Jacobian of the score, shape ``(N, D, D)`` (or ``(D, D)``)."""
        if not self.has_score_jacobian:
            raise NotImplementedError(f"{type(self).__name__} has no score Jacobian")
        X, single = _as_batch(x, self.dim)
        return _restore(self._score_jacobian(X), single)

    def sample(self, n, rng):
        if not self.has_sampler:
            raise NotImplementedError(f"{type(self).__name__} has no sampler")
        return self._sample(int(n), np.random.default_rng(rng))

    def to_dict(self):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class Gaussian(ScoreModel):
    kind = "gaussian"

    def __init__(self, mean, var_diag):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        var_diag = np.broadcast_to(np.asarray(var_diag, dtype=float), mean.shape).copy()
        if np.any(var_diag <= 0):
            raise ValueError("variances must be strictly positive")
        super().__init__(mean.size)
        self.mean = mean
        self.var_diag = var_diag

    @classmethod
    def standard(cls, dim, var=1.0):
        return cls(np.zeros(dim), np.full(dim, float(var)))

    def _score(self, X):
        return gaussian_score(X, self.mean, self.var_diag)

    def _logp(self, X):
        z = (X - self.mean) ** 2 / self.var_diag
        return -0.5 * (np.sum(z, axis=1) + np.sum(np.log(2 * np.pi * self.var_diag)))

    def _score_jacobian(self, X):
        return np.broadcast_to(np.diag(-1.0 / self.var_diag), (X.shape[0], self.dim, self.dim)).copy()

    def _sample(self, n, rng):
        return self.mean + np.sqrt(self.var_diag) * rng.standard_normal((n, self.dim))

    def to_dict(self):
        return {"type": self.kind, "dim": self.dim, "mean": self.mean.tolist(), "var_diag": self.var_diag.tolist()}


class Laplace(ScoreModel):
    """Product of Laplace(0, scale) marginals."""

    kind = "laplace"

    def __init__(self, dim, scale=1 / math.sqrt(2)):
        super().__init__(dim)
        if scale <= 0:
            raise ValueError("Laplace scale must be positive")
        self.scale = float(scale)

    def _score(self, X):
        return laplace_score(X, self.scale)

    def _logp(self, X):
        return -np.sum(np.abs(X), axis=1) / self.scale - self.dim * math.log(2 * self.scale)

    def _score_jacobian(self, X):
        # zero away from the kinks; the point mass at 0 is dropped
        return np.zeros((X.shape[0], self.dim, self.dim))

    def _sample(self, n, rng):
        return rng.laplace(0.0, self.scale, size=(n, self.dim))

    def to_dict(self):
        return {"type": self.kind, "dim": self.dim, "scale": self.scale}


class FactorizedT(ScoreModel):
    """Product of standard Student-t marginals with ``df`` degrees of freedom."""

    kind = "factorized_t"

    def __init__(self, dim, df=5.0):
        super().__init__(dim)
        if df <= 0:
            raise ValueError("degrees of freedom must be positive")
        self.df = float(df)

    def _score(self, X):
        return factorized_t_score(X, self.df)

    def _logp(self, X):
        v = self.df
        const = gammaln((v + 1) / 2) - gammaln(v / 2) - 0.5 * math.log(v * math.pi)
        return self.dim * const - 0.5 * (v + 1) * np.sum(np.log1p(X**2 / v), axis=1)

    def _score_jacobian(self, X):
        v = self.df
        diag = -(v + 1) * (v - X**2) / (v + X**2) ** 2
        out = np.zeros((X.shape[0], self.dim, self.dim))
        idx = np.arange(self.dim)
        out[:, idx, idx] = diag
        return out

    def _sample(self, n, rng):
        return rng.standard_t(self.df, size=(n, self.dim))

    def to_dict(self):
        return {"type": "mvt", "joint": False, "dim": self.dim, "df": self.df}


class MultivariateT(ScoreModel):
    """Spherical multivariate-t with zero mean and identity scale."""

    kind = "mvt"

    def __init__(self, dim, df=5.0):
        super().__init__(dim)
        if df <= 0:
            raise ValueError("degrees of freedom must be positive")
        self.df = float(df)

    def _score(self, X):
        return mvt_score(X, self.df, joint=True)

    def _logp(self, X):
        return _mvt_logpdf(X, self.df)

    def _score_jacobian(self, X):
        v, D = self.df, self.dim
        q = v + np.sum(X**2, axis=1)
        eye = np.eye(D)[None]
        outer = X[:, :, None] * X[:, None, :]
        return -(v + D) * (eye / q[:, None, None] - 2 * outer / q[:, None, None] ** 2)

    def _sample(self, n, rng):
        g = rng.standard_normal((n, self.dim))
        u = rng.chisquare(self.df, size=(n, 1))
        return g / np.sqrt(u / self.df)

    def entropy(self):
        """Differential entropy in nats."""
        v, D = self.df, self.dim
        return (
            -gammaln((v + D) / 2)
            + gammaln(v / 2)
            + 0.5 * D * math.log(v * math.pi)
            + 0.5 * (v + D) * (digamma((v + D) / 2) - digamma(v / 2))
        )

    def to_dict(self):
        return {"type": self.kind, "joint": True, "dim": self.dim, "df": self.df}


class RBM(ScoreModel):
    """Gaussian-Bernoulli RBM with hidden units in {-1, +1}.

    ``logp`` is the *unnormalized* marginal log-density
    ``b^T x - |x|^2 / 2 + sum_j log(2 cosh((B^T x + c)_j))``.
    """

    kind = "rbm"

    def __init__(self, B, b, c, burn_in=2000):
        B = np.atleast_2d(np.asarray(B, dtype=float))
        b = np.asarray(b, dtype=float).ravel()
        c = np.asarray(c, dtype=float).ravel()
        if b.shape != (B.shape[0],) or c.shape != (B.shape[1],):
            raise ValueError("RBM parameter shapes are inconsistent")
        super().__init__(B.shape[0])
        self.B, self.b, self.c = B, b, c
        self.burn_in = int(burn_in)

    @property
    def n_hidden(self):
        return self.B.shape[1]

    def _score(self, X):
        return rbm_score(X, self.B, self.b, self.c)

    def _logp(self, X):
        a = X @ self.B + self.c
        log2cosh = np.logaddexp(a, -a)
        return X @ self.b - 0.5 * np.sum(X**2, axis=1) + np.sum(log2cosh, axis=1)

    def _score_jacobian(self, X):
        t = np.tanh(X @ self.B + self.c)
        J = np.einsum("dj,nj,ej->nde", self.B, 1 - t**2, self.B)
        J -= np.eye(self.dim)[None]
        return J

    def _sample(self, n, rng):
        return rbm_gibbs_sample(self.B, self.b, self.c, n, self.burn_in, rng)

    def to_dict(self):
        return {"type": self.kind, "dim": self.dim, "B": self.B.tolist(), "b": self.b.tolist(), "c": self.c.tolist()}


def rbm_gibbs_sample(B, b, c, n, burn_in, seed, record_steps=None, n_record_chains=None):
    """Block Gibbs sampling, one independent chain per returned row.

    Chains start at ``N(b, I)`` and the state after ``burn_in`` sweeps is
    returned.  If ``record_steps`` is given, the states of the first
    ``n_record_chains`` chains at those sweep indices (1-based) are stacked
    and returned as a second array.
    """
    if burn_in < 0:
        raise ValueError("burn_in must be non-negative")
    B = np.asarray(B, dtype=float)
    rng = np.random.default_rng(seed)
    D = B.shape[0]
    x = b + rng.standard_normal((n, D))
    record = set(record_steps or ())
    k = n if n_record_chains is None else int(n_record_chains)
    pool = []
    for step in range(1, burn_in + 1):
        x = _gibbs_sweep(x, B, b, c, rng)
        if step in record:
            pool.append(x[:k].copy())
    if record_steps is None:
        return x
    return x, (np.concatenate(pool) if pool else np.empty((0, D)))


def _gibbs_sweep(x, B, b, c, rng):
    act = x @ B + c
    prob = 1.0 / (1.0 + np.exp(-2.0 * act))
    h = np.where(rng.random(act.shape) < prob, 1.0, -1.0)
    return h @ B.T + b + rng.standard_normal(x.shape)


def random_rbm(dim, n_hidden, rng):
    """Random RBM: B entries uniform on {-1, +1}, b and c standard normal."""
    rng = np.random.default_rng(rng)
    B = rng.choice([-1.0, 1.0], size=(dim, n_hidden))
    b = rng.standard_normal(dim)
    c = rng.standard_normal(n_hidden)
    return RBM(B, b, c)


def perturb_rbm(model: RBM, sigma, noise):
    """Copy of ``model`` with ``B + sigma * noise``; ``noise`` has the shape of B."""
    noise = np.asarray(noise, dtype=float)
    if noise.shape != model.B.shape:
        raise ValueError("noise must match the shape of B")
    return RBM(model.B + sigma * noise, model.b, model.c, model.burn_in)


class ICA(ScoreModel):
    """Linear ICA ``x = W z`` with ``z`` a joint multivariate-t."""

    kind = "ica"

    def __init__(self, W, df=5.0, max_cond=1e12):
        W = np.atleast_2d(np.asarray(W, dtype=float))
        if W.shape[0] != W.shape[1]:
            raise ValueError("W must be square")
        if not np.all(np.isfinite(W)) or np.linalg.cond(W) > max_cond:
            raise ValueError("W is singular or numerically ill-conditioned")
        super().__init__(W.shape[0])
        self.W = W
        self.W_inv = np.linalg.inv(W)
        self.base = MultivariateT(self.dim, df)
        self.df = float(df)
        self.logdet = float(np.linalg.slogdet(W)[1])

    def _score(self, X):
        Z = X @ self.W_inv.T
        return self.base._score(Z) @ self.W_inv

    def _logp(self, X):
        return self.base._logp(X @ self.W_inv.T) - self.logdet

    def _score_jacobian(self, X):
        Jz = self.base._score_jacobian(X @ self.W_inv.T)
        A = self.W_inv
        return np.einsum("ad,nab,be->nde", A, Jz, A)

    def _sample(self, n, rng):
        return self.base._sample(n, rng) @ self.W.T

    def entropy(self):
        return self.base.entropy() + self.logdet

    def to_dict(self):
        return {"type": self.kind, "dim": self.dim, "W": self.W.tolist(), "df": self.df}


# -- serialization ---------------------------------------------------------


def model_to_dict(model: ScoreModel):
    return model.to_dict()


def model_from_dict(doc):
    kind = doc["type"]
    if kind == "gaussian":
        model = Gaussian(doc["mean"], doc["var_diag"])
    elif kind == "laplace":
        model = Laplace(doc["dim"], doc.get("scale", 1 / math.sqrt(2)))
    elif kind == "mvt":
        cls = MultivariateT if doc.get("joint", True) else FactorizedT
        model = cls(doc["dim"], doc.get("df", 5.0))
    elif kind == "rbm":
        model = RBM(doc["B"], doc["b"], doc["c"])
    elif kind == "ica":
        model = ICA(doc["W"], doc.get("df", 5.0))
    else:
        raise ValueError(f"unknown model type {kind!r}")
    if "dim" in doc and int(doc["dim"]) != model.dim:
        raise ValueError("declared dim does not match parameters")
    return model


def dumps_model(model):
    return json.dumps(model_to_dict(model))


def loads_model(text):
    return model_from_dict(json.loads(text))
