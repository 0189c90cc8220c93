import numpy as np
import pytest

from sksd.discrepancy import SliceSet, projected_bandwidths, sksd_g_statistic, sksd_gram, u_statistic
from sksd.kernels import KernelSpec
from sksd.models import Gaussian, Laplace, MultivariateT
from sksd.refinement import Adam, GoConfig, refine_slices, sksd_slice_gradient, slice_gradients


def central_difference(f, x, eps):
    out = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = eps
        out.flat[i] = (f(x + e) - f(x - e)) / (2 * eps)
    return out


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-8)


def gradient_errors(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(1, 5))
    n = int(rng.integers(5, 20))
    X = rng.standard_normal((n, dim)) * rng.uniform(0.5, 2)
    model = MultivariateT(dim, 5.0)
    r, g = rng.standard_normal((2, dim))
    spec = KernelSpec(rng.uniform(0.3, 3))
    grad_r, grad_g = sksd_slice_gradient(X, model, r, g, spec)
    val = lambda rr, gg: u_statistic(sksd_gram(X, model.score(X), rr, gg, spec))  # noqa: E731
    fd_r = central_difference(lambda v: val(v, g), r, 1e-5)
    fd_g = central_difference(lambda v: val(r, v), g, 1e-5)
    return rel_err(grad_r, fd_r), rel_err(grad_g, fd_g)


def test_values_match_statistic():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((25, 3))
    model = Laplace(3)
    sl = SliceSet.from_unnormalized(rng.standard_normal((2, 3)), rng.standard_normal((2, 3)))
    h = projected_bandwidths(X, sl.g)
    values, _, _ = slice_gradients(X, model.score(X), sl.r, sl.g, h)
    ref = [u_statistic(sksd_gram(X, model.score(X), sl.r[k], sl.g[k], KernelSpec(h[k]))) for k in range(2)]
    np.testing.assert_allclose(values, ref, rtol=1e-12)


def test_gradient_matches_finite_differences():
    errs = np.array([gradient_errors(seed) for seed in range(100)])
    assert errs.max() < 1e-4


def test_batch_equals_single():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((15, 3))
    model = Gaussian.standard(3)
    R, G = rng.standard_normal((2, 4, 3))
    h = rng.uniform(0.5, 2, 4)
    _, gr, gg = slice_gradients(X, model.score(X), R, G, h)
    for k in range(4):
        a, b = sksd_slice_gradient(X, model, R[k], G[k], KernelSpec(h[k]))
        np.testing.assert_allclose(gr[k], a, rtol=1e-12)
        np.testing.assert_allclose(gg[k], b, rtol=1e-12)


class TestRefine:
    def setup_method(self):
        self.X = Laplace(10, 1 / np.sqrt(2)).sample(300, np.random.default_rng(2))
        self.p = Gaussian.standard(10)
        g = np.random.default_rng(3).standard_normal((10, 10))
        self.init = SliceSet.from_unnormalized(np.eye(10), g)

    def test_zero_epochs_is_identity(self):
        assert refine_slices(self.X, self.p, self.init, GoConfig(epochs=0)) is self.init

    def test_unit_norm_and_determinism(self):
        cfg = GoConfig(epochs=3, optimize_r=True, seed=4)
        a = refine_slices(self.X, self.p, self.init, cfg)
        b = refine_slices(self.X, self.p, self.init, cfg)
        np.testing.assert_allclose(np.linalg.norm(a.g, axis=1), 1.0, rtol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(a.r, axis=1), 1.0, rtol=1e-12)
        np.testing.assert_array_equal(a.g, b.g)
        assert not np.allclose(a.r, self.init.r)

    def test_r_fixed_by_default(self):
        out = refine_slices(self.X, self.p, self.init, GoConfig(epochs=2))
        np.testing.assert_array_equal(out.r, self.init.r)

    def test_statistic_increases(self):
        before = sksd_g_statistic(self.X, self.p, self.init)
        out = refine_slices(self.X, self.p, self.init, GoConfig(epochs=50, seed=5))
        assert sksd_g_statistic(self.X, self.p, out) > before

    def test_config_validation(self):
        for kw in ({"step_size": 0}, {"moment_decays": (1.0, 0.9)}, {"epochs": -1}, {"batch_size": 1}):
            with pytest.raises(ValueError):
                GoConfig(**kw)


def test_adam_first_step_is_lr_sign():
    opt = Adam((3,), lr=0.1)
    out = opt.step(np.zeros(3), np.array([2.0, -0.5, 1e-3]))
    np.testing.assert_allclose(out, [-0.1, 0.1, -0.1], rtol=1e-4)


def test_numba_path_matches_numpy():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((40, 5))
    scores = MultivariateT(5).score(X)
    R, G = rng.standard_normal((2, 3, 5))
    h = rng.uniform(0.5, 2, 3)
    fast = slice_gradients(X, scores, R, G, h)
    slow = slice_gradients(X, scores, R, G, h, use_numba=False)
    for a, b in zip(fast, slow):
        np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-13 * np.abs(b).max())
