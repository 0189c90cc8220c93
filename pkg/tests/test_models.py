import itertools
import math

import numpy as np
import pytest
from scipy import stats

from sksd.models import (
    ICA,
    RBM,
    FactorizedT,
    Gaussian,
    Laplace,
    MultivariateT,
    dumps_model,
    factorized_t_score,
    gaussian_score,
    ica_logp,
    ica_score,
    laplace_score,
    loads_model,
    model_from_dict,
    mvt_score,
    perturb_rbm,
    random_rbm,
    rbm_gibbs_sample,
    rbm_score,
)


def numeric_grad(f, x, eps=1e-5):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for d in range(x.size):
        e = np.zeros_like(x)
        e[d] = eps
        out[d] = (f(x + e) - f(x - e)) / (2 * eps)
    return out


def small_rbm(seed, dim=3, hidden=4):
    rng = np.random.default_rng(seed)
    return RBM(0.5 * rng.standard_normal((dim, hidden)), rng.standard_normal(dim), rng.standard_normal(hidden))


def enumerated_logp(x, B, b, c):
    # log sum_h exp(x^T B h + b^T x + c^T h - |x|^2/2) by brute force over h
    terms = []
    for h in itertools.product([-1.0, 1.0], repeat=B.shape[1]):
        h = np.array(h)
        terms.append(x @ B @ h + b @ x + c @ h - 0.5 * x @ x)
    return np.logaddexp.reduce(terms)


class TestScores:
    def test_gaussian(self):
        np.testing.assert_array_equal(gaussian_score(np.zeros(3), 0.0, np.ones(3)), np.zeros(3))
        np.testing.assert_array_equal(gaussian_score([2.0, 0.0], 0.0, [1.0, 1.0]), [-2.0, 0.0])
        var = np.ones(4)
        var[0] = 0.3
        out = gaussian_score(np.eye(4)[0], 0.0, var)
        assert out[0] == pytest.approx(-1 / 0.3)
        np.testing.assert_array_equal(out[1:], 0.0)
        with pytest.raises(ValueError):
            gaussian_score([0.0], 0.0, [0.0])

    def test_laplace(self):
        np.testing.assert_allclose(laplace_score([1.0, -1.0]), [-math.sqrt(2), math.sqrt(2)], rtol=1e-15)
        np.testing.assert_array_equal(laplace_score(np.zeros(2)), 0.0)
        with pytest.raises(ValueError):
            laplace_score([1.0], scale=0.0)
        model = Laplace(3)
        x = np.array([0.4, -1.3, 2.0])
        np.testing.assert_allclose(model.score(x), numeric_grad(model.logp, x), rtol=1e-5)

    def test_t_scores(self):
        np.testing.assert_array_equal(mvt_score(np.zeros(3), 5.0), 0.0)
        assert factorized_t_score(np.array([1.0]), 5.0)[0] == pytest.approx(-1.0)
        np.testing.assert_allclose(mvt_score(np.array([1.0, 0.0]), 5.0), [-7 / 6, 0.0])
        for model in (FactorizedT(2, 5.0), MultivariateT(2, 5.0)):
            x = np.array([1.0, 0.0])
            np.testing.assert_allclose(model.score(x), numeric_grad(model.logp, x), rtol=1e-6, atol=1e-10)

    def test_t_logpdf_against_scipy(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((5, 3))
        ref = stats.multivariate_t(loc=np.zeros(3), shape=np.eye(3), df=5).logpdf(X)
        np.testing.assert_allclose(MultivariateT(3, 5.0).logp(X), ref, rtol=1e-12)
        ref = stats.t(5).logpdf(X).sum(axis=1)
        np.testing.assert_allclose(FactorizedT(3, 5.0).logp(X), ref, rtol=1e-12)

    def test_rbm_trivial_cases(self):
        x = np.array([0.3, -1.2])
        b = np.array([0.5, 0.1])
        np.testing.assert_allclose(rbm_score(x, np.zeros((2, 3)), b, np.ones(3)), b - x)
        assert rbm_score(np.zeros(1), np.ones((1, 1)), np.zeros(1), np.zeros(1))[0] == 0.0
        with pytest.raises(ValueError):
            rbm_score(x, np.zeros((3, 3)), b, np.ones(3))

    @pytest.mark.parametrize("seed", range(5))
    def test_rbm_score_against_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        dim, hidden = 3, 6 + seed % 5
        B = rng.standard_normal((dim, hidden))
        b, c = rng.standard_normal(dim), rng.standard_normal(hidden)
        x = rng.standard_normal(dim)
        fd = numeric_grad(lambda v: enumerated_logp(v, B, b, c), x)
        np.testing.assert_allclose(rbm_score(x, B, b, c), fd, rtol=1e-5)

    def test_rbm_unnormalized_logp_differs_by_constant(self):
        m = small_rbm(0)
        rng = np.random.default_rng(1)
        X = rng.standard_normal((4, 3))
        diff = m.logp(X) - np.array([enumerated_logp(x, m.B, m.b, m.c) for x in X])
        np.testing.assert_allclose(diff, diff[0], atol=1e-12)

    @pytest.mark.parametrize(
        "model",
        [
            Gaussian([0.1, -0.2, 0.3], [1.0, 0.5, 2.0]),
            FactorizedT(3, 5.0),
            MultivariateT(3, 5.0),
            small_rbm(2),
            ICA(np.array([[1.0, 0.3, 0.0], [0.2, 1.5, -0.4], [0.0, 0.1, 0.8]])),
        ],
        ids=lambda m: type(m).__name__,
    )
    def test_score_and_jacobian_match_logp(self, model):
        rng = np.random.default_rng(9)
        for x in rng.standard_normal((5, model.dim)):
            np.testing.assert_allclose(model.score(x), numeric_grad(model.logp, x), rtol=1e-4, atol=1e-8)
            J = np.array([numeric_grad(lambda v: model.score(v)[d], x) for d in range(model.dim)])
            np.testing.assert_allclose(model.score_jacobian(x), J, rtol=1e-4, atol=1e-7)

    def test_batch_and_single_agree(self):
        m = MultivariateT(4, 5.0)
        X = np.random.default_rng(0).standard_normal((6, 4))
        np.testing.assert_allclose(m.score(X)[2], m.score(X[2]))
        assert m.score_jacobian(X).shape == (6, 4, 4)
        with pytest.raises(ValueError):
            m.score(np.zeros(3))


class TestICA:
    def test_identity_mixing(self):
        x = np.array([0.3, -0.7, 1.1])
        assert ica_logp(x, np.eye(3)) == pytest.approx(MultivariateT(3, 5.0).logp(x), rel=1e-14)

    def test_scaled_1d(self):
        x = np.array([1.7])
        expected = stats.t(5).logpdf(x[0] / 2) - math.log(2)
        assert ica_logp(x, 2 * np.eye(1)) == pytest.approx(expected, rel=1e-12)

    def test_score_matches_finite_differences(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            W = rng.standard_normal((4, 4)) + 2 * np.eye(4)
            x = rng.standard_normal(4)
            fd = numeric_grad(lambda v: ica_logp(v, W), x, eps=1e-6)
            np.testing.assert_allclose(ica_score(x, W), fd, rtol=1e-5, atol=1e-9)

    def test_singular_rejected(self):
        with pytest.raises(ValueError):
            ICA(np.array([[1.0, 2.0], [2.0, 4.0]]))
        with pytest.raises(ValueError):
            ICA(np.ones((2, 3)))

    def test_entropy_self_consistency(self):
        rng = np.random.default_rng(5)
        W = rng.standard_normal((5, 5)) + 2 * np.eye(5)
        model = ICA(W)
        X = model.sample(5000, rng)
        nll = -np.mean(model.logp(X))
        assert nll == pytest.approx(model.entropy(), rel=0.01)


class TestSamplers:
    def test_gibbs_decoupled_mean(self):
        b = np.array([1.0, -2.0, 0.5])
        n = 4000
        X = rbm_gibbs_sample(np.zeros((3, 2)), b, np.zeros(2), n, 5, seed=0)
        assert np.all(np.abs(X.mean(axis=0) - b) <= 4 / math.sqrt(n))

    def test_gibbs_moments_against_enumeration(self):
        m = small_rbm(4, dim=3, hidden=5)
        logw, means = [], []
        for h in itertools.product([-1.0, 1.0], repeat=5):
            h = np.array(h)
            mu = m.B @ h + m.b
            # P(h) proportional to exp(c^T h + |B h + b|^2 / 2)
            logw.append(m.c @ h + 0.5 * mu @ mu)
            means.append(mu)
        w = np.exp(np.array(logw) - np.logaddexp.reduce(logw))
        means = np.array(means)
        mean = w @ means
        second = np.eye(3) + np.einsum("k,kd,ke->de", w, means, means)
        sd = np.sqrt(np.diag(second) - mean**2)
        n = 5000
        X = rbm_gibbs_sample(m.B, m.b, m.c, n, 200, seed=1)
        assert np.all(np.abs(X.mean(axis=0) - mean) <= 4 * sd / math.sqrt(n))
        np.testing.assert_allclose(np.cov(X.T, bias=True) + np.outer(X.mean(0), X.mean(0)), second, atol=0.15)

    def test_gibbs_deterministic(self):
        m = small_rbm(0)
        a = rbm_gibbs_sample(m.B, m.b, m.c, 10, 20, seed=123)
        b = rbm_gibbs_sample(m.B, m.b, m.c, 10, 20, seed=123)
        np.testing.assert_array_equal(a, b)
        with pytest.raises(ValueError):
            rbm_gibbs_sample(m.B, m.b, m.c, 10, -1, seed=0)

    def test_gibbs_recording(self):
        m = small_rbm(0)
        x, pool = rbm_gibbs_sample(m.B, m.b, m.c, 4, 10, seed=0, record_steps=[3, 5], n_record_chains=2)
        assert x.shape == (4, 3) and pool.shape == (4, 3)

    @pytest.mark.parametrize(
        "model",
        [Gaussian.standard(3, 0.7), Laplace(3), FactorizedT(3, 5.0), MultivariateT(3, 5.0), small_rbm(3), ICA(np.diag([1.0, 2.0, 0.5]))],
        ids=lambda m: type(m).__name__,
    )
    def test_stein_identity_with_tanh(self, model):
        n = 10_000
        X = model.sample(n, np.random.default_rng(17))
        t = np.tanh(X)
        avg = np.mean(model.score(X) * t + (1 - t**2), axis=0)
        assert np.all(np.abs(avg) <= 5 / math.sqrt(n))

    @pytest.mark.parametrize("model", [Gaussian.standard(2), Laplace(2), MultivariateT(2), ICA(np.eye(2) * 2)], ids=repr)
    def test_samplers_deterministic(self, model):
        np.testing.assert_array_equal(model.sample(5, 42), model.sample(5, 42))

    def test_laplace_variance(self):
        X = Laplace(2).sample(20000, np.random.default_rng(0))
        # scale 1/sqrt(2) gives unit variance
        np.testing.assert_allclose(X.var(axis=0), 1.0, atol=0.05)


class TestSerialization:
    @pytest.mark.parametrize(
        "model",
        [
            Gaussian([0.0, 1.0], [1.0, 0.3]),
            Laplace(3, 0.5),
            FactorizedT(2, 4.0),
            MultivariateT(2, 5.0),
            small_rbm(1),
            ICA([[1.0, 0.5], [0.0, 2.0]]),
        ],
        ids=lambda m: type(m).__name__,
    )
    def test_roundtrip(self, model):
        back = loads_model(dumps_model(model))
        assert type(back) is type(model) and back.dim == model.dim
        x = np.linspace(-1, 1, model.dim) + 0.1
        np.testing.assert_allclose(back.score(x), model.score(x))

    def test_bad_documents(self):
        with pytest.raises(ValueError):
            model_from_dict({"type": "nope", "dim": 1})
        with pytest.raises(ValueError):
            model_from_dict({"type": "laplace", "dim": 0})
        with pytest.raises(ValueError):
            model_from_dict({"type": "gaussian", "dim": 3, "mean": [0.0], "var_diag": [1.0]})


def test_random_and_perturbed_rbm():
    p = random_rbm(5, 4, 0)
    assert set(np.unique(p.B)) <= {-1.0, 1.0}
    q = perturb_rbm(p, 0.0, np.ones_like(p.B))
    np.testing.assert_array_equal(q.B, p.B)
    q = perturb_rbm(p, 0.1, np.ones_like(p.B))
    np.testing.assert_allclose(q.B - p.B, 0.1)
    with pytest.raises(ValueError):
        perturb_rbm(p, 0.1, np.ones((2, 2)))
