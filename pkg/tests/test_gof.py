import numpy as np
import pytest

from sksd.discrepancy import SliceSet
from sksd.gof import (
    RBMBenchmark,
    MethodConfig,
    bootstrap_samples,
    decide,
    gof_test,
    ksd_test,
    make_benchmark,
    rejection_rate,
    run_trials,
    trial_seed,
)
from sksd.models import Gaussian
from sksd.refinement import GoConfig


class TestBootstrap:
    def test_matches_explicit_formula(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((8, 8))
        G = A + A.T
        boot = bootstrap_samples(G, 5, seed=1)
        # replay the same multinomial draws
        w = np.random.default_rng(1).multinomial(8, np.full(8, 1 / 8), size=5) / 8 - 1 / 8
        off = G - np.diag(np.diag(G))
        np.testing.assert_allclose(boot, np.einsum("mi,ij,mj->m", w, off, w), rtol=1e-12)

    def test_zero_gram(self):
        np.testing.assert_array_equal(bootstrap_samples(np.zeros((5, 5)), 20, seed=0), 0.0)

    def test_deterministic_and_chunk_free(self):
        G = np.ones((10, 10))
        a = bootstrap_samples(G, 300, seed=3)
        np.testing.assert_array_equal(a, bootstrap_samples(G, 300, seed=3))
        np.testing.assert_array_equal(a, bootstrap_samples(G, 300, seed=3, chunk=7))

    def test_validation(self):
        with pytest.raises(ValueError):
            bootstrap_samples(np.eye(3), 0)
        with pytest.raises(ValueError):
            bootstrap_samples(np.array([[0.0, 1.0], [0.0, 0.0]]), 10)
        with pytest.raises(ValueError):
            bootstrap_samples(np.ones((1, 1)), 10)


class TestDecide:
    def test_ties_do_not_count(self):
        out = decide(1.0, np.array([1.0, 1.0, 0.5, 0.2]))
        assert out.proportion_above == 0.0 and out.reject

    def test_boundary(self):
        boot = np.arange(100.0)
        # 5 of 100 strictly above 94: proportion 0.05 is not below alpha
        assert not decide(94.0, boot).reject
        assert decide(95.0, boot).reject
        assert decide(95.0, boot).proportion_above == pytest.approx(0.04)

    def test_alpha_validation(self):
        for alpha in (0.0, 1.0):
            with pytest.raises(ValueError):
                decide(0.0, np.zeros(3), alpha)


class CountingGaussian(Gaussian):
    calls = 0

    def _score(self, X):
        CountingGaussian.calls += 1
        return super()._score(X)


def test_score_evaluated_once_per_test():
    X = np.random.default_rng(4).standard_normal((50, 3))
    model = CountingGaussian(np.zeros(3), np.ones(3))
    for M in (1, 100, 2000):
        CountingGaussian.calls = 0
        gof_test(X, model, SliceSet.identity(3), M=M, seed=0)
        assert CountingGaussian.calls == 1
        CountingGaussian.calls = 0
        ksd_test(X, model, M=M, seed=0)
        assert CountingGaussian.calls == 1


def test_strong_alternative_rejected():
    X = np.random.default_rng(5).standard_normal((200, 2)) + 2.0
    assert gof_test(X, Gaussian.standard(2), SliceSet.identity(2), seed=0).reject


class TestTrials:
    method = MethodConfig(n_train=50, n_test=100, M=200)

    def test_single_trial_rate(self):
        rate = rejection_rate(make_benchmark("laplace", 3), self.method, 1, seed=0)
        assert rate in (0.0, 1.0)

    def test_threads_do_not_change_results(self):
        bench = make_benchmark("mvt", 4)
        a = run_trials(bench, self.method, 6, seed=7)
        b = run_trials(bench, self.method, 6, seed=7, threads=3)
        strip = lambda recs: [{k: v for k, v in r.items() if k != "seconds"} for r in recs]  # noqa: E731
        assert strip(a) == strip(b)

    def test_prefix_stable(self):
        bench = make_benchmark("null", 2)
        few = run_trials(bench, self.method, 3, seed=2)
        many = run_trials(bench, self.method, 5, seed=2)
        assert [r["statistic"] for r in few] == [r["statistic"] for r in many[:3]]

    def test_trial_seed_is_counter_based(self):
        assert trial_seed(0, 3) == trial_seed(0, 3)
        assert len({trial_seed(0, t) for t in range(50)}) == 50
        assert trial_seed(0, 1) != trial_seed(1, 1)

    def test_keep_slices_and_methods(self):
        bench = make_benchmark("laplace", 3)
        go = MethodConfig(kind="go", go=GoConfig(epochs=2, batch_size=25), n_train=50, n_test=60, M=50)
        for method in (self.method, go, MethodConfig(kind="ksd", n_test=60, M=50)):
            rec = run_trials(bench, method, 1, keep_slices=True)[0]
            assert set(rec) >= {"trial", "statistic", "threshold_prop", "reject", "seed", "seconds", "slices"}
            assert (rec["slices"] is None) == (method.kind == "ksd")

    def test_trials_validation(self):
        with pytest.raises(ValueError):
            run_trials(make_benchmark("null", 2), self.method, 0)


class TestBenchmarks:
    def test_shapes(self):
        rng = np.random.default_rng(8)
        for name in ("laplace", "mvt", "diffusion", "null"):
            bench = make_benchmark(name, 5)
            p, q, train, test = bench.draw(rng, 10, 20)
            assert train.shape == (10, 5) and test.shape == (20, 5)
            assert p.dim == q.dim == bench.dim == 5

    def test_variances_match_target(self):
        # each alternative is moment matched to its Gaussian model
        rng = np.random.default_rng(9)
        for name in ("laplace", "mvt"):
            bench = make_benchmark(name, 3)
            X = bench.q.sample(200_000, rng)
            np.testing.assert_allclose(X.var(axis=0), bench.p.var_diag, rtol=0.03)

    def test_rbm_draw(self):
        bench = RBMBenchmark(dim=6, n_hidden=4, sigma=0.1, burn_in=20, pool_chains=5, pool_start=3)
        p, q, train, test = bench.draw(np.random.default_rng(10), 12, 7)
        assert train.shape == (12, 6) and test.shape == (7, 6)
        diff = q.B - p.B
        assert 0 < np.std(diff) < 0.2
        np.testing.assert_array_equal(p.b, q.b)

    def test_unknown(self):
        with pytest.raises(ValueError):
            make_benchmark("cauchy", 3)
        with pytest.raises(ValueError):
            make_benchmark("null", 0)


class TestMethodConfig:
    def test_labels(self):
        assert MethodConfig().label == "SKSD-g+Ex"
        assert MethodConfig(r_mode="active", estimator="ke", prune=3).label == "SKSD-rg+KE(m=3)"
        assert MethodConfig(kind="ksd").label == "KSD"
        assert MethodConfig(kind="go", go=GoConfig(optimize_r=True)).label == "SKSD-rg+GO"

    def test_validation(self):
        for kw in ({"kind": "x"}, {"estimator": "x"}, {"kind": "go"}, {"M": 0}, {"n_test": 1}, {"alpha": 1.5}):
            with pytest.raises(ValueError):
                MethodConfig(**kw)
