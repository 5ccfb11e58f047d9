import numpy as np
import pytest

from besframe.bench import (
    BENCHMARKS,
    BenchmarkFn,
    UnknownBenchmarkError,
    branin,
    goldstein_price,
    hartmann3,
    list_benchmarks,
    make_benchmark,
    michalewicz,
    normalize,
    observe,
    probe_grid,
)
from besframe.gp import Dataset, fit_mle
from besframe.optimize import Box


def raw(name, negate=False):
    return make_benchmark(name, negate=negate, normalized=False, with_max=False)


class TestClosedForms:
    def test_branin_optimum(self):
        assert branin(np.array([[np.pi, 2.275]]))[0] == pytest.approx(0.397887, abs=1e-5)

    def test_goldstein_optimum(self):
        assert goldstein_price(np.array([[0.0, -1.0]]))[0] == pytest.approx(3.0, abs=1e-9)

    def test_hartmann_optimum(self):
        x = np.array([[0.114614, 0.555649, 0.852547]])
        assert hartmann3(x)[0] == pytest.approx(-3.86278, abs=1e-4)

    def test_michalewicz_2d_optimum(self):
        assert michalewicz(np.array([[2.20, 1.57]]))[0] == pytest.approx(-1.8013, abs=1e-3)


class TestMakeBenchmark:
    def test_registry(self):
        names = list_benchmarks()
        for key in BENCHMARKS:
            assert key in names
        with pytest.raises(UnknownBenchmarkError):
            make_benchmark("rosenbrock")

    def test_negate_is_exact(self):
        f, g = raw("branin"), raw("branin", negate=True)
        X = probe_grid(f.domain, 15)
        np.testing.assert_array_equal(g.evaluator(X), -f.evaluator(X))

    def test_gp_sample_reproducible(self):
        a = make_benchmark("gp_sample(l=0.125, seed=3)", with_max=False)
        X = np.random.default_rng(0).random((50, 2))
        np.testing.assert_array_equal(a.evaluator(X), make_benchmark("gp_sample(0.125, 3)", with_max=False).evaluator(X))
        other = make_benchmark("gp_sample(l=0.125, seed=4)", with_max=False)
        assert not np.allclose(a.evaluator(X), other.evaluator(X))

    def test_gp_sample_dimension(self):
        f = make_benchmark("gp_sample(l=0.2, seed=1, dim=1)", with_max=False)
        assert f.dim == 1 and f(np.array([0.3])) == f(np.array([0.3]))

    @pytest.mark.parametrize("name", ["branin", "michalewicz2", "goldstein", "phosphorus-proxy"])
    def test_known_max_dominates_probe(self, name):
        f = make_benchmark(name, negate=name != "phosphorus-proxy")
        X = f.domain.sample(100_000, np.random.default_rng(1))
        assert np.all(f.evaluator(X) <= f.known_max + 1e-9)
        assert f(f.known_max_location) == pytest.approx(f.known_max, abs=1e-12)

    def test_negated_branin_max_location(self):
        f = make_benchmark("branin", negate=True)
        raw_val = -branin(f.known_max_location[None])[0]
        assert raw_val == pytest.approx(-0.397887, abs=1e-5)

    def test_evaluator_finite(self):
        f = make_benchmark("hartmann3", negate=True)
        assert np.all(np.isfinite(f.evaluator(probe_grid(f.domain, 20))))


class TestNormalize:
    def test_moments_on_grid(self):
        f = make_benchmark("goldstein", with_max=False)
        v = f.evaluator(probe_grid(f.domain))
        assert abs(v.mean()) < 1e-9 and abs(v.std() - 1) < 1e-9

    def test_idempotent(self):
        f = make_benchmark("branin", with_max=False)
        g = normalize(f)
        X = probe_grid(f.domain, 30)
        np.testing.assert_allclose(g.evaluator(X), f.evaluator(X), atol=1e-9)

    def test_constant_rejected(self):
        const = BenchmarkFn("c", 1, Box.unit(1), lambda X: np.ones(len(X)))
        with pytest.raises(ValueError):
            normalize(const)

    def test_affine_invariance(self):
        rng = np.random.default_rng(2)
        base = raw("gp_sample(l=0.3, seed=9)")
        a, b = rng.uniform(0.1, 10), rng.normal(0, 10)
        affine = BenchmarkFn("af", 2, base.domain, lambda X: a * base.evaluator(X) + b)
        X = rng.random((100, 2))
        np.testing.assert_allclose(normalize(affine).evaluator(X), normalize(base).evaluator(X), atol=1e-9)


class TestObserve:
    def test_noiseless_exact(self):
        f = make_benchmark("branin", with_max=False)
        x = np.array([1.0, 3.0])
        assert observe(f, x, 0.0, np.random.default_rng(0)) == f(x)

    def test_law_of_large_numbers(self):
        f = make_benchmark("branin", with_max=False)
        x = np.array([1.0, 3.0])
        rng = np.random.default_rng(0)
        ys = [observe(f, x, 0.09, rng) for _ in range(100_000)]
        assert abs(np.mean(ys) - f(x)) < 0.01
        assert np.var(ys) == pytest.approx(0.09, rel=0.02)

    def test_pure(self):
        f = make_benchmark("michalewicz2", with_max=False)
        X = np.random.default_rng(3).random((10, 2))
        np.testing.assert_array_equal(f.evaluator(X), f.evaluator(X))


def test_gp_sample_lengthscale_recoverable():
    f = make_benchmark("gp_sample(l=0.125, seed=0)", with_max=False)
    rng = np.random.default_rng(0)
    X = rng.random((300, 2))
    p = fit_mle(Dataset(X, f.evaluator(X)), restarts=3, rng_seed=1, noise_variance=1e-6)
    assert np.all((p.lengthscales > 0.125 / 2) & (p.lengthscales < 0.125 * 2))
