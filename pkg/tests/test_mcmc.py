import json

import numpy as np
import pytest
from scipy.integrate import quad

from spatgp.errors import ChainError, InsufficientDraws
from spatgp.mcmc import (ChainConfig, InverseGamma, PriorSpec, Uniform,
                         adapt_scale, log_transform_target, read_samples_csv,
                         rw_step, run_chain, summarize, write_chain_log,
                         write_samples_csv)


class ConjugateStub:
    """Gaussian linear model with known noise variance; theta is a dummy block.

    gibbs_beta draws from the exact full conditional, so retained beta draws are iid
    from the closed-form posterior.
    """

    model_tag = "stub"
    param_names = ("sigma2", "tau2", "phi")

    def __init__(self, x_mat, y, noise_var, shift=0.0):
        self.x = x_mat
        self.y = y
        self.noise_var = noise_var
        self.shift = shift
        self.prec = x_mat.T @ x_mat / noise_var
        self.cov = np.linalg.inv(self.prec)
        self.mean = self.cov @ (x_mat.T @ y) / noise_var

    def log_target(self, theta, beta):
        u = np.log(np.asarray(theta))
        return -0.5 * float(u @ u) + self.shift

    def gibbs_beta(self, theta, rng):
        lower = np.linalg.cholesky(self.cov)
        return self.mean + lower @ rng.standard_normal(self.mean.shape[0])

    def initial_beta(self):
        return np.zeros(self.x.shape[1])


def make_stub(seed=0, shift=0.0):
    rng = np.random.default_rng(seed)
    x_mat = np.column_stack([np.ones(40), rng.normal(size=40)])
    beta_true = np.array([1.0, -0.5])
    y = x_mat @ beta_true + 0.5 * rng.normal(size=40)
    return ConjugateStub(x_mat, y, 0.25, shift=shift)


class TestPriors:
    def test_inverse_gamma_mean_matches_default(self):
        priors = PriorSpec.default_for(2.0, 0.5, 3.0)
        # IG(2, b) has mean b
        assert priors.sigma2.scale / (priors.sigma2.shape - 1) == pytest.approx(2.0)
        assert priors.tau2.scale / (priors.tau2.shape - 1) == pytest.approx(0.5)
        assert priors.phi.lo == pytest.approx(0.3)
        assert priors.phi.hi == pytest.approx(30.0)

    def test_uniform_support(self):
        u = Uniform(1.0, 2.0)
        assert u.logpdf(1.5) == pytest.approx(-np.log(1.0))
        assert u.logpdf(0.5) == -np.inf

    def test_inverse_gamma_normalization(self):
        ig = InverseGamma(2.5, 1.7)
        val, _ = quad(lambda x: np.exp(ig.logpdf(x)), 0, np.inf)
        assert val == pytest.approx(1.0, abs=1e-6)


class TestLogTransform:
    def test_inverse_gamma_transformed_integrates_to_one(self):
        ig = InverseGamma(2.0, 1.5)
        fn = lambda u: np.exp(log_transform_target(lambda x: ig.logpdf(x[0]), np.array([u])))
        val, _ = quad(fn, -20, 20)
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_jacobian_zero_at_origin(self):
        target = lambda x: 0.0
        assert log_transform_target(target, np.zeros(3)) == 0.0

    def test_shift_moves_jacobian_exactly(self):
        target = lambda x: 0.0
        u = np.array([0.3, -1.2, 0.5])
        c = 0.77
        assert log_transform_target(target, u + c) == pytest.approx(
            log_transform_target(target, u) + 3 * c, rel=1e-12)


class TestRWStep:
    def test_equal_targets_always_accept(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            _, accepted, _ = rw_step(np.zeros(2), 1.0, lambda u: 5.0, rng)
            assert accepted

    def test_minus_infinity_never_accepted(self):
        rng = np.random.default_rng(1)
        target = lambda u: 0.0 if np.all(u == 0) else -np.inf
        for _ in range(200):
            u, accepted, val = rw_step(np.zeros(1), 1.0, target, rng, current=0.0)
            assert not accepted
            assert u[0] == 0.0 and val == 0.0

    def test_long_run_acceptance_on_standard_normal(self):
        rng = np.random.default_rng(2)
        target = lambda u: -0.5 * float(u @ u)
        u = np.zeros(1)
        current = target(u)
        hits = 0
        for _ in range(100_000):
            u, acc, current = rw_step(u, 2.4, target, rng, current=current)
            hits += acc
        assert 0.35 <= hits / 100_000 <= 0.55


class TestAdaptScale:
    def test_on_target_unchanged(self):
        assert adapt_scale(0.35, 1.7, target_rate=0.35) == 1.7

    def test_zero_acceptance_shrinks(self):
        assert adapt_scale(0.0, 1.7, target_rate=0.35) < 1.7

    def test_stabilizes_near_optimal_scale_1d_normal(self):
        # classical 1-d optimum: s ~ 2.4 at ~44% acceptance
        rng = np.random.default_rng(3)
        target = lambda u: -0.5 * float(u @ u)
        u, s, current, hits = np.zeros(1), 0.3, 0.0, 0
        trace = []
        for k in range(30_000):
            u, acc, current = rw_step(u, s, target, rng, current=current)
            hits += acc
            if (k + 1) % 50 == 0:
                s = adapt_scale(hits / 50, s, target_rate=0.44)
                hits = 0
                trace.append(s)
        settled = np.mean(trace[-200:])
        assert 1.2 <= settled <= 3.6


class TestRunChain:
    def test_fixed_seed_bitwise_identical(self, tmp_path):
        config = ChainConfig(iterations=80, burn_in=40, seed=7, initial_theta=(1, 1, 1))
        s1 = run_chain(make_stub(), config)
        s2 = run_chain(make_stub(), config)
        np.testing.assert_array_equal(s1.draws, s2.draws)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_samples_csv(p1, s1)
        write_samples_csv(p2, s2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_zero_burn_in_single_iteration(self):
        config = ChainConfig(iterations=1, burn_in=0, seed=0, initial_theta=(1, 1, 1))
        samples = run_chain(make_stub(), config)
        assert samples.n_draws == 1

    def test_retained_count(self):
        config = ChainConfig(iterations=100, burn_in=40, thin=3, seed=0,
                             initial_theta=(1, 1, 1))
        samples = run_chain(make_stub(), config)
        assert samples.n_draws == 20

    def test_conjugate_beta_moments(self):
        stub = make_stub(seed=5)
        config = ChainConfig(iterations=10_000, burn_in=0, seed=9,
                             initial_theta=(1, 1, 1))
        samples = run_chain(stub, config)
        beta = samples.beta_draws
        np.testing.assert_allclose(beta.mean(axis=0), stub.mean,
                                   atol=0.05 * np.abs(stub.mean).max())
        np.testing.assert_allclose(np.cov(beta.T), stub.cov, rtol=0.05, atol=5e-4)

    def test_constant_shift_leaves_accept_sequence_identical(self):
        config = ChainConfig(iterations=300, burn_in=150, seed=11, initial_theta=(1, 1, 1))
        plain = run_chain(make_stub(seed=2, shift=0.0), config)
        shifted = run_chain(make_stub(seed=2, shift=137.5), config)
        np.testing.assert_array_equal(plain.accepted, shifted.accepted)
        np.testing.assert_array_equal(plain.draws, shifted.draws)

    def test_scales_frozen_after_burn_in(self):
        config = ChainConfig(iterations=400, burn_in=200, seed=3, initial_theta=(1, 1, 1))
        samples = run_chain(make_stub(), config)
        post = samples.scales[config.burn_in:]
        assert np.all(post == post[0])
        assert not np.all(samples.scales[: config.burn_in] == samples.scales[0])

    def test_chain_error_carries_iteration_index(self):
        class Exploding(ConjugateStub):
            def __init__(self):
                super().__init__(np.ones((5, 1)), np.zeros(5), 1.0)
                self.calls = 0

            def gibbs_beta(self, theta, rng):
                self.calls += 1
                if self.calls > 3:
                    from spatgp.errors import NotPositiveDefinite
                    raise NotPositiveDefinite("boom")
                return np.zeros(1)

        with pytest.raises(ChainError, match="iteration 3"):
            run_chain(Exploding(), ChainConfig(iterations=10, burn_in=5, seed=0,
                                               initial_theta=(1, 1, 1)))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ChainConfig(iterations=10, burn_in=10)
        with pytest.raises(ValueError):
            ChainConfig(iterations=10, burn_in=2, thin=0)


class TestSummarize:
    def test_constant_draws(self):
        out = summarize({"a": np.full(50, 3.25)})["a"]
        assert out["mean"] == 3.25 and out["sd"] == 0.0
        assert out["q2.5"] == out["q50"] == out["q97.5"] == 3.25

    def test_order_statistics_interpolation(self):
        draws = np.arange(1.0, 101.0)
        out = summarize({"a": draws})["a"]
        assert out["q50"] == pytest.approx(50.5)
        assert out["q2.5"] == pytest.approx(3.475)
        assert out["q97.5"] == pytest.approx(97.525)

    def test_symmetric_mean_matches_median(self):
        rng = np.random.default_rng(13)
        draws = rng.normal(size=20_000)
        out = summarize({"a": draws})["a"]
        assert abs(out["mean"] - out["q50"]) < 0.03

    def test_quantiles_monotone(self):
        rng = np.random.default_rng(14)
        out = summarize({"a": rng.exponential(size=500)})["a"]
        assert out["q2.5"] <= out["q50"] <= out["q97.5"]

    def test_insufficient_draws(self):
        with pytest.raises(InsufficientDraws):
            summarize({"a": np.array([1.0])})


class TestFiles:
    def test_samples_csv_roundtrip(self, tmp_path):
        config = ChainConfig(iterations=30, burn_in=10, seed=1, initial_theta=(1, 1, 1))
        samples = run_chain(make_stub(), config)
        path = tmp_path / "samples.csv"
        write_samples_csv(path, samples)
        names, draws = read_samples_csv(path)
        assert names == ["sigma2", "tau2", "phi", "beta_0", "beta_1"]
        np.testing.assert_array_equal(draws, samples.draws)

    def test_chain_log_is_json_lines_with_frozen_scales(self, tmp_path):
        config = ChainConfig(iterations=120, burn_in=60, seed=2, initial_theta=(1, 1, 1))
        samples = run_chain(make_stub(), config)
        path = tmp_path / "log.jsonl"
        write_chain_log(path, samples, config)
        lines = [json.loads(line) for line in path.read_text().splitlines()]
        assert lines[0]["model"] == "stub" and lines[0]["iterations"] == 120
        recs = lines[1:]
        assert len(recs) == 120
        assert all(set(r) == {"iteration", "accepted", "scales", "log_target"} for r in recs)
        post = [tuple(r["scales"]) for r in recs if r["iteration"] >= 60]
        assert len(set(post)) == 1
