import numpy as np
import pytest

from spatgp.covariance import CovarianceParams, marginal_cov
from spatgp.datasets import Dataset
from spatgp.fullgp import FullGPBackend, dense_loglik, krige
from spatgp.mcmc import InverseGamma, PriorSpec, Uniform


def make_data(n, seed, p_extra=0, domain=1.0):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, domain, size=(n, 2))
    X = np.ones((n, 1))
    if p_extra:
        X = np.column_stack([X, rng.normal(size=(n, p_extra))])
    y = rng.normal(size=n)
    return Dataset(pts, X, y)


class TestDenseLoglik:
    def test_single_point_zero_residual_unit_variance(self):
        data = Dataset(np.array([[0.0, 0.0]]), np.array([[1.0]]), np.array([2.5]))
        params = CovarianceParams(sigma2=0.6, phi=1.0, tau2=0.4)
        assert dense_loglik(data, np.array([2.5]), params) == pytest.approx(0.0, abs=1e-12)

    def test_matches_hand_expanded_bivariate(self):
        pts = np.array([[0.0, 0.0], [0.3, 0.4]])  # distance 0.5
        params = CovarianceParams(sigma2=2.0, phi=1.2, tau2=0.7)
        beta = np.array([0.4])
        y = np.array([1.0, -0.8])
        data = Dataset(pts, np.ones((2, 1)), y)
        v = params.sigma2 + params.tau2
        c = params.sigma2 * np.exp(-params.phi * 0.5)
        det = v * v - c * c
        e = y - beta[0]
        quad = (v * e[0] ** 2 - 2 * c * e[0] * e[1] + v * e[1] ** 2) / det
        expect = -0.5 * np.log(det) - 0.5 * quad
        assert dense_loglik(data, beta, params) == pytest.approx(expect, rel=1e-12)

    def test_joint_permutation_invariance(self):
        data = make_data(20, 1, p_extra=1)
        params = CovarianceParams(sigma2=1.2, phi=2.0, tau2=0.4)
        beta = np.array([0.3, -0.2])
        base = dense_loglik(data, beta, params)
        perm = np.random.default_rng(2).permutation(20)
        permuted = Dataset(data.locations[perm], data.X[perm], data.y[perm])
        assert dense_loglik(permuted, beta, params) == pytest.approx(base, abs=1e-10)

    def test_truth_beats_gross_misfit(self):
        # generating parameters should outscore sigma2 x 100 on nearly every seed
        params = CovarianceParams(sigma2=1.0, phi=3.0, tau2=0.3)
        wrong = params.replace(sigma2=100.0)
        wins = 0
        for seed in range(50):
            rng = np.random.default_rng(seed)
            pts = rng.uniform(size=(30, 2))
            cov = marginal_cov(pts, params)
            y = np.linalg.cholesky(cov) @ rng.normal(size=30)
            data = Dataset(pts, np.ones((30, 1)), y)
            beta = np.zeros(1)
            wins += dense_loglik(data, beta, params) > dense_loglik(data, beta, wrong)
        assert wins >= 48


class TestKrige:
    def test_exact_interpolation_at_observed_site(self):
        data = make_data(8, 3)
        params = CovarianceParams(sigma2=1.5, phi=2.0, tau2=0.0)
        beta = np.array([0.2])
        mean, var = krige(data, beta, params, data.locations[4][None, :])
        assert mean[0] == pytest.approx(data.y[4], abs=1e-9)
        assert var[0] == pytest.approx(0.0, abs=1e-9)

    def test_far_target_prior_limit(self):
        data = make_data(8, 4)
        params = CovarianceParams(sigma2=1.5, phi=2.0, tau2=0.5)
        beta = np.array([0.7])
        mean, var = krige(data, beta, params, np.array([[500.0, 500.0]]))
        assert mean[0] == pytest.approx(0.7, abs=1e-8)
        assert var[0] == pytest.approx(2.0, abs=1e-8)

    def test_matches_joint_conditioning(self):
        rng = np.random.default_rng(5)
        pts = rng.uniform(size=(3, 2))
        target = rng.uniform(size=(1, 2))
        params = CovarianceParams(sigma2=1.4, phi=2.5, tau2=0.3)
        beta = np.array([0.5])
        y = rng.normal(size=3)
        data = Dataset(pts, np.ones((3, 1)), y)
        mean, var = krige(data, beta, params, target)
        joint = marginal_cov(np.vstack([pts, target]), params)
        mu = np.full(4, beta[0])
        cm = mu[3] + joint[3, :3] @ np.linalg.solve(joint[:3, :3], y - mu[:3])
        cv = joint[3, 3] - joint[3, :3] @ np.linalg.solve(joint[:3, :3], joint[:3, 3])
        assert mean[0] == pytest.approx(cm, rel=1e-10)
        assert var[0] == pytest.approx(cv, rel=1e-10)

    def test_variance_bounded(self):
        data = make_data(15, 6)
        params = CovarianceParams(sigma2=2.0, phi=1.0, tau2=0.5)
        targets = np.random.default_rng(7).uniform(-1, 2, size=(40, 2))
        _, var = krige(data, np.array([0.0]), params, targets)
        assert np.all(var >= 0.0)
        assert np.all(var <= params.sigma2 + params.tau2 + 1e-12)


class TestBackend:
    def test_gibbs_beta_matches_closed_form(self):
        data = make_data(30, 8, p_extra=1)
        priors = PriorSpec(InverseGamma(2, 1), InverseGamma(2, 1), Uniform(0.1, 10))
        backend = FullGPBackend(data, priors)
        theta = (1.3, 0.4, 2.0)
        cov = marginal_cov(data.locations, CovarianceParams(sigma2=1.3, phi=2.0, tau2=0.4))
        prec = data.X.T @ np.linalg.solve(cov, data.X)
        shift = data.X.T @ np.linalg.solve(cov, data.y)
        a_mat = np.linalg.inv(prec)
        mean = a_mat @ shift
        rng = np.random.default_rng(11)
        draws = np.array([backend.gibbs_beta(theta, rng) for _ in range(10_000)])
        np.testing.assert_allclose(draws.mean(axis=0), mean, atol=0.05 * np.sqrt(np.diagonal(a_mat)).max() + 0.05 * np.abs(mean).max())
        np.testing.assert_allclose(np.cov(draws.T), a_mat, rtol=0.1, atol=5e-3)

    def test_log_target_adds_priors(self):
        data = make_data(10, 9)
        priors = PriorSpec(InverseGamma(2, 1), InverseGamma(2, 1), Uniform(0.1, 10))
        backend = FullGPBackend(data, priors)
        theta = (1.0, 0.5, 2.0)
        beta = np.array([0.1])
        expect = priors.log_theta(*theta) + dense_loglik(
            data, beta, CovarianceParams(sigma2=1.0, phi=2.0, tau2=0.5))
        assert backend.log_target(theta, beta) == pytest.approx(expect, rel=1e-12)

    def test_phi_outside_prior_is_rejected(self):
        data = make_data(10, 10)
        priors = PriorSpec(InverseGamma(2, 1), InverseGamma(2, 1), Uniform(0.5, 2.0))
        backend = FullGPBackend(data, priors)
        assert backend.log_target((1.0, 0.5, 10.0), np.array([0.0])) == -np.inf
