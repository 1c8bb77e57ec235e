import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spatgp.covariance import (CovarianceParams, cross_cov, effective_range, kernel,
                               marginal_cov, pairwise_distances)
from spatgp.errors import DuplicateLocation, InvalidParams
from spatgp.linalg import cholesky


EXP = CovarianceParams(sigma2=5.0, phi=9.0, tau2=5.0)


class TestParams:
    def test_rejects_bad_values(self):
        with pytest.raises(InvalidParams):
            CovarianceParams(sigma2=-1.0, phi=1.0)
        with pytest.raises(InvalidParams):
            CovarianceParams(sigma2=1.0, phi=0.0)
        with pytest.raises(InvalidParams):
            CovarianceParams(sigma2=1.0, phi=1.0, tau2=-0.1)
        with pytest.raises(InvalidParams):
            CovarianceParams(sigma2=1.0, phi=1.0, family="matern")
        with pytest.raises(InvalidParams):
            CovarianceParams(sigma2=1.0, phi=1.0, family="gauss")


class TestKernel:
    def test_zero_distance_is_sigma2(self):
        a = np.array([0.3, 0.7])
        assert kernel(a, a, EXP) == pytest.approx(5.0)

    def test_paper_sigma5_phi9(self):
        # exponential with sigma2 = 5, phi = 9 at distance 0
        assert kernel(np.zeros(2), np.zeros(2), EXP) == 5.0

    def test_correlation_005_at_50_units(self):
        p = CovarianceParams(sigma2=1.0, phi=0.06)
        val = kernel(np.zeros(2), np.array([50.0, 0.0]), p)
        assert val == pytest.approx(0.0498, abs=2e-4)

    @given(st.floats(0.0, 10.0), st.floats(0.0, 10.0))
    @settings(max_examples=50, deadline=None)
    def test_symmetry(self, x, y):
        a = np.array([x, 0.0])
        b = np.array([0.0, y])
        assert kernel(a, b, EXP) == kernel(b, a, EXP)

    def test_monotone_decreasing(self):
        dists = np.linspace(0.0, 3.0, 50)
        vals = [kernel(np.zeros(1), np.array([d]), EXP) for d in dists]
        assert np.all(np.diff(vals) < 0)

    def test_matern_half_equals_exponential(self):
        pm = CovarianceParams(sigma2=2.0, phi=3.0, nu=0.5, family="matern")
        pe = CovarianceParams(sigma2=2.0, phi=3.0)
        for d in (0.0, 0.1, 0.5, 2.0):
            a = np.zeros(1)
            b = np.array([d])
            assert kernel(a, b, pm) == pytest.approx(kernel(a, b, pe), rel=1e-12, abs=1e-12)


class TestCrossCov:
    def test_single_point(self):
        pt = np.array([[0.2, 0.4]])
        mat = cross_cov(pt, pt, EXP)
        assert mat.shape == (1, 1)
        assert mat[0, 0] == pytest.approx(5.0)

    def test_symmetry_and_diagonal(self):
        pts = np.array([[0.0, 0.0], [0.5, 0.1], [0.2, 0.9]])
        mat = cross_cov(pts, pts, EXP)
        np.testing.assert_array_equal(mat, mat.T)
        np.testing.assert_allclose(np.diagonal(mat), 5.0)

    def test_smallest_eigenvalue_positive(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(size=(5, 2))
        mat = cross_cov(pts, pts, EXP) + EXP.tau2 * np.eye(5)
        assert np.min(np.linalg.eigvalsh(mat)) > 0

    def test_duplicates_allowed_across_sets(self):
        pts = np.array([[0.1, 0.1]])
        mat = cross_cov(pts, pts, EXP)
        assert np.isfinite(mat).all()


class TestMarginalCov:
    def test_single_point(self):
        mat = marginal_cov(np.array([[0.0, 0.0]]), EXP)
        assert mat[0, 0] == pytest.approx(EXP.sigma2 + EXP.tau2)

    def test_zero_nugget_matches_cross_cov(self):
        p = EXP.replace(tau2=0.0)
        pts = np.array([[0.0, 0.0], [1.0, 0.3]])
        np.testing.assert_array_equal(marginal_cov(pts, p), cross_cov(pts, pts, p))

    def test_entrywise_assembly(self):
        rng = np.random.default_rng(4)
        pts = rng.uniform(size=(4, 2))
        mat = marginal_cov(pts, EXP)
        for i in range(4):
            for j in range(4):
                expect = kernel(pts[i], pts[j], EXP) + (EXP.tau2 if i == j else 0.0)
                assert mat[i, j] == pytest.approx(expect, rel=1e-12)

    def test_rejects_duplicates(self):
        pts = np.array([[0.1, 0.2], [0.1, 0.2]])
        with pytest.raises(DuplicateLocation):
            marginal_cov(pts, EXP)

    @pytest.mark.parametrize("seed", range(5))
    def test_passes_cholesky_with_nugget(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(size=(20, 2))
        p = CovarianceParams(sigma2=1.0, phi=2.0, tau2=1e-6)
        cholesky(marginal_cov(pts, p))


class TestEffectiveRange:
    def test_paper_phi_006(self):
        p = CovarianceParams(sigma2=1.0, phi=0.06)
        assert effective_range(p, 0.05) == pytest.approx(49.93, abs=0.01)

    def test_unit_range_by_construction(self):
        p = CovarianceParams(sigma2=1.0, phi=-np.log(0.05))
        assert effective_range(p, 0.05) == pytest.approx(1.0, rel=1e-12)

    def test_matern_half_matches_exponential(self):
        pm = CovarianceParams(sigma2=1.0, phi=0.9, nu=0.5, family="matern")
        pe = CovarianceParams(sigma2=1.0, phi=0.9)
        assert effective_range(pm, 0.05) == pytest.approx(effective_range(pe, 0.05), rel=1e-6)

    @given(st.floats(0.02, 0.9), st.floats(0.1, 20.0))
    @settings(max_examples=40, deadline=None)
    def test_inverse_consistency(self, threshold, phi):
        p = CovarianceParams(sigma2=1.0, phi=phi)
        d = effective_range(p, threshold)
        assert np.exp(-phi * d) == pytest.approx(threshold, rel=1e-8)

    def test_rejects_bad_threshold(self):
        with pytest.raises(ValueError):
            effective_range(EXP, 1.5)


def test_pairwise_distances_matches_manual():
    rng = np.random.default_rng(8)
    u = rng.normal(size=(6, 3))
    v = rng.normal(size=(4, 3))
    got = pairwise_distances(u, v)
    for i in range(6):
        for j in range(4):
            assert got[i, j] == pytest.approx(np.linalg.norm(u[i] - v[j]), rel=1e-12)
