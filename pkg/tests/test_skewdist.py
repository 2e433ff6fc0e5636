import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import kstest, multivariate_normal, multivariate_t, norm
from scipy.stats import t as tdist

from skewfield.skewdist import (
    ConvolutionInput,
    SnParams,
    StParams,
    convolve_sn_normal,
    delta_from_sample_skewness,
    lam,
    sample_sn,
    sample_st,
    sn_log_density,
    st_log_density,
    st_marginal,
)
from skewfield.spatial import MaternSpec, build_correlation_matrix

from oracles import ks_distance, sn_cdf_1d, st_cdf_1d, st_density_2d


def corr2(rho):
    return np.array([[1.0, rho], [rho, 1.0]])


class TestLam:
    def test_zero(self):
        assert lam(0.0) == 0.0

    def test_odd_and_increasing(self):
        z = np.linspace(-0.95, 0.95, 41)
        vals = lam(z)
        np.testing.assert_allclose(vals, -lam(-z), atol=1e-15)
        assert np.all(np.diff(vals) > 0)

    def test_domain(self):
        with pytest.raises(ValueError):
            lam(1.0)


class TestSnDensity:
    def test_standard_normal_point(self):
        p = SnParams(np.eye(1), np.zeros(1))
        # 2 phi(0) Phi(0) = phi(0)
        assert sn_log_density(np.zeros(1), p) == pytest.approx(-0.9189385332046727, abs=1e-12)

    def test_zero_skew_equals_normal(self):
        rng = np.random.default_rng(1)
        om = corr2(0.6)
        p = SnParams(om, np.zeros(2))
        for _ in range(10):
            y = rng.standard_normal(2) * 2
            want = multivariate_normal.logpdf(y, cov=om)
            assert sn_log_density(y, p) == pytest.approx(want, abs=1e-12)

    def test_matches_defining_product(self):
        p = SnParams(np.eye(1), np.array([2.0]))
        want = math.log(2.0 * norm.pdf(1.0) * norm.cdf(2.0))
        assert sn_log_density(np.array([1.0]), p) == pytest.approx(want, abs=1e-10)

    def test_univariate_normalization(self):
        p = SnParams(np.eye(1), np.array([3.0]))
        total, _ = quad(lambda x: math.exp(sn_log_density(np.array([x]), p)), -12, 12)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_dimension_mismatch(self):
        p = SnParams(np.eye(2), np.zeros(2))
        with pytest.raises(ValueError):
            sn_log_density(np.zeros(3), p)


class TestStDensity:
    def test_zero_skew_univariate(self):
        p = StParams(np.zeros(1), np.eye(1), np.zeros(1), 5.0)
        assert st_log_density(np.zeros(1), p) == pytest.approx(tdist.logpdf(0.0, 5.0), abs=1e-12)

    def test_zero_skew_equals_multivariate_t(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((3, 3))
        om = a @ a.T + 3 * np.eye(3)
        p = StParams(np.zeros(3), om, np.zeros(3), 7.0)
        mt = multivariate_t(loc=np.zeros(3), shape=om, df=7.0)
        for _ in range(10):
            y = rng.standard_normal(3) * 2
            assert st_log_density(y, p) == pytest.approx(mt.logpdf(y), abs=1e-12)

    def test_skew_cauchy_normalizes(self):
        p = StParams(np.zeros(1), np.eye(1), np.array([1.0]), 1.0)
        f = lambda x: math.exp(st_log_density(np.array([x]), p))
        lo, _ = quad(f, -np.inf, 0.0, limit=200)
        hi, _ = quad(f, 0.0, np.inf, limit=200)
        assert lo + hi == pytest.approx(1.0, abs=1e-4)

    def test_bivariate_against_reassembled_density(self):
        om = np.array([[2.0, 0.6], [0.6, 1.5]])
        p = StParams(np.zeros(2), om, np.array([1.0, -1.0]), 3.0)
        y = np.array([0.5, -0.2])
        want = st_density_2d(y, om, np.array([1.0, -1.0]), 3.0)
        assert math.exp(st_log_density(y, p)) == pytest.approx(want, rel=1e-9)

    def test_large_dof_matches_skew_normal(self):
        om = corr2(0.4)
        alpha = np.array([1.5, -0.5])
        p_st = StParams(np.zeros(2), om, alpha, 1e6)
        p_sn = SnParams(om, alpha)
        rng = np.random.default_rng(3)
        for _ in range(10):
            y = rng.uniform(-2.0, 2.0, size=2)
            assert st_log_density(y, p_st) == pytest.approx(sn_log_density(y, p_sn), abs=1e-4)

    def test_invalid_dof(self):
        with pytest.raises(ValueError):
            StParams(np.zeros(1), np.eye(1), np.zeros(1), 0.0)


class TestSampleSn:
    def test_zero_skew_margins_symmetric(self):
        from scipy.stats import skew

        p = SnParams(corr2(0.5), np.zeros(2))
        x = sample_sn(p, 100_000, seed=10)
        assert np.abs(skew(x, axis=0)).max() < 0.05

    def test_univariate_ks_against_owens_t_cdf(self):
        p = SnParams(np.eye(1), np.array([5.0]))
        x = sample_sn(p, 100_000, seed=11)[:, 0]
        assert ks_distance(x, lambda q: sn_cdf_1d(q, 5.0)) < 0.01

    def test_mean_matches_delta(self):
        om = np.array([[1.0, 0.3, 0.1], [0.3, 1.0, 0.5], [0.1, 0.5, 1.0]])
        alpha = np.array([2.0, -1.0, 0.5])
        p = SnParams(om, alpha)
        n = 200_000
        x = sample_sn(p, n, seed=12)
        want = p.delta * math.sqrt(2.0 / math.pi)
        stderr = x.std(axis=0) / math.sqrt(n)
        assert np.all(np.abs(x.mean(axis=0) - want) < 3.0 * stderr)

    def test_reproducible(self):
        p = SnParams(corr2(0.2), np.array([1.0, 2.0]))
        np.testing.assert_array_equal(sample_sn(p, 50, seed=5), sample_sn(p, 50, seed=5))


class TestSampleSt:
    def test_huge_dof_matches_skew_normal_sampler(self):
        from scipy.stats import ks_2samp

        om = corr2(0.4)
        alpha = np.array([2.0, 0.0])
        st = sample_st(StParams(np.zeros(2), om, alpha, 1e6), 10_000, seed=20)
        sn = sample_sn(SnParams(om, alpha), 10_000, seed=21)
        for j in range(2):
            assert ks_2samp(st[:, j], sn[:, j]).pvalue > 0.01

    def test_symmetric_t_variance(self):
        n = 100_000
        x = sample_st(StParams(np.zeros(1), np.eye(1), np.zeros(1), 5.0), n, seed=22)[:, 0]
        # Var = nu / (nu - 2); stderr of s^2 from fourth-moment formula
        want = 5.0 / 3.0
        m4 = np.mean((x - x.mean()) ** 4)
        stderr = math.sqrt((m4 - want**2) / n)
        assert abs(x.var() - want) < 3.0 * stderr

    def test_univariate_ks_against_quadrature_cdf(self):
        x = sample_st(StParams(np.zeros(1), np.eye(1), np.array([3.0]), 4.0), 100_000, seed=23)[:, 0]
        assert ks_distance(x, lambda q: st_cdf_1d(q, 1.0, 3.0, 4.0)) < 0.01


class TestConvolution:
    def test_zero_mixing_is_identity(self):
        rng = np.random.default_rng(30)
        a = rng.standard_normal((3, 3))
        om = a @ a.T + 3 * np.eye(3)
        alpha = np.array([1.0, -2.0, 0.5])
        out = convolve_sn_normal(ConvolutionInput(np.zeros(3), om, alpha, 4.0))
        np.testing.assert_allclose(out.omega, om, rtol=1e-12)
        np.testing.assert_allclose(out.alpha, alpha, rtol=1e-10, atol=1e-12)
        assert out.nu == 4.0

    def test_zero_skew_scale_update(self):
        zeta = np.array([0.3, -0.5])
        om = corr2(0.6)
        out = convolve_sn_normal(ConvolutionInput(zeta, om, np.zeros(2), 3.0))
        dz = np.sqrt(1 - zeta**2)
        lv = zeta / dz
        want = dz[:, None] * (om + np.outer(lv, lv)) * dz[None, :]
        np.testing.assert_allclose(out.omega, want, rtol=1e-12)
        np.testing.assert_allclose(out.alpha, np.zeros(2), atol=1e-14)

    def test_unit_diagonal_preserved(self):
        zeta = np.array([0.3, 0.3])
        out = convolve_sn_normal(ConvolutionInput(zeta, corr2(0.7), np.array([2.0, 2.0]), 3.0))
        np.testing.assert_allclose(np.diag(out.omega), [1.0, 1.0], atol=1e-12)

    def test_direct_simulation_of_sum(self):
        # zeta X0 + Dz X over sqrt(Z) must match the analytic skew-t margins
        pts = [[0.0, 20.0], [1.0, 20.0]]
        om = build_correlation_matrix(pts, MaternSpec(111.0, 1.5)).values
        zeta = np.array([0.3, 0.3])
        alpha = np.array([2.0, 2.0])
        nu = 3.0
        out = convolve_sn_normal(ConvolutionInput(zeta, om, alpha, nu))

        rng = np.random.default_rng(31)
        n = 100_000
        x0 = rng.standard_normal(n)
        z = rng.gamma(nu / 2.0, 2.0 / nu, size=n)
        x = sample_sn(SnParams(om, alpha), n, rng)
        numer = zeta[None, :] * x0[:, None] + np.sqrt(1 - zeta**2)[None, :] * x
        y = numer / np.sqrt(z)[:, None]

        for j in range(2):
            marg = st_marginal(out, j)
            dist = ks_distance(
                y[:, j],
                lambda q: st_cdf_1d(q, marg.omega[0, 0], marg.alpha[0], marg.nu),
            )
            assert dist < 0.01
        # scale-correlation of the numerator matches the returned scale matrix
        second = numer.T @ numer / n
        scale = np.sqrt(np.diag(second))
        emp = second / np.outer(scale, scale)
        ostar_corr = out.omega / np.outer(
            np.sqrt(np.diag(out.omega)), np.sqrt(np.diag(out.omega))
        )
        assert np.abs(emp - ostar_corr).max() < 0.02

    def test_rejects_unit_zeta(self):
        with pytest.raises(ValueError):
            ConvolutionInput(np.array([1.0]), np.eye(1), np.zeros(1), 3.0)


class TestHelpers:
    def test_delta_from_skewness_round_trip(self):
        b = math.sqrt(2.0 / math.pi)
        for d0 in (-0.8, -0.3, 0.0, 0.4, 0.9):
            g = 0.5 * (4 - math.pi) * (b * d0) ** 3 / (1 - b * b * d0 * d0) ** 1.5
            assert delta_from_sample_skewness(g) == pytest.approx(d0, abs=1e-12)

    def test_delta_clipped_outside_range(self):
        assert abs(delta_from_sample_skewness(5.0)) <= 0.995

    def test_st_marginal_zero_skew(self):
        p = StParams(np.zeros(2), 2.0 * corr2(0.5), np.zeros(2), 4.0)
        m = st_marginal(p, 0)
        assert m.alpha[0] == 0.0
        assert m.omega[0, 0] == pytest.approx(2.0)
