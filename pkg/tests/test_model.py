import math

import numpy as np
import pytest
from scipy.special import digamma
from scipy.stats import gamma as gamma_dist
from scipy.stats import kurtosis, norm, skew

from skewfield.configs import default_layout, default_true_params
from skewfield.model import (
    Dataset,
    LatentState,
    RegionParams,
    SktParams,
    SktTerms,
    complete_data_loglik,
    joint_log_density,
    simulate,
)
from skewfield.skewdist import ConvolutionInput, convolve_sn_normal, lam, st_marginal
from skewfield.spatial import MaternSpec, SpatialLayout

from oracles import complete_loglik_transcription, ks_distance, st_cdf_1d


def two_site_layout():
    return SpatialLayout(
        sites=[[0.0, 20.0], [1.0, 20.0], [3.0, 21.0], [4.0, 21.0]],
        region_of=[0, 0, 1, 1],
    )


def small_params(zeta=0.2, delta=(0.5, 0.6, 0.4, 0.3), nu=(3.0, 4.0), sigma_off=0.6):
    lay = two_site_layout()
    d = np.asarray(delta, dtype=float)
    params = SktParams(
        regions=[
            RegionParams(delta=d[:2], zeta=[zeta, zeta], nu=nu[0], psi=MaternSpec(90.0)),
            RegionParams(delta=d[2:], zeta=[zeta, zeta], nu=nu[1], psi=MaternSpec(90.0)),
        ],
        sigma=np.array([[1.0, sigma_off], [sigma_off, 1.0]]),
    )
    return lay, params


def random_latents(rng, n_times, n_regions):
    return LatentState(
        z=rng.gamma(2.0, 1.0, size=(n_times, n_regions)) + 0.05,
        eta0=rng.standard_normal((n_times, n_regions)),
        eta1=np.abs(rng.standard_normal((n_times, n_regions))),
    )


class TestSimulate:
    def test_pure_gaussian_fine_scale_covariance(self):
        lay = SpatialLayout(
            sites=[[c, 20.26 + r] for r in range(2) for c in range(3)],
            region_of=[0, 0, 0, 1, 1, 1],
        )
        params = SktParams(
            regions=[
                RegionParams(delta=np.zeros(3), zeta=np.zeros(3), nu=1e6, psi=MaternSpec(90.0))
                for _ in range(2)
            ],
            sigma=np.array([[1.0, 0.5], [0.5, 1.0]]),
        )
        data = simulate(params, lay, 5000, seed=1)
        terms = SktTerms(params, lay)
        for r in range(2):
            emp = np.cov(data.region_block(r), rowvar=False)
            want = terms.psi[r].values
            rel = np.linalg.norm(emp - want) / np.linalg.norm(want)
            assert rel < 0.1

    def test_default_configuration_skewness_and_coupling(self):
        data = simulate(default_true_params(), default_layout(), 4000, seed=2)
        assert np.all(skew(data.y, axis=0) > 0)
        m0 = data.region_block(0).mean(axis=1)
        m1 = data.region_block(1).mean(axis=1)
        assert np.corrcoef(m0, m1)[0, 1] > 0

    def test_single_site_matches_analytic_skew_t(self):
        lay = SpatialLayout(sites=[[0.0, 20.0]], region_of=[0])
        delta, zeta, nu = 0.6, 0.4, 4.0
        params = SktParams(
            regions=[RegionParams(delta=[delta], zeta=[zeta], nu=nu, psi=np.eye(1))],
            sigma=np.eye(1),
        )
        data = simulate(params, lay, 100_000, seed=3)
        out = convolve_sn_normal(
            ConvolutionInput(np.array([zeta]), np.eye(1), np.array([lam(delta)]), nu)
        )
        marg = st_marginal(out, 0)
        dist = ks_distance(
            data.y[:, 0], lambda q: st_cdf_1d(q, marg.omega[0, 0], marg.alpha[0], marg.nu)
        )
        assert dist < 0.01

    def test_reproducible_and_latents_consistent(self):
        lay, params = small_params()
        d1, lat = simulate(params, lay, 40, seed=9, return_latents=True)
        d2 = simulate(params, lay, 40, seed=9)
        np.testing.assert_array_equal(d1.y, d2.y)
        assert np.all(lat.z > 0)
        assert np.all(lat.eta1 >= 0)

    def test_tail_behavior_by_dof(self):
        lay, params = small_params(nu=(3.0, 5.0))
        heavy = simulate(params, lay, 60_000, seed=4)
        assert np.all(kurtosis(heavy.y, axis=0) > 0)
        lay2, params2 = small_params(delta=(0.0,) * 4, nu=(1e6, 1e6))
        light = simulate(params2, lay2, 60_000, seed=5)
        assert np.abs(kurtosis(light.y, axis=0)).max() < 0.15

    def test_empty_dataset(self):
        lay, params = small_params()
        data = simulate(params, lay, 0, seed=6)
        assert data.y.shape == (0, 4)


class TestJointLogDensity:
    def test_decoupled_scalar_case(self):
        lay = SpatialLayout(sites=[[0.0, 20.0]], region_of=[0])
        nu = 3.0
        params = SktParams(
            regions=[RegionParams(delta=[0.0], zeta=[0.0], nu=nu, psi=np.eye(1))],
            sigma=np.eye(1),
        )
        terms = SktTerms(params, lay)
        y, z, e0, e1 = 0.7, 1.3, 0.4, 0.8
        got = joint_log_density(np.array([y]), [z], [e0], [e1], terms)
        want = (
            norm.logpdf(y, scale=1 / math.sqrt(z))
            + gamma_dist.logpdf(z, nu / 2, scale=2 / nu)
            + math.log(2.0) + norm.logpdf(e1, scale=1 / math.sqrt(z))
            + norm.logpdf(e0, scale=1 / math.sqrt(z))
        )
        assert got == pytest.approx(want, abs=1e-12)

    def test_density_decreases_with_residual_norm(self):
        lay, params = small_params()
        terms = SktTerms(params, lay)
        z = np.array([1.0, 1.2])
        e0 = np.array([0.3, -0.1])
        e1 = np.array([0.5, 0.2])
        base = np.array([0.1, 0.2, -0.1, 0.3])
        vals = [
            joint_log_density(base * scale, z, e0, e1, terms) for scale in (1.0, 2.0, 4.0)
        ]
        assert vals[0] > vals[1] > vals[2]

    def test_invalid_latents(self):
        lay, params = small_params()
        terms = SktTerms(params, lay)
        y = np.zeros(4)
        with pytest.raises(ValueError):
            joint_log_density(y, [0.0, 1.0], [0.0, 0.0], [0.0, 0.0], terms)
        with pytest.raises(ValueError):
            joint_log_density(y, [1.0, 1.0], [0.0, 0.0], [-0.1, 0.0], terms)

    def test_region_permutation_invariance(self):
        lay = two_site_layout()
        params = SktParams(
            regions=[
                RegionParams(delta=[0.5, 0.2], zeta=[0.3, 0.3], nu=3.0, psi=np.eye(2)),
                RegionParams(delta=[-0.2, 0.1], zeta=[0.5, 0.5], nu=6.0, psi=np.eye(2)),
            ],
            sigma=np.array([[1.0, 0.4], [0.4, 1.0]]),
        )
        swapped = SktParams(regions=[params.regions[1], params.regions[0]], sigma=params.sigma)
        y = np.array([0.3, -0.2, 0.8, 0.1])
        z = np.array([1.1, 0.7])
        e0 = np.array([0.2, -0.5])
        e1 = np.array([0.4, 0.9])
        a = joint_log_density(y, z, e0, e1, SktTerms(params, lay))
        b = joint_log_density(
            np.concatenate([y[2:], y[:2]]), z[::-1], e0[::-1], e1[::-1], SktTerms(swapped, lay)
        )
        assert a == pytest.approx(b, abs=1e-12)


class TestCompleteDataLoglik:
    def test_single_time_consistency_with_joint(self):
        lay, params = small_params()
        lay2, params2 = small_params(zeta=0.4, delta=(0.2, 0.1, -0.3, 0.6), nu=(5.0, 2.0))
        rng = np.random.default_rng(11)
        data = simulate(params, lay, 1, seed=12)
        lat = random_latents(rng, 1, 2)
        terms1 = SktTerms(params, lay)
        terms2 = SktTerms(params2, lay)
        diff_complete = complete_data_loglik(data, lat, params) - complete_data_loglik(
            data, lat, params2
        )
        diff_joint = joint_log_density(
            data.y[0], lat.z[0], lat.eta0[0], lat.eta1[0], terms1
        ) - joint_log_density(data.y[0], lat.z[0], lat.eta0[0], lat.eta1[0], terms2)
        assert diff_complete == pytest.approx(diff_joint, abs=1e-10)

    def test_matches_literal_transcription(self):
        rng = np.random.default_rng(13)
        lay = SpatialLayout(
            sites=[[c + 4.0 * r, 20.0 + 0.5 * c] for r in range(2) for c in range(4)],
            region_of=[0] * 4 + [1] * 4,
        )
        params = SktParams(
            regions=[
                RegionParams(
                    delta=rng.uniform(-0.7, 0.7, 4),
                    zeta=rng.uniform(-0.6, 0.6, 4),
                    nu=3.5,
                    psi=MaternSpec(120.0),
                ),
                RegionParams(
                    delta=rng.uniform(-0.7, 0.7, 4),
                    zeta=rng.uniform(-0.6, 0.6, 4),
                    nu=7.0,
                    psi=MaternSpec(60.0),
                ),
            ],
            sigma=np.array([[1.0, -0.3], [-0.3, 1.0]]),
        )
        data = simulate(params, lay, 10, seed=14)
        lat = random_latents(rng, 10, 2)
        got = complete_data_loglik(data, lat, params)
        terms = SktTerms(params, lay)
        want = complete_loglik_transcription(
            data.y,
            lat.z,
            lat.eta0,
            lat.eta1,
            zetas=[r.zeta for r in params.regions],
            deltas=[r.delta for r in params.regions],
            nus=[r.nu for r in params.regions],
            psis=[terms.psi[r].values for r in range(2)],
            sigma=params.sigma,
        )
        assert got == pytest.approx(want, rel=1e-12, abs=1e-10)

    def test_zero_loadings_reduce_to_psi_determinant(self):
        lay, _ = small_params()
        params = SktParams(
            regions=[
                RegionParams(delta=[0.0, 0.0], zeta=[0.0, 0.0], nu=3.0, psi=MaternSpec(90.0)),
                RegionParams(delta=[0.0, 0.0], zeta=[0.0, 0.0], nu=3.0, psi=MaternSpec(90.0)),
            ],
            sigma=np.array([[1.0, 0.6], [0.6, 1.0]]),
        )
        terms = SktTerms(params, lay)
        for r in range(2):
            assert terms.ups[r].log_det == pytest.approx(terms.psi[r].log_det, abs=1e-12)

    def test_nu_gradient_matches_analytic(self):
        lay, params = small_params()
        rng = np.random.default_rng(15)
        data = simulate(params, lay, 8, seed=16)
        lat = random_latents(rng, 8, 2)
        n_times = 8
        for r, reg in enumerate(params.regions):
            nu = reg.nu
            analytic = (
                n_times / 2.0 * (math.log(nu / 2.0) + 1.0 - digamma(nu / 2.0))
                + 0.5 * np.log(lat.z[:, r]).sum()
                - 0.5 * lat.z[:, r].sum()
            )
            h = 1e-5
            hi_params = small_params(nu=(nu + h if r == 0 else params.regions[0].nu,
                                         nu + h if r == 1 else params.regions[1].nu))[1]
            lo_params = small_params(nu=(nu - h if r == 0 else params.regions[0].nu,
                                         nu - h if r == 1 else params.regions[1].nu))[1]
            fd = (
                complete_data_loglik(data, lat, hi_params)
                - complete_data_loglik(data, lat, lo_params)
            ) / (2 * h)
            assert fd == pytest.approx(analytic, rel=1e-5)

    def test_loading_gradients_match_mstep_objective(self):
        # the complete-data loglik and the M-step loading objective must have
        # identical zeta/delta derivatives when moments are single-point sums
        from skewfield.mcem import EStepMoments, _loading_objective

        lay, params = small_params()
        rng = np.random.default_rng(17)
        n_times = 6
        data = simulate(params, lay, n_times, seed=18)
        lat = random_latents(rng, n_times, 2)
        z, e0, e1 = lat.z, lat.eta0, lat.eta1
        moments = EStepMoments(
            z=z,
            log_z=np.log(z),
            z_eta0=z * e0,
            z_eta1=z * e1,
            z_eta0_sq=z * e0 * e0,
            z_eta1_sq=z * e1 * e1,
            z_eta0_eta1=z * e0 * e1,
            eta0_scaled_outer=(e0 * np.sqrt(z))[:, :, None] * (e0 * np.sqrt(z))[:, None, :],
            acceptance=np.ones(2),
            s_yy=[
                np.einsum("t,ti,tj->ij", z[:, r], data.region_block(r), data.region_block(r))
                for r in range(2)
            ],
            s_0y=[(z * e0)[:, r] @ data.region_block(r) for r in range(2)],
            s_1y=[(z * e1)[:, r] @ data.region_block(r) for r in range(2)],
            n_sweeps=1,
        )
        terms = SktTerms(params, lay)
        h = 1e-6
        for r in (0, 1):
            psi_inv = terms.psi[r].inverse()
            for s in range(2):
                for which in ("zeta", "delta"):
                    def loglik_at(eps):
                        regs = [
                            RegionParams(
                                delta=p.delta.copy(),
                                zeta=p.zeta.copy(),
                                nu=p.nu,
                                psi=p.psi,
                            )
                            for p in params.regions
                        ]
                        getattr(regs[r], which)[s] += eps
                        return complete_data_loglik(
                            data, lat, SktParams(regions=regs, sigma=params.sigma)
                        )

                    def objective_at(eps):
                        zeta = params.regions[r].zeta.copy()
                        delta = params.regions[r].delta.copy()
                        if which == "zeta":
                            zeta[s] += eps
                        else:
                            delta[s] += eps
                        return _loading_objective(moments, r, psi_inv, n_times, zeta, delta)

                    fd_loglik = (loglik_at(h) - loglik_at(-h)) / (2 * h)
                    fd_obj = (objective_at(h) - objective_at(-h)) / (2 * h)
                    assert fd_loglik == pytest.approx(fd_obj, rel=1e-5, abs=1e-7)


class TestParams:
    def test_round_trip_dict(self):
        _, params = small_params()
        back = SktParams.from_dict(params.to_dict())
        for a, b in zip(params.regions, back.regions):
            np.testing.assert_array_equal(a.delta, b.delta)
            np.testing.assert_array_equal(a.zeta, b.zeta)
            assert a.nu == b.nu
            assert isinstance(b.psi, MaternSpec)
        np.testing.assert_array_equal(params.sigma, back.sigma)

    def test_validation(self):
        with pytest.raises(ValueError):
            RegionParams(delta=[1.0], zeta=[0.0], nu=3.0, psi=np.eye(1))
        with pytest.raises(ValueError):
            RegionParams(delta=[0.0], zeta=[0.0], nu=-1.0, psi=np.eye(1))
        with pytest.raises(ValueError):
            SktParams(
                regions=[RegionParams(delta=[0.0], zeta=[0.0], nu=3.0, psi=np.eye(1))],
                sigma=np.array([[2.0]]),
            )

    def test_parameter_count_convention(self):
        params = default_true_params()
        # per region: 9 delta + 1 tied zeta + 1 nu + 1 range; sigma free: 1
        assert params.n_free_parameters() == 2 * 12 + 1

    def test_upsilon_identity(self):
        lay, params = small_params()
        terms = SktTerms(params, lay)
        for r in range(2):
            want = (
                np.diag(terms.dzd[r]) @ terms.psi[r].values @ np.diag(terms.dzd[r])
            )
            np.testing.assert_allclose(terms.ups[r].values, want, atol=1e-12)

    def test_scalar_zeta_broadcast(self):
        reg = RegionParams(delta=[0.1, 0.2, 0.3], zeta=[0.4], nu=3.0, psi=np.eye(3))
        assert reg.zeta_tied
        np.testing.assert_array_equal(reg.zeta, [0.4, 0.4, 0.4])

    def test_dataset_region_blocks(self):
        lay, params = small_params()
        data = simulate(params, lay, 5, seed=20)
        np.testing.assert_array_equal(data.region_block(0), data.y[:, :2])
        np.testing.assert_array_equal(data.region_block(1), data.y[:, 2:])
