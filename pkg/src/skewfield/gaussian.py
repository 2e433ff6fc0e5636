"""Gaussian baseline: no skew, no heavy tails, shared large-scale effect.

Per region, Y_r = zeta_r 1 X0_r + sqrt(1 - zeta_r^2) U_r with scalar zeta_r,
U_r ~ N(0, Psi_r), and X0 ~ N_R(0, Sigma). The posterior of X0 given data is
exactly Gaussian, so the default E-step conditions in closed form; a Gibbs
E-step over the same full conditionals is kept as a validation mode. The
observed-data likelihood is available in closed form and drives Aitken
stopping and the information criteria.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .model import Dataset
from .report import (
    STATUS_CONVERGED,
    STATUS_MAX_ITERATIONS,
    EmIteration,
    FitReport,
    aitken_limit,
)
from .selection import information_criteria
from .spatial import MaternSpec, SpatialLayout, SpdMatrix, build_correlation_matrix, matern_correlation

_LOG_2PI = math.log(2.0 * math.pi)

__all__ = [
    "GauFitConfig",
    "GauMoments",
    "GauParams",
    "GauTerms",
    "gau_default_init",
    "gau_estep_exact",
    "gau_estep_gibbs",
    "gau_fit",
    "gau_loglik",
    "gau_marginal_covariance",
    "gau_mstep",
    "gau_simulate",
]

_ZETA_EDGE = 1e-6


def _cov_spec_to_dict(spec) -> dict:
    if isinstance(spec, MaternSpec):
        return {
            "matern": {
                "range_km": spec.range_km,
                "smoothness": spec.smoothness,
                "variance": spec.variance,
            }
        }
    return {"matrix": np.asarray(spec, dtype=float).tolist()}


def _cov_spec_from_dict(d: dict):
    if "matern" in d:
        m = d["matern"]
        return MaternSpec(m["range_km"], m.get("smoothness", 1.5), m.get("variance", 1.0))
    return np.asarray(d["matrix"], dtype=float)


@dataclass
class GauParams:
    """Scalar zeta per region, fine-scale correlations, cross-region correlation."""

    zetas: np.ndarray
    psis: list[MaternSpec | np.ndarray]
    sigma: MaternSpec | np.ndarray

    def __post_init__(self) -> None:
        self.zetas = np.atleast_1d(np.asarray(self.zetas, dtype=float))
        if np.any(np.abs(self.zetas) >= 1.0):
            raise ValueError("zeta entries must lie in (-1, 1)")
        if len(self.psis) != self.zetas.size:
            raise ValueError("need one fine-scale spec per region")
        if not isinstance(self.sigma, MaternSpec):
            self.sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
            if np.abs(np.diag(self.sigma) - 1.0).max() > 1e-8:
                raise ValueError("sigma must have unit diagonal")

    @property
    def n_regions(self) -> int:
        return self.zetas.size

    def n_free_parameters(self) -> int:
        k = 0
        for psi in self.psis:
            k += 1  # zeta
            if isinstance(psi, MaternSpec):
                k += 1
            else:
                d = psi.shape[0]
                k += d * (d + 1) // 2
        r = self.n_regions
        k += 1 if isinstance(self.sigma, MaternSpec) else r * (r - 1) // 2
        return k

    def to_dict(self) -> dict:
        return {
            "zetas": self.zetas.tolist(),
            "psis": [_cov_spec_to_dict(p) for p in self.psis],
            "sigma": _cov_spec_to_dict(self.sigma),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GauParams":
        return cls(
            zetas=np.asarray(d["zetas"], dtype=float),
            psis=[_cov_spec_from_dict(p) for p in d["psis"]],
            sigma=_cov_spec_from_dict(d["sigma"]),
        )


class GauTerms:
    """Materialized matrices and the per-region scalars used by conditioning."""

    def __init__(self, params: GauParams, layout: SpatialLayout):
        if params.n_regions != layout.n_regions:
            raise ValueError("params and layout disagree on the number of regions")
        self.params = params
        self.layout = layout
        self.n_regions = params.n_regions
        self.psi: list[SpdMatrix] = []
        self.psi_inv_ones: list[np.ndarray] = []
        self.ones_quad: list[float] = []
        for r, psi in enumerate(params.psis):
            if isinstance(psi, MaternSpec):
                mat = build_correlation_matrix(layout.region_points(r), psi)
            else:
                mat = SpdMatrix(psi)
            if mat.n != layout.region_sizes[r]:
                raise ValueError(f"region {r}: Psi dimension mismatch")
            self.psi.append(mat)
            w = mat.solve(np.ones(mat.n))
            self.psi_inv_ones.append(w)
            self.ones_quad.append(float(w.sum()))
        if isinstance(params.sigma, MaternSpec):
            self.sigma = build_correlation_matrix(layout.centroids, params.sigma)
        else:
            self.sigma = SpdMatrix(params.sigma)
        self.lam = self.sigma.inverse()
        z = params.zetas
        self.data_precision = z**2 / (1.0 - z**2) * np.asarray(self.ones_quad)

    def data_linear(self, data: Dataset) -> np.ndarray:
        """(T, R) array of zeta_r/(1-zeta_r^2) 1' Psi_r^{-1} y_{r,t}."""
        out = np.empty((data.n_times, self.n_regions))
        for r in range(self.n_regions):
            z = self.params.zetas[r]
            out[:, r] = (z / (1.0 - z * z)) * (data.region_block(r) @ self.psi_inv_ones[r])
        return out


@dataclass
class GauMoments:
    """Posterior expectations of the large-scale effect per (t, r)."""

    x: np.ndarray
    x_sq: np.ndarray
    outer: np.ndarray

    @property
    def n_times(self) -> int:
        return self.x.shape[0]


def gau_simulate(params: GauParams, layout: SpatialLayout, n_times: int, seed) -> Dataset:
    """Simulate the Gaussian baseline; reproducible given the seed."""
    if n_times < 0:
        raise ValueError("n_times must be >= 0")
    terms = GauTerms(params, layout)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x0 = rng.standard_normal((n_times, terms.n_regions)) @ terms.sigma.chol.T
    y = np.empty((n_times, layout.n_sites))
    for r, sl in enumerate(layout.region_slices):
        z = params.zetas[r]
        fine = rng.standard_normal((n_times, sl.stop - sl.start)) @ terms.psi[r].chol.T
        y[:, sl] = z * x0[:, r, None] + math.sqrt(1.0 - z * z) * fine
    return Dataset(y=y, layout=layout)


def gau_estep_exact(data: Dataset, params: GauParams | GauTerms) -> GauMoments:
    """Closed-form conditional moments of X0 given the data."""
    terms = params if isinstance(params, GauTerms) else GauTerms(params, data.layout)
    prec = terms.lam + np.diag(terms.data_precision)
    v = SpdMatrix(prec).inverse()
    m = terms.data_linear(data) @ v.T
    return GauMoments(
        x=m,
        x_sq=m * m + np.diag(v)[None, :],
        outer=v[None, :, :] + m[:, :, None] * m[:, None, :],
    )


def gau_estep_gibbs(
    data: Dataset,
    params: GauParams | GauTerms,
    n_sweeps: int,
    seed,
    burn_in: float = 0.2,
) -> GauMoments:
    """Gibbs validation mode: systematic scan over the exact full conditionals."""
    terms = params if isinstance(params, GauTerms) else GauTerms(params, data.layout)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n_times, n_reg = data.n_times, terms.n_regions
    b = terms.data_linear(data)
    den = terms.data_precision + np.diag(terms.lam)
    sd = 1.0 / np.sqrt(den)
    x0 = rng.standard_normal((n_times, n_reg)) @ terms.sigma.chol.T
    n_burn = int(burn_in * n_sweeps)
    acc_x = np.zeros((n_times, n_reg))
    acc_xsq = np.zeros((n_times, n_reg))
    acc_outer = np.zeros((n_times, n_reg, n_reg))
    for m in range(n_sweeps):
        for r in range(n_reg):
            cross = x0 @ terms.lam[r] - x0[:, r] * terms.lam[r, r]
            mu = (b[:, r] - cross) / den[r]
            x0[:, r] = mu + sd[r] * rng.standard_normal(n_times)
        if m < n_burn:
            continue
        acc_x += x0
        acc_xsq += x0 * x0
        acc_outer += x0[:, :, None] * x0[:, None, :]
    inv = 1.0 / (n_sweeps - n_burn)
    return GauMoments(x=acc_x * inv, x_sq=acc_xsq * inv, outer=acc_outer * inv)


@dataclass
class GauFitConfig:
    """EM settings for the baseline fit."""

    max_iter: int = 200
    aitken_tol: float = 1e-3
    psi_mode: str = "matern"
    sigma_mode: str = "free"
    estep: str = "exact"
    n_sweeps: int = 500
    burn_in: float = 0.2
    seed: int = 0
    phi_bounds: tuple[float, float] = (1.0, 20000.0)
    search_tol: float = 1e-6

    def __post_init__(self) -> None:
        if self.estep not in ("exact", "gibbs"):
            raise ValueError(f"unknown estep mode {self.estep!r}")
        if self.psi_mode not in ("matern", "free"):
            raise ValueError(f"unknown psi_mode {self.psi_mode!r}")
        if self.sigma_mode not in ("matern", "free"):
            raise ValueError(f"unknown sigma_mode {self.sigma_mode!r}")


def _region_b(s_yy: np.ndarray, s_xy: np.ndarray, s_xx: float, zeta: float) -> np.ndarray:
    ones = np.ones(s_yy.shape[0])
    return (
        s_yy
        - zeta * (np.outer(ones, s_xy) + np.outer(s_xy, ones))
        + zeta * zeta * s_xx * np.outer(ones, ones)
    )


def gau_mstep(
    moments: GauMoments,
    data: Dataset,
    params: GauParams,
    cfg: GauFitConfig,
) -> GauParams:
    """Baseline coordinate M-step: fine-scale correlation, zeta, then Sigma."""
    from .mcem import _maximize_matern_range, golden_section_max

    layout = data.layout
    n_times = moments.n_times
    zetas_new = np.empty(params.n_regions)
    psis_new: list[MaternSpec | np.ndarray] = []
    for r in range(params.n_regions):
        y_r = data.region_block(r)
        d_r = y_r.shape[1]
        s_yy = y_r.T @ y_r
        s_xy = moments.x[:, r] @ y_r
        s_xx = float(moments.x_sq[:, r].sum())
        z_prev = float(params.zetas[r])

        b_prev = _region_b(s_yy, s_xy, s_xx, z_prev)
        if cfg.psi_mode == "matern" and isinstance(params.psis[r], MaternSpec):
            smooth = params.psis[r].smoothness
            dists = layout.within_distances(r)
            phi = _maximize_matern_range(
                b_prev / (1.0 - z_prev**2), n_times, dists, smooth, cfg.phi_bounds
            )
            psi_spec: MaternSpec | np.ndarray = MaternSpec(phi, smooth)
            psi_new = SpdMatrix(matern_correlation(dists, psi_spec))
        else:
            psi_new = SpdMatrix(b_prev / (n_times * (1.0 - z_prev**2)))
            psi_spec = psi_new.values
        psis_new.append(psi_spec)

        p_inv = psi_new.inverse()
        c0 = float(np.sum(p_inv * s_yy))
        w = p_inv @ np.ones(d_r)
        c1 = float(s_xy @ w)
        c2 = s_xx * float(w.sum())

        def f_zeta(z: float) -> float:
            return -0.5 * n_times * d_r * math.log(1.0 - z * z) - (
                c0 - 2.0 * z * c1 + z * z * c2
            ) / (2.0 * (1.0 - z * z))

        zetas_new[r] = golden_section_max(
            f_zeta, -1.0 + _ZETA_EDGE, 1.0 - _ZETA_EDGE, tol=cfg.search_tol
        )

    s_outer = moments.outer.sum(axis=0)
    if cfg.sigma_mode == "matern" and isinstance(params.sigma, MaternSpec):
        phi = _maximize_matern_range(
            s_outer, n_times, layout.centroid_distances(),
            params.sigma.smoothness, cfg.phi_bounds,
        )
        sigma_new: MaternSpec | np.ndarray = MaternSpec(phi, params.sigma.smoothness)
    else:
        sig = s_outer / n_times
        scale = np.sqrt(np.diag(sig))
        sig = sig / np.outer(scale, scale)
        np.fill_diagonal(sig, 1.0)
        sigma_new = sig
    return GauParams(zetas=zetas_new, psis=psis_new, sigma=sigma_new)


def gau_marginal_covariance(params: GauParams, layout: SpatialLayout) -> np.ndarray:
    """Implied covariance of one observation vector:
    blockdiag((1 - zeta_r^2) Psi_r) plus the zeta-loaded Sigma cross term."""
    terms = GauTerms(params, layout)
    d = layout.n_sites
    cov = np.zeros((d, d))
    g = np.zeros((d, terms.n_regions))
    for r, sl in enumerate(layout.region_slices):
        z = params.zetas[r]
        cov[sl, sl] = (1.0 - z * z) * terms.psi[r].values
        g[sl, r] = z
    cov += g @ terms.sigma.values @ g.T
    return cov


def gau_loglik(data: Dataset, params: GauParams) -> float:
    """Exact Gaussian log-likelihood of the data."""
    cov = SpdMatrix(gau_marginal_covariance(params, data.layout))
    quad = cov.quad_form(data.y.T)
    quad_total = float(quad) if np.ndim(quad) == 0 else float(quad.sum())
    return -0.5 * data.n_times * (data.layout.n_sites * _LOG_2PI + cov.log_det) - 0.5 * quad_total


def gau_q_function(moments: GauMoments, data: Dataset, params: GauParams) -> float:
    """Expected complete-data log-likelihood at ``params`` given the moments."""
    terms = GauTerms(params, data.layout)
    n_times = moments.n_times
    total = 0.0
    for r in range(params.n_regions):
        y_r = data.region_block(r)
        d_r = y_r.shape[1]
        z = float(params.zetas[r])
        b = _region_b(y_r.T @ y_r, moments.x[:, r] @ y_r, float(moments.x_sq[:, r].sum()), z)
        total += (
            -0.5 * n_times * d_r * math.log(1.0 - z * z)
            - 0.5 * n_times * terms.psi[r].log_det
            - float(np.sum(terms.psi[r].inverse() * b)) / (2.0 * (1.0 - z * z))
        )
    s_outer = moments.outer.sum(axis=0)
    total += -0.5 * n_times * terms.sigma.log_det - 0.5 * float(
        np.trace(terms.sigma.solve(s_outer))
    )
    return total


def gau_default_init(data: Dataset, cfg: GauFitConfig | None = None) -> GauParams:
    cfg = cfg or GauFitConfig()
    layout = data.layout
    psis: list[MaternSpec | np.ndarray] = []
    for r in range(layout.n_regions):
        d_r = int(layout.region_sizes[r])
        if cfg.psi_mode == "matern":
            dists = layout.within_distances(r)
            if d_r > 1:
                iu = np.triu_indices(d_r, k=1)
                psis.append(MaternSpec(max(0.5 * float(np.median(dists[iu])), 1.0), 1.5))
            else:
                psis.append(MaternSpec(100.0, 1.5))
        else:
            psis.append(np.eye(d_r))
    n_reg = layout.n_regions
    if cfg.sigma_mode == "matern" and n_reg > 1:
        cd = layout.centroid_distances()
        iu = np.triu_indices(n_reg, k=1)
        sigma0: MaternSpec | np.ndarray = MaternSpec(max(float(np.median(cd[iu])), 1.0), 1.5)
    else:
        sigma0 = np.full((n_reg, n_reg), 0.5)
        np.fill_diagonal(sigma0, 1.0)
    return GauParams(zetas=np.full(n_reg, 0.3), psis=psis, sigma=sigma0)


def gau_fit(
    data: Dataset,
    init: GauParams | None = None,
    cfg: GauFitConfig | None = None,
) -> FitReport:
    """EM fit of the baseline; the exact E-step makes the run deterministic."""
    cfg = cfg or GauFitConfig()
    if data.n_times == 0:
        raise ValueError("cannot fit an empty dataset")
    params = init if init is not None else gau_default_init(data, cfg)

    logliks: list[float] = []
    trace: list[EmIteration] = []
    status = STATUS_MAX_ITERATIONS
    for k in range(cfg.max_iter):
        if cfg.estep == "exact":
            moments = gau_estep_exact(data, params)
        else:
            moments = gau_estep_gibbs(
                data,
                params,
                cfg.n_sweeps,
                np.random.SeedSequence([cfg.seed, 11, k]),
                cfg.burn_in,
            )
        params = gau_mstep(moments, data, params, cfg)
        ll = gau_loglik(data, params)
        logliks.append(ll)
        proj = aitken_limit(logliks)
        trace.append(
            EmIteration(
                index=k,
                n_sweeps=0 if cfg.estep == "exact" else cfg.n_sweeps,
                loglik=ll,
                loglik_stderr=0.0,
                q_value=gau_q_function(moments, data, params),
                acceptance=[],
                aitken=proj,
                params=params.to_dict(),
            )
        )
        if proj is not None and abs(proj - ll) < cfg.aitken_tol:
            status = STATUS_CONVERGED
            break

    n_params = params.n_free_parameters()
    n_obs = data.n_times * data.layout.n_sites
    bic, aic = information_criteria(logliks[-1], n_params, n_obs)
    return FitReport(
        model="GAU",
        status=status,
        params=params.to_dict(),
        loglik=logliks[-1],
        loglik_stderr=0.0,
        n_params=n_params,
        n_obs=n_obs,
        bic=bic,
        aic=aic,
        seed=cfg.seed,
        config=asdict(cfg),
        trace=trace,
    )
