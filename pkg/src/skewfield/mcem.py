"""Monte Carlo EM for the multi-resolution skew-t model.

The E-step runs a Metropolis-Hastings-within-Gibbs sampler over the latents
(Z, eta0, eta1) independently for every time point; all time points are
updated together as array rows, so a single seeded stream reproduces results
exactly regardless of scheduling. The M-step applies the coordinate updates
for nu (digamma root), the fine-scale correlation (Matern range or free),
the loading vectors zeta and delta (bounded 1-D searches), and the
cross-region correlation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import digamma, gammaln, log_ndtr, ndtri_exp
from scipy.stats import skew as sample_skew

from .model import Dataset, RegionParams, SktParams, SktTerms
from .report import (
    STATUS_ABORTED,
    STATUS_CONVERGED,
    STATUS_MAX_ITERATIONS,
    EmIteration,
    FitReport,
    aitken_limit,
    persistent_decrease,
)
from .selection import information_criteria, skt_marginal_loglik
from .skewdist import delta_from_sample_skewness
from .spatial import MaternSpec, SpdMatrix, matern_correlation

logger = logging.getLogger(__name__)

__all__ = [
    "EmConfig",
    "EStepMoments",
    "GibbsConfig",
    "GibbsState",
    "default_init",
    "draw_eta0",
    "draw_eta1",
    "fit",
    "gibbs_estep",
    "gibbs_sweep",
    "golden_section_max",
    "init_gibbs_state",
    "mh_step_z",
    "mstep",
    "q_function",
    "sample_truncated_normal_nonneg",
]

_ZETA_EDGE = 1e-6


def sample_truncated_normal_nonneg(mu, sigma, rng: np.random.Generator) -> np.ndarray:
    """Draw from N(mu, sigma^2) conditioned on the non-negative half line.

    Inverse-CDF in the upper tail via log-space survival values, so deep
    truncation (mu far below zero) stays finite and accurate.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    a = -mu / sigma
    p = rng.random(np.broadcast_shapes(mu.shape, sigma.shape))
    log_tail = np.log1p(-p) + log_ndtr(-a)
    x = -ndtri_exp(log_tail)
    return np.maximum(mu + sigma * x, 0.0)


@dataclass
class GibbsConfig:
    """Chain-length schedule and seed for the E-step sampler."""

    m0: int = 100
    growth: float = 1.1
    m_max: int = 2000
    burn_in: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.m0 < 50:
            raise ValueError("m0 must be at least 50")
        if not 1.0 <= self.growth <= 1.5:
            raise ValueError("growth must lie in [1.0, 1.5]")
        if not 0.0 <= self.burn_in < 0.5:
            raise ValueError("burn_in fraction must lie in [0, 0.5)")
        if self.m_max < self.m0:
            raise ValueError("m_max must be >= m0")


@dataclass
class EmConfig:
    """EM loop settings: iteration budget, stopping rule, and M-step modes."""

    max_iter: int = 200
    aitken_tol: float = 1e-3
    n_lik_draws: int = 2000
    psi_mode: str = "matern"
    sigma_mode: str = "free"
    zeta_tied: bool = True
    decrease_patience: int = 5
    phi_bounds: tuple[float, float] = (1.0, 20000.0)
    coord_passes: int = 2
    search_tol: float = 1e-6

    def __post_init__(self) -> None:
        if self.psi_mode not in ("matern", "free"):
            raise ValueError(f"unknown psi_mode {self.psi_mode!r}")
        if self.sigma_mode not in ("matern", "free"):
            raise ValueError(f"unknown sigma_mode {self.sigma_mode!r}")


@dataclass
class GibbsState:
    """Sampler state for all time points: arrays are (T, R)."""

    y_regions: list[np.ndarray]
    z: np.ndarray
    eta0: np.ndarray
    eta1: np.ndarray
    accepted: np.ndarray
    proposed: np.ndarray


def init_gibbs_state(data: Dataset, terms: SktTerms, rng: np.random.Generator) -> GibbsState:
    """Initialize the chains from the latent prior."""
    n_times, n_reg = data.n_times, terms.n_regions
    z = np.empty((n_times, n_reg))
    for r in range(n_reg):
        z[:, r] = rng.gamma(0.5 * terms.nu[r], 2.0 / terms.nu[r], size=n_times)
    x0 = rng.standard_normal((n_times, n_reg)) @ terms.sigma.chol.T
    u0 = np.abs(rng.standard_normal((n_times, n_reg)))
    sq = np.sqrt(z)
    return GibbsState(
        y_regions=[data.region_block(r) for r in range(n_reg)],
        z=z,
        eta0=x0 / sq,
        eta1=u0 / sq,
        accepted=np.zeros(n_reg, dtype=np.int64),
        proposed=np.zeros(n_reg, dtype=np.int64),
    )


def _log_mh_weight(state: GibbsState, r: int, terms: SktTerms, z_val: np.ndarray) -> np.ndarray:
    """Log target/candidate ratio for the Z move; the Gamma candidate cancels
    the data quadratic and nu terms exactly, leaving the eta contributions."""
    lam = terms.lam
    e0r = state.eta0[:, r]
    cross = (state.eta0 * np.sqrt(state.z)) @ lam[r] - e0r * np.sqrt(state.z[:, r]) * lam[r, r]
    return -0.5 * z_val * state.eta1[:, r] ** 2 - 0.5 * (
        z_val * e0r**2 * lam[r, r] + 2.0 * np.sqrt(z_val) * e0r * cross
    )


def mh_step_z(state: GibbsState, r: int, terms: SktTerms, rng: np.random.Generator) -> None:
    """Independence Metropolis-Hastings update of Z at region r (all t at once).

    The candidate is Gamma((nu + d_r)/2 + 1, (x' Ups^{-1} x + nu)/2) with x
    built from the current eta values, matching the target's Z power and data
    term so the acceptance ratio only involves the eta couplings.
    """
    y = state.y_regions[r]
    nu_r = terms.nu[r]
    d_r = y.shape[1]
    x = (
        y
        - state.eta0[:, r, None] * terms.zeta[r][None, :]
        - state.eta1[:, r, None] * terms.mdelta[r][None, :]
    )
    quad = np.einsum("ti,ij,tj->t", x, terms.ups_inv[r], x)
    shape = 0.5 * (nu_r + d_r) + 1.0
    rate = 0.5 * (quad + nu_r)
    cand = rng.gamma(shape, 1.0 / rate)
    log_ratio = _log_mh_weight(state, r, terms, cand) - _log_mh_weight(
        state, r, terms, state.z[:, r]
    )
    accept = np.log(rng.random(y.shape[0])) < log_ratio
    state.z[:, r] = np.where(accept, cand, state.z[:, r])
    state.accepted[r] += int(accept.sum())
    state.proposed[r] += y.shape[0]


def draw_eta0(state: GibbsState, r: int, terms: SktTerms, rng: np.random.Generator) -> None:
    """Exact Gaussian full-conditional draw of eta0 at region r."""
    y = state.y_regions[r]
    c = y - state.eta1[:, r, None] * terms.mdelta[r][None, :]
    lin = c @ terms.a_zeta[r]
    sq = np.sqrt(state.z)
    cross = (state.eta0 * sq) @ terms.lam[r] - state.eta0[:, r] * sq[:, r] * terms.lam[r, r]
    den = terms.q_zeta[r] + terms.lam[r, r]
    mu = (lin - cross / sq[:, r]) / den
    var = 1.0 / (state.z[:, r] * den)
    if np.any(var <= 0):
        raise RuntimeError("non-positive eta0 conditional variance")
    state.eta0[:, r] = mu + np.sqrt(var) * rng.standard_normal(y.shape[0])


def draw_eta1(state: GibbsState, r: int, terms: SktTerms, rng: np.random.Generator) -> None:
    """Positive-truncated Gaussian full-conditional draw of eta1 at region r."""
    y = state.y_regions[r]
    c = y - state.eta0[:, r, None] * terms.zeta[r][None, :]
    den = 1.0 + terms.q_delta[r]
    mu = (c @ terms.b_delta[r]) / den
    sd = 1.0 / np.sqrt(state.z[:, r] * den)
    state.eta1[:, r] = sample_truncated_normal_nonneg(mu, sd, rng)


def gibbs_sweep(state: GibbsState, terms: SktTerms, rng: np.random.Generator) -> None:
    """One systematic sweep: Z for every region, then eta0, then eta1."""
    for r in range(terms.n_regions):
        mh_step_z(state, r, terms, rng)
    for r in range(terms.n_regions):
        draw_eta0(state, r, terms, rng)
    for r in range(terms.n_regions):
        draw_eta1(state, r, terms, rng)


@dataclass
class EStepMoments:
    """Posterior expectations from the Gibbs sampler, per (region, time).

    ``eta0_scaled_outer`` holds the per-t matrices <(eta0 * sqrt(Z))(eta0 *
    sqrt(Z))'>; the s_* attributes are the data-weighted sums feeding the
    regional B matrices.
    """

    z: np.ndarray
    log_z: np.ndarray
    z_eta0: np.ndarray
    z_eta1: np.ndarray
    z_eta0_sq: np.ndarray
    z_eta1_sq: np.ndarray
    z_eta0_eta1: np.ndarray
    eta0_scaled_outer: np.ndarray
    acceptance: np.ndarray
    s_yy: list[np.ndarray]
    s_0y: list[np.ndarray]
    s_1y: list[np.ndarray]
    n_sweeps: int
    sum_z: np.ndarray = field(init=False)
    sum_log_z: np.ndarray = field(init=False)
    sum_z_eta0_sq: np.ndarray = field(init=False)
    sum_z_eta1_sq: np.ndarray = field(init=False)
    sum_z_eta0_eta1: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        if np.any(self.z <= 0):
            raise ValueError("<Z> must be positive")
        if np.any(self.z_eta0_sq < 0) or np.any(self.z_eta1_sq < 0):
            raise ValueError("second-moment expectations must be non-negative")
        self.sum_z = self.z.sum(axis=0)
        self.sum_log_z = self.log_z.sum(axis=0)
        self.sum_z_eta0_sq = self.z_eta0_sq.sum(axis=0)
        self.sum_z_eta1_sq = self.z_eta1_sq.sum(axis=0)
        self.sum_z_eta0_eta1 = self.z_eta0_eta1.sum(axis=0)

    @property
    def n_times(self) -> int:
        return self.z.shape[0]

    def region_b(self, r: int, zeta: np.ndarray, delta: np.ndarray) -> np.ndarray:
        """B_r assembled at the given loadings from the stored expectations."""
        md = np.sqrt(1.0 - zeta**2) * delta
        b = (
            self.s_yy[r]
            - np.outer(zeta, self.s_0y[r])
            - np.outer(self.s_0y[r], zeta)
            - np.outer(md, self.s_1y[r])
            - np.outer(self.s_1y[r], md)
            + self.sum_z_eta0_sq[r] * np.outer(zeta, zeta)
            + self.sum_z_eta0_eta1[r] * (np.outer(md, zeta) + np.outer(zeta, md))
            + self.sum_z_eta1_sq[r] * np.outer(md, md)
        )
        return 0.5 * (b + b.T)


def _check_finite_state(state: GibbsState, sweep: int) -> None:
    for name, arr in (("z", state.z), ("eta0", state.eta0), ("eta1", state.eta1)):
        if not np.all(np.isfinite(arr)):
            t, r = np.argwhere(~np.isfinite(arr))[0]
            raise RuntimeError(
                f"non-finite {name} at region {int(r)}, t {int(t)}, sweep {sweep}"
            )


def gibbs_estep(
    data: Dataset,
    params: SktParams | SktTerms,
    n_sweeps: int,
    seed,
    burn_in: float = 0.2,
) -> EStepMoments:
    """Run the Gibbs sampler and average the moments needed by the M-step.

    Every time point is an independent chain; the state arrays carry all of
    them and each sweep updates them in a fixed order, so the result is a
    deterministic function of (data, params, n_sweeps, seed, burn_in).
    """
    terms = params if isinstance(params, SktTerms) else SktTerms(params, data.layout)
    if n_sweeps < 2:
        raise ValueError("n_sweeps must be at least 2")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    state = init_gibbs_state(data, terms, rng)
    n_times, n_reg = data.n_times, terms.n_regions
    n_burn = int(burn_in * n_sweeps)
    n_keep = n_sweeps - n_burn

    acc_z = np.zeros((n_times, n_reg))
    acc_logz = np.zeros((n_times, n_reg))
    acc_ze0 = np.zeros((n_times, n_reg))
    acc_ze1 = np.zeros((n_times, n_reg))
    acc_ze0sq = np.zeros((n_times, n_reg))
    acc_ze1sq = np.zeros((n_times, n_reg))
    acc_ze0e1 = np.zeros((n_times, n_reg))
    acc_outer = np.zeros((n_times, n_reg, n_reg))

    for m in range(n_sweeps):
        gibbs_sweep(state, terms, rng)
        _check_finite_state(state, m)
        if m < n_burn:
            continue
        z, e0, e1 = state.z, state.eta0, state.eta1
        acc_z += z
        acc_logz += np.log(z)
        acc_ze0 += z * e0
        acc_ze1 += z * e1
        acc_ze0sq += z * e0 * e0
        acc_ze1sq += z * e1 * e1
        acc_ze0e1 += z * e0 * e1
        v = e0 * np.sqrt(z)
        acc_outer += v[:, :, None] * v[:, None, :]

    inv = 1.0 / n_keep
    z_mean = acc_z * inv
    z_eta0 = acc_ze0 * inv
    z_eta1 = acc_ze1 * inv
    s_yy, s_0y, s_1y = [], [], []
    for r in range(n_reg):
        y_r = state.y_regions[r]
        s_yy.append(np.einsum("t,ti,tj->ij", z_mean[:, r], y_r, y_r))
        s_0y.append(z_eta0[:, r] @ y_r)
        s_1y.append(z_eta1[:, r] @ y_r)
    return EStepMoments(
        z=z_mean,
        log_z=acc_logz * inv,
        z_eta0=z_eta0,
        z_eta1=z_eta1,
        z_eta0_sq=acc_ze0sq * inv,
        z_eta1_sq=acc_ze1sq * inv,
        z_eta0_eta1=acc_ze0e1 * inv,
        eta0_scaled_outer=acc_outer * inv,
        acceptance=state.accepted / np.maximum(state.proposed, 1),
        s_yy=s_yy,
        s_0y=s_0y,
        s_1y=s_1y,
        n_sweeps=n_sweeps,
    )


def golden_section_max(f, lo: float, hi: float, tol: float = 1e-7, max_iter: int = 200) -> float:
    """Golden-section search for the maximum of a unimodal function on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    invphi2 = 1.0 - invphi
    a, b = float(lo), float(hi)
    h = b - a
    c = a + invphi2 * h
    d = a + invphi * h
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if h <= tol:
            break
        if fc > fd:
            b, d, fd = d, c, fc
            h = b - a
            c = a + invphi2 * h
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            h = b - a
            d = a + invphi * h
            fd = f(d)
    return 0.5 * (a + b)


def _solve_nu(c: float, lo: float = 0.2, hi: float = 500.0) -> tuple[float, bool]:
    """Root of log(nu/2) + 1 - digamma(nu/2) + c = 0; clamps at the bracket."""

    def h(v: float) -> float:
        return math.log(0.5 * v) + 1.0 - digamma(0.5 * v) + c

    if h(hi) >= 0.0:
        return hi, True
    if h(lo) <= 0.0:
        return lo, True
    return float(brentq(h, lo, hi, xtol=1e-10, rtol=8.9e-16)), False


def _maximize_matern_range(
    a_mat: np.ndarray,
    n_times: int,
    dists: np.ndarray,
    smoothness: float,
    bounds: tuple[float, float],
) -> float:
    """Argmax over the Matern range of -T/2 log|C(phi)| - tr(C(phi)^{-1} A)/2,
    searched on the log scale by golden section."""

    def obj(log_phi: float) -> float:
        spec = MaternSpec(math.exp(log_phi), smoothness)
        try:
            s = SpdMatrix(matern_correlation(dists, spec), jitter=False)
        except np.linalg.LinAlgError:
            return -np.inf
        return -0.5 * n_times * s.log_det - 0.5 * float(np.trace(s.solve(a_mat)))

    log_star = golden_section_max(obj, math.log(bounds[0]), math.log(bounds[1]), tol=1e-9)
    return math.exp(log_star)


def _loading_objective(
    moments: EStepMoments,
    r: int,
    psi_inv: np.ndarray,
    n_times: int,
    zeta: np.ndarray,
    delta: np.ndarray,
) -> float:
    """Q terms owned by (zeta_r, delta_r): the Jacobian logs plus the
    data-weighted trace through B_r."""
    dz2 = 1.0 - zeta**2
    dd2 = 1.0 - delta**2
    b = moments.region_b(r, zeta, delta)
    dzd = np.sqrt(dz2 * dd2)
    a = b / np.outer(dzd, dzd)
    return -0.5 * n_times * float(np.log(dz2).sum() + np.log(dd2).sum()) - 0.5 * float(
        np.sum(psi_inv * a)
    )


def _coordinate_search(f_vec, x0: np.ndarray, passes: int, tol: float) -> np.ndarray:
    """Cyclic bounded 1-D maximization of f_vec over each coordinate of x0."""
    x = x0.copy()
    lo, hi = -1.0 + _ZETA_EDGE, 1.0 - _ZETA_EDGE
    for _ in range(passes):
        for s in range(x.size):
            def f_s(v: float, s=s) -> float:
                trial = x.copy()
                trial[s] = v
                return f_vec(trial)

            x[s] = golden_section_max(f_s, lo, hi, tol=tol)
    return x


def mstep(
    moments: EStepMoments,
    params: SktParams,
    layout,
    em: EmConfig,
) -> tuple[SktParams, list[str]]:
    """Coordinate M-step: nu, fine-scale correlation, zeta, delta per region,
    then the cross-region correlation. Uses the freshest values within the
    update sequence."""
    flags: list[str] = []
    n_times = moments.n_times
    new_regions: list[RegionParams] = []
    for r, reg in enumerate(params.regions):
        c = float(moments.sum_log_z[r] - moments.sum_z[r]) / n_times
        nu_new, clamped = _solve_nu(c)
        if clamped:
            flags.append(f"region {r}: nu clamped at {nu_new}")

        b_hat = moments.region_b(r, reg.zeta, reg.delta)
        dzd = np.sqrt((1.0 - reg.zeta**2) * (1.0 - reg.delta**2))
        a_hat = b_hat / np.outer(dzd, dzd)
        if em.psi_mode == "matern" and isinstance(reg.psi, MaternSpec):
            dists = layout.within_distances(r)
            phi = _maximize_matern_range(
                a_hat, n_times, dists, reg.psi.smoothness, em.phi_bounds
            )
            psi_spec: MaternSpec | np.ndarray = MaternSpec(phi, reg.psi.smoothness)
            psi_new = SpdMatrix(matern_correlation(dists, psi_spec))
        else:
            psi_new = SpdMatrix(a_hat / n_times)
            psi_spec = psi_new.values
        psi_inv = psi_new.inverse()

        def f_zeta(zeta_vec: np.ndarray, r=r, psi_inv=psi_inv, delta=reg.delta) -> float:
            return _loading_objective(moments, r, psi_inv, n_times, zeta_vec, delta)

        if reg.zeta_tied:
            d_r = reg.dim
            z_star = golden_section_max(
                lambda v: f_zeta(np.full(d_r, v)),
                -1.0 + _ZETA_EDGE,
                1.0 - _ZETA_EDGE,
                tol=em.search_tol,
            )
            zeta_new = np.full(d_r, z_star)
        else:
            zeta_new = _coordinate_search(f_zeta, reg.zeta, em.coord_passes, em.search_tol)

        def f_delta(delta_vec: np.ndarray, r=r, psi_inv=psi_inv, zeta=zeta_new) -> float:
            return _loading_objective(moments, r, psi_inv, n_times, zeta, delta_vec)

        delta_new = _coordinate_search(f_delta, reg.delta, em.coord_passes, em.search_tol)
        new_regions.append(
            RegionParams(
                delta=delta_new,
                zeta=zeta_new,
                nu=nu_new,
                psi=psi_spec,
                zeta_tied=reg.zeta_tied,
            )
        )

    s_eta = moments.eta0_scaled_outer.sum(axis=0)
    if em.sigma_mode == "matern" and isinstance(params.sigma, MaternSpec):
        cdist = layout.centroid_distances()
        phi = _maximize_matern_range(
            s_eta, n_times, cdist, params.sigma.smoothness, em.phi_bounds
        )
        sigma_new: MaternSpec | np.ndarray = MaternSpec(phi, params.sigma.smoothness)
    else:
        sig = s_eta / n_times
        scale = np.sqrt(np.diag(sig))
        sig = sig / np.outer(scale, scale)
        np.fill_diagonal(sig, 1.0)
        sigma_new = sig
    return SktParams(regions=new_regions, sigma=sigma_new), flags


def q_function(moments: EStepMoments, params: SktParams, layout) -> float:
    """Expected complete-data log-likelihood at ``params`` under the moments."""
    terms = SktTerms(params, layout)
    n_times = moments.n_times
    total = 0.0
    for r in range(terms.n_regions):
        nu_r = terms.nu[r]
        d_r = terms.zeta[r].size
        b = moments.region_b(r, terms.zeta[r], terms.delta[r])
        a = b / np.outer(terms.dzd[r], terms.dzd[r])
        total += (
            n_times * (0.5 * nu_r * math.log(0.5 * nu_r) - gammaln(0.5 * nu_r))
            - 0.5 * n_times * float(
                np.log(1.0 - terms.zeta[r] ** 2).sum()
                + np.log(1.0 - terms.delta[r] ** 2).sum()
            )
            - 0.5 * n_times * terms.psi[r].log_det
            + 0.5 * (nu_r + d_r) * float(moments.sum_log_z[r])
            - 0.5 * float(moments.sum_z_eta1_sq[r])
            - 0.5 * nu_r * float(moments.sum_z[r])
            - 0.5 * float(np.sum(terms.psi[r].inverse() * a))
        )
    s_eta = moments.eta0_scaled_outer.sum(axis=0)
    total += -0.5 * n_times * terms.sigma.log_det - 0.5 * float(
        np.trace(terms.sigma.solve(s_eta))
    )
    return total


def default_init(data: Dataset, em: EmConfig | None = None) -> SktParams:
    """Moment-based starting point: per-site delta from marginal skewness,
    zeta = 0.1, nu = 5, Matern ranges from distance medians, 0.5 cross-region
    correlation."""
    em = em or EmConfig()
    layout = data.layout
    regions = []
    for r in range(layout.n_regions):
        y_r = data.region_block(r)
        d_r = y_r.shape[1]
        if data.n_times >= 3:
            delta0 = np.clip(delta_from_sample_skewness(sample_skew(y_r, axis=0)), -0.98, 0.98)
        else:
            delta0 = np.zeros(d_r)
        if em.psi_mode == "matern":
            dists = layout.within_distances(r)
            if d_r > 1:
                iu = np.triu_indices(d_r, k=1)
                phi0 = max(0.5 * float(np.median(dists[iu])), 1.0)
            else:
                phi0 = 100.0
            psi0: MaternSpec | np.ndarray = MaternSpec(phi0, 1.5)
        else:
            psi0 = np.eye(d_r)
        regions.append(
            RegionParams(
                delta=np.atleast_1d(delta0),
                zeta=np.full(d_r, 0.1),
                nu=5.0,
                psi=psi0,
                zeta_tied=em.zeta_tied,
            )
        )
    n_reg = layout.n_regions
    if em.sigma_mode == "matern" and n_reg > 1:
        cd = layout.centroid_distances()
        iu = np.triu_indices(n_reg, k=1)
        sigma0: MaternSpec | np.ndarray = MaternSpec(max(float(np.median(cd[iu])), 1.0), 1.5)
    else:
        sigma0 = np.full((n_reg, n_reg), 0.5)
        np.fill_diagonal(sigma0, 1.0)
    return SktParams(regions=regions, sigma=sigma0)


def fit(
    data: Dataset,
    init: SktParams | None = None,
    gibbs: GibbsConfig | None = None,
    em: EmConfig | None = None,
) -> FitReport:
    """Monte Carlo EM fit with a growing chain length and Aitken stopping.

    The chain length at iteration k is min(m_max, ceil(m0 growth^k)). The
    observed-data log-likelihood is re-estimated after every M-step and the
    loop stops when the Aitken-projected limit is within ``aitken_tol``, on
    persistent likelihood decrease beyond Monte Carlo error, or at
    ``max_iter``.
    """
    gibbs = gibbs or GibbsConfig()
    em = em or EmConfig()
    if data.n_times == 0:
        raise ValueError("cannot fit an empty dataset")
    params = init if init is not None else default_init(data, em)
    params.validate_for(data.layout)

    logliks: list[float] = []
    stderrs: list[float] = []
    trace: list[EmIteration] = []
    status = STATUS_MAX_ITERATIONS
    abort_reason = None
    for k in range(em.max_iter):
        m_k = min(gibbs.m_max, math.ceil(gibbs.m0 * gibbs.growth**k))
        moments = gibbs_estep(
            data,
            params,
            m_k,
            np.random.SeedSequence([gibbs.seed, 11, k]),
            gibbs.burn_in,
        )
        params, flags = mstep(moments, params, data.layout, em)
        lik = skt_marginal_loglik(
            data, params, em.n_lik_draws, np.random.default_rng(
                np.random.SeedSequence([gibbs.seed, 13, k])
            )
        )
        logliks.append(lik.value)
        stderrs.append(lik.stderr)
        proj = aitken_limit(logliks)
        trace.append(
            EmIteration(
                index=k,
                n_sweeps=m_k,
                loglik=lik.value,
                loglik_stderr=lik.stderr,
                q_value=q_function(moments, params, data.layout),
                acceptance=[float(a) for a in moments.acceptance],
                aitken=proj,
                params=params.to_dict(),
                flags=flags,
            )
        )
        if proj is not None and abs(proj - lik.value) < em.aitken_tol:
            status = STATUS_CONVERGED
            break
        if persistent_decrease(logliks, stderrs, em.decrease_patience):
            status = STATUS_ABORTED
            abort_reason = (
                f"estimated log-likelihood decreased beyond Monte Carlo error for "
                f"{em.decrease_patience} consecutive iterations"
            )
            logger.warning("aborting EM: %s", abort_reason)
            break

    n_params = params.n_free_parameters()
    n_obs = data.n_times * data.layout.n_sites
    bic, aic = information_criteria(logliks[-1], n_params, n_obs)
    return FitReport(
        model="SKT",
        status=status,
        params=params.to_dict(),
        loglik=logliks[-1],
        loglik_stderr=stderrs[-1],
        n_params=n_params,
        n_obs=n_obs,
        bic=bic,
        aic=aic,
        seed=gibbs.seed,
        config={"gibbs": asdict(gibbs), "em": asdict(em)},
        trace=trace,
        abort_reason=abort_reason,
    )
