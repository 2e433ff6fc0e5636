"""Multivariate skew-normal and skew-t distributions.

Densities, reproducible samplers, and the closure result for the scaled sum of
a normal and a skew-normal variate, which stays in the skew-t family.

Conventions: a skew-normal with unit-diagonal scale ``omega_bar`` and skewness
``alpha`` has density 2 phi_d(y; omega_bar) Phi(alpha' y). For a general scale
matrix the skewness couples to the standardized vector z = omega^{-1}(y - xi),
where omega is the diagonal of marginal scales.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, log_ndtr
from scipy.stats import t as student_t

from .spatial import SpdMatrix

_LOG2 = math.log(2.0)
_LOG_2PI = math.log(2.0 * math.pi)

__all__ = [
    "ConvolutionInput",
    "SnParams",
    "StParams",
    "convolve_sn_normal",
    "delta_from_sample_skewness",
    "lam",
    "sample_sn",
    "sample_st",
    "sn_log_density",
    "st_log_density",
    "st_marginal",
]


def lam(zeta):
    """lambda(z) = z / sqrt(1 - z^2), elementwise; requires |z| < 1."""
    z = np.asarray(zeta, dtype=float)
    if np.any(np.abs(z) >= 1.0):
        raise ValueError("lam requires |z| < 1")
    out = z / np.sqrt(1.0 - z * z)
    return float(out) if np.ndim(zeta) == 0 else out


def _as_rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


@dataclass
class SnParams:
    """Standardized multivariate skew-normal: unit-diagonal scale and skewness."""

    omega_bar: np.ndarray
    alpha: np.ndarray
    _spd: SpdMatrix = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.omega_bar = np.atleast_2d(np.asarray(self.omega_bar, dtype=float))
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        self._spd = SpdMatrix(self.omega_bar)
        if np.abs(np.diag(self.omega_bar) - 1.0).max() > 1e-12:
            raise ValueError("omega_bar must have unit diagonal")
        if self.alpha.shape != (self._spd.n,):
            raise ValueError(
                f"alpha has shape {self.alpha.shape}, expected ({self._spd.n},)"
            )
        if not np.all(np.isfinite(self.alpha)):
            raise ValueError("alpha must be finite")

    @property
    def dim(self) -> int:
        return self._spd.n

    @property
    def delta(self) -> np.ndarray:
        """Per-component delta = omega_bar alpha / sqrt(1 + alpha' omega_bar alpha)."""
        oa = self.omega_bar @ self.alpha
        return oa / math.sqrt(1.0 + float(self.alpha @ oa))


@dataclass
class StParams:
    """Skew-t parameters: location, full scale matrix, skewness, degrees of freedom."""

    xi: np.ndarray
    omega: np.ndarray
    alpha: np.ndarray
    nu: float
    omega_diag: np.ndarray = field(init=False, repr=False)
    omega_bar: SpdMatrix = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        self.omega = np.atleast_2d(np.asarray(self.omega, dtype=float))
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        self.nu = float(self.nu)
        if self.nu <= 0:
            raise ValueError(f"degrees of freedom must be > 0, got {self.nu}")
        d = self.omega.shape[0]
        if self.xi.shape != (d,) or self.alpha.shape != (d,):
            raise ValueError("xi, omega, alpha dimensions disagree")
        self.omega_diag = np.sqrt(np.diag(self.omega))
        scaled = self.omega / np.outer(self.omega_diag, self.omega_diag)
        self.omega_bar = SpdMatrix(scaled)

    @property
    def dim(self) -> int:
        return self.omega.shape[0]

    @property
    def delta(self) -> np.ndarray:
        oa = self.omega_bar.values @ self.alpha
        return oa / math.sqrt(1.0 + float(self.alpha @ oa))


def sn_log_density(y, p: SnParams):
    """Log-density 2 phi_d(y; omega_bar) Phi(alpha' y); accepts (d,) or (n, d)."""
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    ym = np.atleast_2d(y)
    if ym.shape[1] != p.dim:
        raise ValueError(f"y has dimension {ym.shape[1]}, expected {p.dim}")
    maha = p._spd.quad_form(ym.T)
    log_phi = -0.5 * (p.dim * _LOG_2PI + p._spd.log_det + maha)
    out = _LOG2 + log_phi + log_ndtr(ym @ p.alpha)
    return float(out[0]) if single else out


def st_log_density(y, p: StParams):
    """Skew-t log-density; accepts a single point (d,) or a batch (n, d)."""
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    ym = np.atleast_2d(y)
    if ym.shape[1] != p.dim:
        raise ValueError(f"y has dimension {ym.shape[1]}, expected {p.dim}")
    d, nu = p.dim, p.nu
    z = (ym - p.xi) / p.omega_diag
    q = p.omega_bar.quad_form(z.T)
    log_t = (
        gammaln(0.5 * (nu + d))
        - gammaln(0.5 * nu)
        - 0.5 * d * math.log(nu * math.pi)
        - 0.5 * p.omega_bar.log_det
        - 0.5 * (nu + d) * np.log1p(q / nu)
    )
    arg = (z @ p.alpha) * np.sqrt((nu + d) / (nu + q))
    out = _LOG2 + log_t + student_t.logcdf(arg, df=nu + d) - np.log(p.omega_diag).sum()
    return float(out[0]) if single else out


def sample_sn(p: SnParams, n: int, seed) -> np.ndarray:
    """Draw n skew-normal vectors via delta |U0| + residual normal.

    Reproducible given the seed; the empirical mean converges to
    delta sqrt(2/pi).
    """
    rng = _as_rng(seed)
    delta = p.delta
    resid = p.omega_bar - np.outer(delta, delta)
    chol = SpdMatrix(resid).chol
    u0 = np.abs(rng.standard_normal(n))
    eps = rng.standard_normal((n, p.dim)) @ chol.T
    return u0[:, None] * delta[None, :] + eps


def sample_st(p: StParams, n: int, seed) -> np.ndarray:
    """Draw n skew-t vectors as xi + omega * SN / sqrt(Z), Z ~ chi2_nu / nu."""
    rng = _as_rng(seed)
    z = rng.gamma(0.5 * p.nu, 2.0 / p.nu, size=n)
    sn = sample_sn(SnParams(p.omega_bar.values, p.alpha), n, rng)
    return p.xi + (sn / np.sqrt(z)[:, None]) * p.omega_diag


@dataclass
class ConvolutionInput:
    """Inputs for the scaled normal + skew-normal sum: mixing weights zeta in
    (-1, 1)^d, the skew-normal component's scale and skewness, and the degrees
    of freedom of the shared Gamma(nu/2, nu/2) divisor."""

    zeta: np.ndarray
    omega: np.ndarray
    alpha: np.ndarray
    nu: float

    def __post_init__(self) -> None:
        self.zeta = np.atleast_1d(np.asarray(self.zeta, dtype=float))
        self.omega = np.atleast_2d(np.asarray(self.omega, dtype=float))
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        self.nu = float(self.nu)
        if np.any(np.abs(self.zeta) >= 1.0):
            raise ValueError("zeta entries must lie in (-1, 1)")
        d = self.omega.shape[0]
        if self.zeta.shape != (d,) or self.alpha.shape != (d,):
            raise ValueError("zeta, omega, alpha dimensions disagree")
        if self.nu <= 0:
            raise ValueError("nu must be > 0")


def convolve_sn_normal(inp: ConvolutionInput) -> StParams:
    """Distribution of (zeta X0 + Delta_zeta X) / sqrt(Z) as skew-t parameters.

    X0 is standard normal, X skew-normal with scale ``omega`` and skewness
    ``alpha``, Z ~ Gamma(nu/2, nu/2), all independent. Returns
    scale  Delta (omega + lam lam') Delta  and the matching skewness with the
    degrees of freedom unchanged. For unit-diagonal ``omega`` the result is
    also unit-diagonal.
    """
    dz = np.sqrt(1.0 - inp.zeta**2)
    lv = lam(inp.zeta)
    om = SpdMatrix(inp.omega)
    # Internally the skewness couples to the raw vector; convert from and back
    # to the standardized-coupling convention at the boundaries.
    w_in = np.sqrt(np.diag(inp.omega))
    a_raw = inp.alpha / w_in
    omega_star = dz[:, None] * (inp.omega + np.outer(lv, lv)) * dz[None, :]
    spd_star = SpdMatrix(omega_star)
    num = float(a_raw @ lv) ** 2
    den = 1.0 + float(lv @ om.solve(lv))
    scale_factor = 1.0 / math.sqrt(1.0 + num / den)
    a_raw_star = scale_factor * spd_star.solve(dz * (inp.omega @ a_raw))
    alpha_star = np.sqrt(np.diag(omega_star)) * a_raw_star
    return StParams(np.zeros(inp.omega.shape[0]), omega_star, alpha_star, inp.nu)


def st_marginal(p: StParams, i: int) -> StParams:
    """Univariate marginal of component i, as 1-dimensional skew-t parameters."""
    d_i = p.delta[i]
    alpha_m = d_i / math.sqrt(1.0 - d_i * d_i)
    return StParams(
        xi=np.array([p.xi[i]]),
        omega=np.array([[p.omega[i, i]]]),
        alpha=np.array([alpha_m]),
        nu=p.nu,
    )


def delta_from_sample_skewness(g1, clip: float = 0.995):
    """Invert the skew-normal skewness formula to a delta estimate.

    Used for moment-matched initialization; the attainable skew-normal
    skewness range is about (-0.9953, 0.9953), so the input is clipped to the
    corresponding interior before inversion.
    """
    g = np.asarray(g1, dtype=float)
    b = math.sqrt(2.0 / math.pi)
    g_max = 0.5 * (4.0 - math.pi) * (b * clip) ** 3 / (1.0 - (b * clip) ** 2) ** 1.5
    g = np.clip(g, -g_max, g_max)
    u = np.cbrt(2.0 * g / (4.0 - math.pi))
    out = u / (b * np.sqrt(1.0 + u * u))
    return float(out) if np.ndim(g1) == 0 else out
