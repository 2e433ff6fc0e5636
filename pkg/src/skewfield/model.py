"""Multi-resolution skew-t model: parameters, simulation, and likelihood terms.

Each region r observes
    Y_r = (zeta_r X0_r + Dz_r delta_r |U0_r| + Dzd_r U_r) / sqrt(Z_r),
with X0 ~ N_R(0, Sigma) coupling regions, U0_r standard normal, U_r ~
N(0, Psi_r), and Z_r ~ Gamma(nu_r/2, nu_r/2), all independent across time.
Dz_r = diag(sqrt(1 - zeta_r^2)) and Dzd_r is its Hadamard product with the
matching delta factor. Latent variables are eta0 = X0/sqrt(Z) (per region),
eta1 = |U0|/sqrt(Z), and Z itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .spatial import MaternSpec, SpatialLayout, SpdMatrix, build_correlation_matrix

_LOG_2PI = math.log(2.0 * math.pi)
_HALF_LOG_2_OVER_PI = 0.5 * math.log(2.0 / math.pi)

__all__ = [
    "Dataset",
    "LatentState",
    "RegionParams",
    "SktParams",
    "SktTerms",
    "complete_data_loglik",
    "joint_log_density",
    "simulate",
]


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
class RegionParams:
    """Per-region parameters: skewness vector, large-scale weights, tail dof,
    and the fine-scale correlation (Matern spec or explicit matrix)."""

    delta: np.ndarray
    zeta: np.ndarray
    nu: float
    psi: MaternSpec | np.ndarray
    zeta_tied: bool = False

    def __post_init__(self) -> None:
        self.delta = np.atleast_1d(np.asarray(self.delta, dtype=float))
        self.zeta = np.atleast_1d(np.asarray(self.zeta, dtype=float))
        self.nu = float(self.nu)
        if self.zeta.size == 1 and self.delta.size > 1:
            self.zeta = np.full(self.delta.size, float(self.zeta[0]))
            self.zeta_tied = True
        if self.zeta.shape != self.delta.shape:
            raise ValueError("zeta and delta must have the same length")
        if np.any(np.abs(self.delta) >= 1.0):
            raise ValueError("delta entries must lie in (-1, 1)")
        if np.any(np.abs(self.zeta) >= 1.0):
            raise ValueError("zeta entries must lie in (-1, 1)")
        if self.zeta_tied and np.ptp(self.zeta) != 0.0:
            raise ValueError("tied zeta must be constant within the region")
        if self.nu <= 0:
            raise ValueError(f"nu must be > 0, got {self.nu}")

    @property
    def dim(self) -> int:
        return self.delta.size

    def to_dict(self) -> dict:
        return {
            "delta": self.delta.tolist(),
            "zeta": self.zeta.tolist(),
            "zeta_tied": bool(self.zeta_tied),
            "nu": self.nu,
            "psi": _cov_spec_to_dict(self.psi),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegionParams":
        return cls(
            delta=np.asarray(d["delta"], dtype=float),
            zeta=np.asarray(d["zeta"], dtype=float),
            nu=float(d["nu"]),
            psi=_cov_spec_from_dict(d["psi"]),
            zeta_tied=bool(d.get("zeta_tied", False)),
        )


@dataclass
class SktParams:
    """Full parameter vector: per-region parameters plus the cross-region
    correlation (Matern over centroids or explicit unit-diagonal matrix)."""

    regions: list[RegionParams]
    sigma: MaternSpec | np.ndarray

    def __post_init__(self) -> None:
        if not self.regions:
            raise ValueError("at least one region required")
        if not isinstance(self.sigma, MaternSpec):
            self.sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
            if np.abs(np.diag(self.sigma) - 1.0).max() > 1e-8:
                raise ValueError("sigma must have unit diagonal")

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    def validate_for(self, layout: SpatialLayout) -> None:
        if self.n_regions != layout.n_regions:
            raise ValueError(
                f"params have {self.n_regions} regions, layout has {layout.n_regions}"
            )
        for r, (reg, d_r) in enumerate(zip(self.regions, layout.region_sizes)):
            if reg.dim != d_r:
                raise ValueError(f"region {r}: params dim {reg.dim} != layout size {d_r}")
        if not isinstance(self.sigma, MaternSpec) and self.sigma.shape[0] != self.n_regions:
            raise ValueError("sigma dimension must equal the number of regions")

    def n_free_parameters(self) -> int:
        """Count under the reporting convention: per region |delta| + |zeta|
        (1 if tied) + 1 for nu + Matern range (1) or free lower triangle;
        cross-region 1 if Matern else R(R-1)/2."""
        k = 0
        for reg in self.regions:
            k += reg.dim  # delta
            k += 1 if reg.zeta_tied else reg.dim
            k += 1  # nu
            k += 1 if isinstance(reg.psi, MaternSpec) else reg.dim * (reg.dim + 1) // 2
        r = self.n_regions
        k += 1 if isinstance(self.sigma, MaternSpec) else r * (r - 1) // 2
        return k

    def to_dict(self) -> dict:
        return {
            "regions": [reg.to_dict() for reg in self.regions],
            "sigma": _cov_spec_to_dict(self.sigma),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SktParams":
        return cls(
            regions=[RegionParams.from_dict(x) for x in d["regions"]],
            sigma=_cov_spec_from_dict(d["sigma"]),
        )


@dataclass
class Dataset:
    """Observations (T, d) with columns ordered like the layout's sites."""

    y: np.ndarray
    layout: SpatialLayout
    time_index: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.y = np.atleast_2d(np.asarray(self.y, dtype=float))
        if self.y.shape[0] == 1 and self.y.size == 0:
            self.y = self.y.reshape(0, self.layout.n_sites)
        if self.y.shape[1] != self.layout.n_sites:
            raise ValueError(
                f"data has {self.y.shape[1]} columns, layout has {self.layout.n_sites} sites"
            )
        if not np.all(np.isfinite(self.y)):
            raise ValueError("data contains non-finite values")
        if self.time_index is None:
            self.time_index = np.arange(self.y.shape[0])

    @property
    def n_times(self) -> int:
        return self.y.shape[0]

    def region_block(self, r: int) -> np.ndarray:
        return self.y[:, self.layout.region_slices[r]]


@dataclass
class LatentState:
    """Latent draws per time point: z > 0, eta1 >= 0, eta0 unconstrained."""

    z: np.ndarray
    eta0: np.ndarray
    eta1: np.ndarray

    def __post_init__(self) -> None:
        self.z = np.atleast_2d(np.asarray(self.z, dtype=float))
        self.eta0 = np.atleast_2d(np.asarray(self.eta0, dtype=float))
        self.eta1 = np.atleast_2d(np.asarray(self.eta1, dtype=float))
        if not (self.z.shape == self.eta0.shape == self.eta1.shape):
            raise ValueError("z, eta0, eta1 must have matching shapes")
        if np.any(self.z <= 0):
            raise ValueError("z must be positive")
        if np.any(self.eta1 < 0):
            raise ValueError("eta1 must be non-negative")


class SktTerms:
    """Parameters materialized against a layout: concrete matrices and the
    per-region vectors reused by the samplers and likelihood evaluations."""

    def __init__(self, params: SktParams, layout: SpatialLayout):
        params.validate_for(layout)
        self.params = params
        self.layout = layout
        self.n_regions = params.n_regions
        self.zeta: list[np.ndarray] = []
        self.delta: list[np.ndarray] = []
        self.nu: list[float] = []
        self.dzeta: list[np.ndarray] = []
        self.ddelta: list[np.ndarray] = []
        self.dzd: list[np.ndarray] = []
        self.mdelta: list[np.ndarray] = []
        self.psi: list[SpdMatrix] = []
        self.ups: list[SpdMatrix] = []
        self.ups_inv: list[np.ndarray] = []
        self.a_zeta: list[np.ndarray] = []
        self.q_zeta: list[float] = []
        self.b_delta: list[np.ndarray] = []
        self.q_delta: list[float] = []
        for r, reg in enumerate(params.regions):
            z, d = reg.zeta, reg.delta
            dz = np.sqrt(1.0 - z * z)
            dd = np.sqrt(1.0 - d * d)
            dzd = dz * dd
            md = dz * d
            if isinstance(reg.psi, MaternSpec):
                psi = build_correlation_matrix(layout.region_points(r), reg.psi)
            else:
                psi = SpdMatrix(reg.psi)
            ups = SpdMatrix(dzd[:, None] * psi.values * dzd[None, :])
            a = ups.solve(z)
            b = ups.solve(md)
            self.zeta.append(z)
            self.delta.append(d)
            self.nu.append(reg.nu)
            self.dzeta.append(dz)
            self.ddelta.append(dd)
            self.dzd.append(dzd)
            self.mdelta.append(md)
            self.psi.append(psi)
            self.ups.append(ups)
            self.ups_inv.append(ups.inverse())
            self.a_zeta.append(a)
            self.q_zeta.append(float(z @ a))
            self.b_delta.append(b)
            self.q_delta.append(float(md @ b))
        if isinstance(params.sigma, MaternSpec):
            self.sigma = build_correlation_matrix(layout.centroids, params.sigma)
        else:
            self.sigma = SpdMatrix(params.sigma)
        self.lam = self.sigma.inverse()


def simulate(
    params: SktParams,
    layout: SpatialLayout,
    n_times: int,
    seed,
    return_latents: bool = False,
):
    """Simulate a Dataset of length n_times; optionally return the latents.

    Draw order is fixed (X0, then per region U0, Z, U) so output depends only
    on the seed.
    """
    if n_times < 0:
        raise ValueError("n_times must be >= 0")
    terms = SktTerms(params, layout)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n_reg = terms.n_regions
    x0 = rng.standard_normal((n_times, n_reg)) @ terms.sigma.chol.T
    y = np.empty((n_times, layout.n_sites))
    z = np.empty((n_times, n_reg))
    eta1 = np.empty((n_times, n_reg))
    for r, sl in enumerate(layout.region_slices):
        nu_r = terms.nu[r]
        u0 = np.abs(rng.standard_normal(n_times))
        z_r = rng.gamma(0.5 * nu_r, 2.0 / nu_r, size=n_times)
        fine = rng.standard_normal((n_times, sl.stop - sl.start)) @ terms.psi[r].chol.T
        numer = (
            x0[:, r, None] * terms.zeta[r][None, :]
            + u0[:, None] * terms.mdelta[r][None, :]
            + fine * terms.dzd[r][None, :]
        )
        y[:, sl] = numer / np.sqrt(z_r)[:, None]
        z[:, r] = z_r
        eta1[:, r] = u0 / np.sqrt(z_r)
    data = Dataset(y=y, layout=layout)
    if return_latents:
        return data, LatentState(z=z, eta0=x0 / np.sqrt(z), eta1=eta1)
    return data


def _region_quad(terms: SktTerms, r: int, y_r: np.ndarray, eta0_r, eta1_r) -> np.ndarray:
    """x' Ups^{-1} x with x = y - zeta eta0 - Dz delta eta1, batched over rows."""
    x = (
        y_r
        - np.atleast_1d(eta0_r)[:, None] * terms.zeta[r][None, :]
        - np.atleast_1d(eta1_r)[:, None] * terms.mdelta[r][None, :]
    )
    return np.einsum("ti,ij,tj->t", x, terms.ups_inv[r], x)


def joint_log_density(y_t, z_t, eta0_t, eta1_t, terms: SktTerms) -> float:
    """Log joint density of one observation and its latents (all constants kept)."""
    y_t = np.asarray(y_t, dtype=float)
    z_t = np.atleast_1d(np.asarray(z_t, dtype=float))
    eta0_t = np.atleast_1d(np.asarray(eta0_t, dtype=float))
    eta1_t = np.atleast_1d(np.asarray(eta1_t, dtype=float))
    if np.any(z_t <= 0):
        raise ValueError("z must be positive")
    if np.any(eta1_t < 0):
        raise ValueError("eta1 must be non-negative")
    total = 0.0
    for r, sl in enumerate(terms.layout.region_slices):
        nu_r = terms.nu[r]
        d_r = sl.stop - sl.start
        quad = float(
            _region_quad(terms, r, y_t[None, sl], eta0_t[None, r], eta1_t[None, r])[0]
        )
        total += (
            0.5 * nu_r * math.log(0.5 * nu_r)
            - gammaln(0.5 * nu_r)
            - 0.5 * d_r * _LOG_2PI
            + _HALF_LOG_2_OVER_PI
            - 0.5 * terms.ups[r].log_det
            + 0.5 * (nu_r + d_r) * math.log(z_t[r])
            - 0.5 * z_t[r] * (quad + eta1_t[r] ** 2 + nu_r)
        )
    v = eta0_t * np.sqrt(z_t)
    total += (
        -0.5 * terms.n_regions * _LOG_2PI
        - 0.5 * terms.sigma.log_det
        - 0.5 * float(v @ terms.lam @ v)
    )
    return total


def complete_data_loglik(data: Dataset, latents: LatentState, params: SktParams) -> float:
    """Log-likelihood of all time points given the full latent trajectories,
    excluding additive constants that do not depend on the parameters."""
    terms = SktTerms(params, data.layout)
    n_times = data.n_times
    if latents.z.shape != (n_times, terms.n_regions):
        raise ValueError("latents must cover every time point and region")
    total = 0.0
    for r in range(terms.n_regions):
        nu_r = terms.nu[r]
        d_r = int(data.layout.region_sizes[r])
        quad = _region_quad(terms, r, data.region_block(r), latents.eta0[:, r], latents.eta1[:, r])
        total += (
            n_times * 0.5 * nu_r * math.log(0.5 * nu_r)
            - n_times * gammaln(0.5 * nu_r)
            - 0.5 * n_times * np.log(1.0 - terms.zeta[r] ** 2).sum()
            - 0.5 * n_times * np.log(1.0 - terms.delta[r] ** 2).sum()
            - 0.5 * n_times * terms.psi[r].log_det
            + 0.5 * (nu_r + d_r) * np.log(latents.z[:, r]).sum()
            - 0.5 * float(
                (latents.z[:, r] * (quad + latents.eta1[:, r] ** 2 + nu_r)).sum()
            )
        )
    v = latents.eta0 * np.sqrt(latents.z)
    total += -0.5 * n_times * terms.sigma.log_det - 0.5 * float(
        np.einsum("ti,ij,tj->", v, terms.lam, v)
    )
    return total
