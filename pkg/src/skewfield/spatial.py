"""Spatial layouts, great-circle distances, Matern correlation, and SPD matrix kernels.

Distances are spherical (haversine) kilometers with the Earth radius fixed at
6371.0 km so that outputs are bit-reproducible across platforms.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import gammaln, kv

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0

__all__ = [
    "EARTH_RADIUS_KM",
    "MaternSpec",
    "SpatialLayout",
    "SpdMatrix",
    "build_correlation_matrix",
    "great_circle_distance",
    "great_circle_matrix",
    "matern_correlation",
]


def _check_latitudes(lat: np.ndarray) -> None:
    lat = np.asarray(lat, dtype=float)
    if np.any(lat < -90.0) or np.any(lat > 90.0):
        bad = np.asarray(lat)[(lat < -90.0) | (lat > 90.0)]
        raise ValueError(f"latitude out of range [-90, 90]: {bad.ravel()[0]}")


def great_circle_distance(a, b) -> float:
    """Great-circle (haversine) distance in km between two (lon, lat) points.

    Coordinates are in degrees; latitudes must lie in [-90, 90].
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_latitudes(np.array([a[1], b[1]]))
    lon1, lat1, lon2, lat2 = map(np.radians, (a[0], a[1], b[0], b[1]))
    s = (
        np.sin(0.5 * (lat2 - lat1)) ** 2
        + np.cos(lat1) * np.cos(lat2) * np.sin(0.5 * (lon2 - lon1)) ** 2
    )
    return float(2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(s, 0.0, 1.0))))


def great_circle_matrix(points) -> np.ndarray:
    """Pairwise haversine distances (km) for an (n, 2) array of (lon, lat) degrees."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != 2:
        raise ValueError(f"expected (n, 2) lon/lat array, got shape {pts.shape}")
    _check_latitudes(pts[:, 1])
    lon = np.radians(pts[:, 0])
    lat = np.radians(pts[:, 1])
    s = (
        np.sin(0.5 * (lat[:, None] - lat[None, :])) ** 2
        + np.cos(lat)[:, None]
        * np.cos(lat)[None, :]
        * np.sin(0.5 * (lon[:, None] - lon[None, :])) ** 2
    )
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(s, 0.0, 1.0)))


@dataclass(frozen=True)
class MaternSpec:
    """Matern correlation parameters: range (km), smoothness, variance multiplier."""

    range_km: float
    smoothness: float = 1.5
    variance: float = 1.0

    def __post_init__(self) -> None:
        if not self.range_km > 0:
            raise ValueError(f"Matern range must be > 0, got {self.range_km}")
        if not self.smoothness > 0:
            raise ValueError(f"Matern smoothness must be > 0, got {self.smoothness}")
        if not self.variance > 0:
            raise ValueError(f"Matern variance must be > 0, got {self.variance}")


def matern_correlation(h, spec: MaternSpec):
    """Normalized Matern correlation 2^(1-s)/Gamma(s) (h/r)^s K_s(h/r).

    The normalizing constant makes this a true correlation with value
    ``spec.variance`` at h = 0. Strictly decreasing and continuous in h >= 0.
    """
    h_arr = np.asarray(h, dtype=float)
    if np.any(h_arr < 0):
        raise ValueError("distance must be non-negative")
    x = h_arr / spec.range_km
    s = spec.smoothness
    # x^s * K_s(x) -> Gamma(s) 2^(s-1) as x -> 0; below 1e-100 the correlation
    # is 1 to double precision and kv would overflow.
    tiny = x < 1e-100
    xs = np.where(tiny, 1.0, x)
    with np.errstate(invalid="ignore", over="ignore"):
        val = np.exp((1.0 - s) * np.log(2.0) - gammaln(s) + s * np.log(xs)) * kv(s, xs)
    val = np.where(tiny, 1.0, val)
    val = np.nan_to_num(val, nan=0.0)  # kv underflow at huge x
    out = spec.variance * val
    return float(out) if np.isscalar(h) or np.ndim(h) == 0 else out


class SpdMatrix:
    """Dense symmetric positive-definite matrix with cached Cholesky factor.

    The factorization and log-determinant are computed once at construction and
    never mutated, so instances are safe to share across threads. If the plain
    Cholesky fails, a one-shot diagonal jitter of 1e-10 is applied and logged.
    """

    __slots__ = ("values", "chol", "log_det", "jittered")

    def __init__(self, values, *, jitter: bool = True):
        m = np.array(values, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"expected square matrix, got shape {m.shape}")
        scale = max(1.0, float(np.abs(m).max()))
        asym = float(np.abs(m - m.T).max())
        if asym > 1e-12 * scale:
            raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
        m = 0.5 * (m + m.T)
        self.jittered = False
        try:
            chol = np.linalg.cholesky(m)
        except np.linalg.LinAlgError:
            if not jitter:
                raise
            logger.warning(
                "Cholesky factorization failed for %dx%d matrix; "
                "retrying with 1e-10 diagonal jitter",
                m.shape[0],
                m.shape[0],
            )
            m = m + 1e-10 * np.eye(m.shape[0])
            chol = np.linalg.cholesky(m)
            self.jittered = True
        self.values = m
        self.chol = chol
        self.log_det = float(2.0 * np.sum(np.log(np.diag(chol))))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def solve(self, b) -> np.ndarray:
        """Solve M x = b for a vector or matrix right-hand side."""
        return cho_solve((self.chol, True), np.asarray(b, dtype=float))

    def inverse(self) -> np.ndarray:
        return self.solve(np.eye(self.n))

    def quad_form(self, v):
        """v' M^{-1} v for a vector v, or per-column values for an (n, k) matrix."""
        v = np.asarray(v, dtype=float)
        w = solve_triangular(self.chol, v, lower=True)
        if w.ndim == 1:
            return float(w @ w)
        return np.einsum("ij,ij->j", w, w)


def build_correlation_matrix(points, spec: MaternSpec) -> SpdMatrix:
    """Matern correlation matrix over (lon, lat) points, as an SpdMatrix.

    Raises ValueError naming the first offending pair if two points coincide,
    since the resulting matrix would be singular.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    dist = great_circle_matrix(pts)
    n = dist.shape[0]
    if n > 1:
        iu, ju = np.triu_indices(n, k=1)
        dup = dist[iu, ju] == 0.0
        if np.any(dup):
            k = int(np.argmax(dup))
            raise ValueError(
                f"duplicate points {int(iu[k])} and {int(ju[k])} "
                f"(coordinates {pts[iu[k]].tolist()}): correlation matrix is singular"
            )
    return SpdMatrix(matern_correlation(dist, spec))


@dataclass
class SpatialLayout:
    """Site coordinates partitioned into contiguous regions.

    ``sites`` is an (d, 2) array of (lon, lat) degrees and ``region_of`` maps
    each site to its region index. Sites must be grouped by region (region
    indices non-decreasing) so that data columns form contiguous region blocks.
    """

    sites: np.ndarray
    region_of: np.ndarray
    site_ids: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.sites = np.atleast_2d(np.asarray(self.sites, dtype=float))
        self.region_of = np.asarray(self.region_of, dtype=int)
        if self.sites.shape[1] != 2:
            raise ValueError(f"sites must be (d, 2) lon/lat, got {self.sites.shape}")
        if self.region_of.shape != (self.sites.shape[0],):
            raise ValueError("region_of must assign exactly one region per site")
        _check_latitudes(self.sites[:, 1])
        r = self.region_of
        if r.size == 0:
            raise ValueError("layout must contain at least one site")
        if r.min() != 0:
            raise ValueError("region indices must start at 0")
        n_regions = int(r.max()) + 1
        counts = np.bincount(r, minlength=n_regions)
        if np.any(counts == 0):
            raise ValueError("region indices must be contiguous 0..R-1 with d_r >= 1")
        if np.any(np.diff(r) < 0):
            raise ValueError("sites must be ordered so regions form contiguous blocks")
        if not self.site_ids:
            self.site_ids = [f"s{i:03d}" for i in range(self.n_sites)]
        if len(self.site_ids) != self.n_sites:
            raise ValueError("site_ids length must match number of sites")

    @property
    def n_sites(self) -> int:
        return self.sites.shape[0]

    @property
    def n_regions(self) -> int:
        return int(self.region_of.max()) + 1

    @property
    def region_sizes(self) -> np.ndarray:
        return np.bincount(self.region_of, minlength=self.n_regions)

    @property
    def region_slices(self) -> list[slice]:
        bounds = np.concatenate([[0], np.cumsum(self.region_sizes)])
        return [slice(int(bounds[r]), int(bounds[r + 1])) for r in range(self.n_regions)]

    def region_points(self, r: int) -> np.ndarray:
        return self.sites[self.region_slices[r]]

    @property
    def centroids(self) -> np.ndarray:
        """Per-region (lon, lat) arithmetic mean of site coordinates."""
        return np.array([self.region_points(r).mean(axis=0) for r in range(self.n_regions)])

    def within_distances(self, r: int) -> np.ndarray:
        return great_circle_matrix(self.region_points(r))

    def centroid_distances(self) -> np.ndarray:
        return great_circle_matrix(self.centroids)

    def to_dict(self) -> dict:
        return {
            "sites": self.sites.tolist(),
            "region_of": self.region_of.tolist(),
            "site_ids": list(self.site_ids),
            "centroids": self.centroids.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpatialLayout":
        return cls(
            sites=np.asarray(d["sites"], dtype=float),
            region_of=np.asarray(d["region_of"], dtype=int),
            site_ids=list(d.get("site_ids") or []),
        )
