"""Multi-resolution skew-t spatial model with Monte Carlo EM inference.

Library layout:

- :mod:`skewfield.spatial` -- layouts, great-circle distances, Matern kernels
- :mod:`skewfield.skewdist` -- skew-normal / skew-t densities and samplers
- :mod:`skewfield.model` -- the skew-t model: parameters, simulation, likelihood
- :mod:`skewfield.mcem` -- Monte Carlo EM fitting of the skew-t model
- :mod:`skewfield.gaussian` -- the Gaussian baseline and its EM
- :mod:`skewfield.selection` -- marginal likelihood, BIC/AIC, covariance metrics
- :mod:`skewfield.dataio` -- CSV/JSON persistence with provenance
- :mod:`skewfield.cli` -- the ``skewfield`` command line front end
"""

__version__ = "0.1.0"

from .gaussian import GauFitConfig, GauParams, gau_fit, gau_loglik, gau_simulate
from .mcem import EmConfig, GibbsConfig, fit, gibbs_estep, mstep
from .model import Dataset, LatentState, RegionParams, SktParams, simulate
from .report import FitReport
from .selection import (
    frobenius_improvement,
    implied_cross_covariance,
    information_criteria,
    skt_marginal_loglik,
)
from .skewdist import (
    ConvolutionInput,
    SnParams,
    StParams,
    convolve_sn_normal,
    sample_sn,
    sample_st,
    sn_log_density,
    st_log_density,
)
from .spatial import MaternSpec, SpatialLayout, SpdMatrix, great_circle_distance, matern_correlation

__all__ = [
    "ConvolutionInput",
    "Dataset",
    "EmConfig",
    "FitReport",
    "GauFitConfig",
    "GauParams",
    "GibbsConfig",
    "LatentState",
    "MaternSpec",
    "RegionParams",
    "SktParams",
    "SnParams",
    "SpatialLayout",
    "SpdMatrix",
    "StParams",
    "__version__",
    "convolve_sn_normal",
    "fit",
    "frobenius_improvement",
    "gau_fit",
    "gau_loglik",
    "gau_simulate",
    "gibbs_estep",
    "great_circle_distance",
    "implied_cross_covariance",
    "information_criteria",
    "matern_correlation",
    "mstep",
    "sample_sn",
    "sample_st",
    "simulate",
    "skt_marginal_loglik",
    "sn_log_density",
    "st_log_density",
]
