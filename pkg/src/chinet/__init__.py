"""Extremal-dependence networks from block maxima.

Estimate pairwise tail dependence with the F-madogram, shrink noisy
estimates toward a smooth distance curve, and threshold the result into a
network. Includes Brown-Resnick simulation for known-truth evaluation,
annual co-exceedance networks and simple covariate regressions.
"""

__version__ = "0.1.0"

from .domain import (  # noqa: E402
    BlockRule,
    CoordSystem,
    DistanceMatrix,
    MaximaMatrix,
    RankMatrix,
    StationSet,
    block_maxima,
    edf_ranks,
    haversine_km,
    pairwise_distances,
)
from .madogram import ChiMatrix, chi_matrix, chi_u_curve, f_madogram_pair, nu_to_chi, nu_to_theta  # noqa: E402
from .brsim import BRParams, br_simulate, br_threshold_distance, br_true_chi, true_network  # noqa: E402
from .bootstrap import BootstrapSummary, bootstrap_sd  # noqa: E402
from .chicurve import bin_chi, estimate_tau2, fit_chi_curve, logistic_tau2, smoothing_spline  # noqa: E402
from .shrinkage import degree_summary, shrink, threshold_network, tpr_ppv  # noqa: E402
from .annualnet import annual_networks, long_distance_series  # noqa: E402
from .regress import ols_fit, poisson_glm_fit  # noqa: E402
from .pipeline import chi_network, simulation_study  # noqa: E402
