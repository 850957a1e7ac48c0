"""Gaussian subordination models for weakly stationary time series.

Build the transport f = F^{-1} o Phi for a target marginal, calibrate the
latent Gaussian autocovariance by inverting the Hermite covariance link,
simulate subordinated paths, and verify the mean/autocovariance central
limit theorems by Monte Carlo.
"""

__version__ = "0.1.0"

from .covlink import (
    AttainabilityError,
    CovarianceLink,
    CovarianceSequence,
    calibrate,
    geometric_cov,
    invert,
    link_from_expansion,
    link_value,
    psd_check,
    sandwich_check,
)
from .estimators import (
    FourthMomentError,
    NonSummableCovarianceError,
    acov_bar,
    acov_hat,
    acov_tilde,
    estimator_report,
    lemma_decomposition,
    longrun_variance,
    mean_est,
    sigma_matrix,
)
from .gaussim import (
    SamplePath,
    SubordinatedModel,
    build_model,
    fgn_cov,
    linear_acf,
    linear_process,
    simulate_gaussian,
    simulate_subordinated,
)
from .hermite import HermiteExpansion, expand, expand_step, hermite_poly, rank
from .marginals import (
    DegenerateMarginalError,
    MarginalDistribution,
    Transport,
    build_transport,
    empirical_from_sample,
    load_marginal_csv,
    parse_marginal,
    quantile,
    verify_rank_one,
)
from .mclab import (
    MonteCarloSummary,
    acov_clt_experiment,
    kolmogorov_critical,
    linear_vs_subordinated,
    long_memory_scan,
    mean_clt_experiment,
)
from .oracles import QuadratureRule, bivariate_gauss_expect, gauss_expect, poly_hermite_coeffs
