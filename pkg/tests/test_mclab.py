import os

import numpy as np
import pytest

import gsubord as gs
from gsubord.covlink import CovarianceSequence
from gsubord.estimators import NonSummableCovarianceError
from gsubord.mclab import (
    DegenerateModelError,
    kolmogorov_critical,
    linear_vs_subordinated,
    long_memory_scan,
    mean_clt_experiment,
)


def test_kolmogorov_critical_value():
    # asymptotic distribution quantile: c(0.01) ~ 1.628
    assert kolmogorov_critical(0.01, 2000) == pytest.approx(0.0364, abs=2e-4)


def test_mean_clt_small_run(white_noise_model):
    s = mean_clt_experiment(white_noise_model, T=1024, reps=400, seed=7)
    assert s.passed
    assert s.replications == 400
    assert abs(s.empirical_variance - 1.0) < 0.2
    assert 0.0 <= s.ks_distance <= 1.0


def test_mean_clt_deterministic_across_threads(white_noise_model):
    a = mean_clt_experiment(white_noise_model, T=256, reps=50, seed=3)
    before = os.environ.get("GS_THREADS")
    os.environ["GS_THREADS"] = "3"
    try:
        b = mean_clt_experiment(white_noise_model, T=256, reps=50, seed=3)
    finally:
        if before is None:
            os.environ.pop("GS_THREADS")
        else:
            os.environ["GS_THREADS"] = before
    assert np.array_equal(a.standardized_values, b.standardized_values)
    assert a.ks_distance == b.ks_distance


def test_mean_clt_refuses_long_memory():
    model, _ = gs.build_model(gs.parse_marginal("normal"), gs.fgn_cov(0.7, 16))
    with pytest.raises(NonSummableCovarianceError):
        mean_clt_experiment(model, T=256, reps=10, seed=0)


def test_mean_clt_refuses_degenerate():
    # r = (1, -1/2, 0, ...) sums to exactly zero long-run variance
    seq = CovarianceSequence(np.array([1.0, -0.5, 0.0, 0.0]))
    model, _ = gs.build_model(gs.parse_marginal("normal"), seq)
    with pytest.raises(DegenerateModelError):
        mean_clt_experiment(model, T=256, reps=10, seed=0)


def test_acov_clt_remainder_shrinks_with_T(white_noise_model):
    small = gs.acov_clt_experiment(white_noise_model, T=1024, reps=200, k=1,
                                   seed=5, sigma_reps=8, sigma_T=1 << 13)
    large = gs.acov_clt_experiment(white_noise_model, T=4096, reps=200, k=1,
                                   seed=5, sigma_reps=8, sigma_T=1 << 13)
    # replacing hat by bar - m^2 perturbs the statistic by sqrt(T) R_T = o_p(1)
    small_gap = np.abs(small.remainder_statistics).mean()
    large_gap = np.abs(large.remainder_statistics).mean()
    assert large_gap < small_gap
    assert large_gap < 0.01


def test_ks_distance_does_not_degrade_with_T(white_noise_model):
    small = mean_clt_experiment(white_noise_model, T=1024, reps=400, seed=21)
    large = mean_clt_experiment(white_noise_model, T=4096, reps=400, seed=21)
    noise_band = 2.0 / np.sqrt(400)
    assert large.ks_distance <= small.ks_distance + noise_band


def test_ar1_type_identity_acov_clt_all_lags_pass(identity_model):
    result = gs.acov_clt_experiment(identity_model, T=4096, reps=2000, k=2,
                                    seed=0)
    assert all(s.passed for s in result.per_lag)
    assert result.joint_passed


def test_variance_matches_longrun_for_shipped_models(shipped_marginals):
    # empirical variance of sqrt(T)(m - mu) against the analytic sigma^2
    for name in ("exponential", "uniform", "chisq1", "student_t(5)"):
        marginal = shipped_marginals[name]
        model, _ = gs.build_model(marginal,
                                  gs.geometric_cov(0.5, 20, marginal.variance))
        s = mean_clt_experiment(model, T=4096, reps=2000, seed=1)
        sigma2 = gs.longrun_variance(model)
        assert abs(s.empirical_variance - sigma2) / sigma2 < 0.10, name


def test_scan_domain():
    with pytest.raises(ValueError):
        long_memory_scan(0.8)
    with pytest.raises(ValueError):
        long_memory_scan(0.3)


def test_scan_white_noise_boundary():
    scan = long_memory_scan(0.5, reps=500, seed=2)
    assert abs(scan.slope) < 0.05
    assert scan.lag_summary.passed


def test_linear_identity_fit_matches_white_noise():
    cmp = linear_vs_subordinated([1.0], gs.parse_marginal("normal"),
                                 T=4096, reps=300, seed=9, prerun=1 << 19)
    assert cmp.calibration_error is None
    dev = np.abs(cmp.acf_rep_mean - cmp.acf_target)
    assert dev.max() < 0.01
    assert cmp.linear_mean_clt.passed and cmp.surrogate_mean_clt.passed


def test_linear_ma1_normal_innovations():
    cmp = linear_vs_subordinated([1.0, 0.5], gs.parse_marginal("normal"),
                                 T=2048, reps=400, seed=4)
    assert cmp.passed
    assert np.allclose(cmp.acf_target[:2], [1.25, 0.5])
    assert cmp.marginal_ks < 0.05
