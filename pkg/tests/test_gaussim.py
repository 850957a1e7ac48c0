import os

import numpy as np
import pytest
from scipy import stats

import gsubord as gs
from gsubord import gaussim
from gsubord.covlink import CovarianceSequence
from gsubord.estimators import acov_hat_all


def test_fgn_h_half_is_white_noise():
    seq = gs.fgn_cov(0.5, 10)
    assert seq.values[0] == 1.0
    assert np.max(np.abs(seq.values[1:])) < 1e-12


def test_fgn_lag_one_value():
    # direct evaluation: 0.5 (2^{1.4} - 2)
    assert gs.fgn_cov(0.7, 2).values[1] == pytest.approx(
        0.5 * (2**1.4 - 2), abs=1e-14
    )


def test_fgn_tail_asymptotics():
    seq = gs.fgn_cov(0.7, 1000)
    ratio = seq.values[1000] / 1000 ** (2 * 0.7 - 2)
    assert ratio == pytest.approx(0.7 * 0.4, rel=0.05)  # H(2H-1) = 0.28


def test_fgn_domain():
    with pytest.raises(ValueError):
        gs.fgn_cov(1.2, 5)


def test_fgn_partial_sums_grow_like_power_law():
    # absolute non-summability: sum_{tau<=L} |r| ~ L^{2H-1}
    for hurst in (0.6, 0.7):
        seq = gs.fgn_cov(hurst, 2**14)
        Ls = 2 ** np.arange(8, 15)
        sums = np.array([np.abs(seq.values[: L + 1]).sum() for L in Ls])
        slope = np.polyfit(np.log(Ls), np.log(sums), 1)[0]
        assert abs(slope - (2 * hurst - 1)) < 0.05


def test_white_noise_simulation():
    seq = gs.geometric_cov(0.0, 10)
    seq, _ = gaussim.covlink.with_psd_status(seq)
    z = gs.simulate_gaussian(seq, 100_000, 1)
    assert abs(gs.acov_hat(z.values, 1)) < 0.01
    assert z.values.std() == pytest.approx(1.0, abs=0.02)
    assert abs(z.values.mean()) < 0.02


def test_every_shipped_transport_passes_path_ks(shipped_marginals):
    for i, marginal in enumerate(shipped_marginals.values()):
        model, _ = gs.build_model(marginal, gs.geometric_cov(0.3, 10,
                                                             marginal.variance))
        z = gs.simulate_subordinated(model, 100_000, 100 + i)
        ks = stats.kstest(z.values, marginal.dist.cdf).statistic
        assert ks < 0.01, marginal.name


def test_geometric_simulation_matches_target():
    seq, _ = gaussim.covlink.with_psd_status(gs.geometric_cov(0.5, 20))
    z = gs.simulate_gaussian(seq, 100_000, 42)
    # 3 standard errors at this length for an AR(1)-type series
    assert gs.acov_hat(z.values, 1) == pytest.approx(0.5, abs=0.02)


def test_fgn_h_half_simulation_is_white():
    z = gs.simulate_gaussian(gs.fgn_cov(0.5, 32), 100_000, 5)
    assert abs(gs.acov_hat(z.values, 1)) < 0.01


def test_simulation_reproducible_and_thread_invariant(identity_model):
    a = gs.simulate_subordinated(identity_model, 4096, 99)
    b = gs.simulate_subordinated(identity_model, 4096, 99)
    assert np.array_equal(a.values, b.values)
    before = os.environ.get("GS_THREADS")
    os.environ["GS_THREADS"] = "4"
    try:
        c = gs.simulate_subordinated(identity_model, 4096, 99)
    finally:
        if before is None:
            os.environ.pop("GS_THREADS")
        else:
            os.environ["GS_THREADS"] = before
    assert np.array_equal(a.values, c.values)
    assert a.model_fingerprint == c.model_fingerprint


def test_distinct_seeds_are_independent_streams(identity_model):
    a = gs.simulate_subordinated(identity_model, 1024, 1)
    b = gs.simulate_subordinated(identity_model, 1024, 2)
    assert not np.array_equal(a.values, b.values)


def test_refuses_unverified_covariance():
    seq = gs.geometric_cov(0.5, 5)  # status unchecked
    with pytest.raises(ValueError, match="PSD status"):
        gs.simulate_gaussian(seq, 100, 0)


def test_window_fallback_when_embedding_fails():
    # truncated spectral density of (1, .6, .5) dips negative, but the
    # Toeplitz matrix itself is positive definite: the circulant embedding
    # can never succeed and the conditional window sampler must take over
    seq = CovarianceSequence(np.array([1.0, 0.6, 0.5]))
    spec = 1 + 1.2 * np.cos(2 * np.pi / 3) + 1.0 * np.cos(4 * np.pi / 3)
    assert spec < 0
    seq, report = gaussim.covlink.with_psd_status(seq)
    assert report.status == "verified"
    with pytest.warns(UserWarning, match="Yule-Walker tail"):
        z = gs.simulate_gaussian(seq, 200_000, 17)
    assert "window" in z.generator_id
    sample = acov_hat_all(z.values, 2)
    assert np.allclose(sample, seq.values, atol=0.02)


def test_subordinated_marginal_and_mean(exp_model):
    model, _ = exp_model
    z = gs.simulate_subordinated(model, 100_000, 42)
    assert stats.kstest(z.values, stats.expon().cdf).statistic < 0.01
    assert z.values.mean() == pytest.approx(1.0, abs=0.02)


def test_subordinated_acov_matches_targets(exp_model):
    model, _ = exp_model
    z = gs.simulate_subordinated(model, 100_000, 42)
    for tau in range(1, 6):
        se = np.sqrt(2.5 / len(z.values))  # coarse asymptotic scale
        assert abs(gs.acov_hat(z.values, tau) - 0.5**tau) < 3 * se


def test_model_invariants(exp_model):
    model, _ = exp_model
    assert model.rank == 1
    from gsubord.covlink import link_value

    recon = link_value(model.link, model.r_x.values)
    assert np.max(np.abs(recon - model.r_z.values)) < 1e-9


def test_linear_process_white():
    z = gs.linear_process([1.0], gs.parse_marginal("normal"), 50_000, 3)
    assert abs(gs.acov_hat(z.values, 1)) < 0.02


def test_linear_acf_fixture():
    # direct convolution of coefficients: r(0) = 1.25, r(1) = 0.5, r(>=2) = 0
    acf = gs.linear_acf([1.0, 0.5], 1.0, 4)
    assert np.allclose(acf, [1.25, 0.5, 0.0, 0.0, 0.0])


def test_linear_process_sample_acf_matches_theory():
    z = gs.linear_process([1.0, 0.5], gs.parse_marginal("normal"), 200_000, 8)
    sample = acov_hat_all(z.values, 3)
    assert np.allclose(sample, [1.25, 0.5, 0.0, 0.0], atol=0.02)


def test_linear_process_centered_exponential_moments():
    z = gs.linear_process([1.0, 0.5], gs.parse_marginal("exponential"),
                          200_000, 8, center_innovations=True)
    assert z.values.mean() == pytest.approx(0.0, abs=0.02)
    sample = acov_hat_all(z.values, 2)
    assert np.allclose(sample, [1.25, 0.5, 0.0], atol=0.03)
    # skewness survives: the marginal is not Gaussian
    skew = float(stats.skew(z.values))
    assert skew > 0.5


def test_linear_process_empty_coefficients():
    with pytest.raises(ValueError):
        gs.linear_process([], gs.parse_marginal("normal"), 100, 0)
