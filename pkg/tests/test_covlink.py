import numpy as np
import pytest

import gsubord as gs
from gsubord import hermite
from gsubord.covlink import (
    AttainabilityError,
    CovarianceSequence,
    calibrate,
    calibration_csv,
    geometric_cov,
    invert,
    link_from_expansion,
    link_value,
    psd_check,
    repair_psd,
    sandwich_check,
)
from gsubord.oracles import bivariate_gauss_expect


def _identity_link():
    return link_from_expansion(hermite.expand(lambda x: x, truncation=12))


def _h2_link():
    return link_from_expansion(
        hermite.expand(lambda x: hermite.hermite_poly(2, x), truncation=12)
    )


def test_link_value_identity():
    link = _identity_link()
    assert link_value(link, 0.3) == pytest.approx(0.3, abs=1e-12)
    assert link.gamma == pytest.approx(-1.0, abs=1e-9)


def test_link_value_h2_matches_bivariate_oracle():
    link = _h2_link()
    h2 = lambda x: hermite.hermite_poly(2, x)
    oracle = bivariate_gauss_expect(h2, h2, 0.5)
    assert link_value(link, 0.5) == pytest.approx(oracle, abs=1e-10)
    assert link_value(link, 0.5) == pytest.approx(0.5, abs=1e-10)
    assert link.gamma == pytest.approx(0.0, abs=1e-12)


def test_standardized_link_at_one(exp_model):
    model, _ = exp_model
    assert link_value(model.link, 1.0) == pytest.approx(1.0, abs=1e-9)


def test_link_domain_error():
    with pytest.raises(ValueError):
        link_value(_identity_link(), 1.2)


def test_invert_identity():
    assert invert(_identity_link(), 0.3) == pytest.approx(0.3, abs=1e-10)


def test_invert_h2_quadratic_root():
    # closed form: 2 beta^2 = 0.5 has roots +-(1/2); the nonnegative one wins
    link = _h2_link()
    beta = invert(link, 0.5)
    assert beta == pytest.approx(0.5, abs=1e-9)


def test_invert_h2_negative_target_unattainable():
    link = _h2_link()
    with pytest.raises(AttainabilityError) as err:
        invert(link, -0.1)
    assert err.value.gamma == pytest.approx(0.0, abs=1e-12)


def test_invert_above_maximum():
    with pytest.raises(ValueError, match="exceeds"):
        invert(_identity_link(), 1.5)


def test_invert_negative_root_closest_to_zero():
    link = _identity_link()
    assert invert(link, -0.4) == pytest.approx(-0.4, abs=1e-11)


def test_round_trip_property(exp_model, identity_model):
    for link in (exp_model[0].link, identity_model.link, _h2_link()):
        lo = link.gamma + 1e-6
        hi = link.variance - 1e-12
        for target in np.linspace(lo, hi, 41):
            beta = invert(link, float(target))
            assert abs(link_value(link, beta) - target) <= 1e-10 * link.variance


def test_link_monotone_on_unit_interval(exp_model):
    link = exp_model[0].link
    grid = np.linspace(0.0, 1.0, 101)
    vals = link_value(link, grid)
    assert np.all(np.diff(vals) > 0)


def test_calibrate_identity_is_identity(identity_model):
    assert np.allclose(identity_model.r_x.values, identity_model.r_z.values,
                       atol=1e-11)
    assert identity_model.r_x.psd_status == "verified"


def test_calibrate_exponential_dominates_target(exp_model):
    model, calib = exp_model
    r_x, r_z = model.r_x.values, model.r_z.values
    # convexity of g with g(1) = 1 forces r_X >= r_z on positive targets
    assert np.all(r_x[1:] >= r_z[1:] - 1e-12)
    assert np.all(r_z[1:] >= 0)
    assert model.r_x.psd_status == "verified"
    assert calib.sandwich.upper_constant == pytest.approx(1.0)
    assert calib.sandwich.passed


@pytest.mark.filterwarnings("ignore:even Hermite rank")
def test_calibrate_h2_negative_lag_aggregates():
    link = _h2_link()
    seq = CovarianceSequence(np.array([2.0, 0.5, -0.2, 0.1]))
    with pytest.raises(AttainabilityError) as err:
        calibrate(link, seq)
    assert err.value.lags == (2,)


def test_calibrate_variance_mismatch():
    with pytest.raises(ValueError, match="does not match the model variance"):
        calibrate(_identity_link(), geometric_cov(0.5, 5, scale=2.0))


def test_calibrate_propagates_extension():
    fgn = gs.fgn_cov(0.7, 16)
    model, _ = gs.build_model(gs.parse_marginal("normal"), fgn)
    assert model.r_x.extension == "fgn"
    assert model.r_x.hurst == 0.7


def test_psd_check_fixtures():
    assert psd_check(CovarianceSequence(np.array([1.0, 0.5, 0.25]))).status == "verified"
    assert psd_check(CovarianceSequence(np.array([1.0, 0.0, 0.0, 0.0]))).status == "verified"

    bad = CovarianceSequence(np.array([1.0, 0.9, 0.2]))
    report = psd_check(bad)
    assert report.status == "failed"
    assert report.min_eigenvalue < 0
    # oracle: direct 3x3 Toeplitz determinant expansion is negative
    det = (1 * (1 - 0.81) - 0.9 * (0.9 - 0.9 * 0.2) + 0.2 * (0.81 - 0.2))
    assert det == pytest.approx(-0.336, abs=1e-12)


def test_repair_produces_verified_sequence():
    bad = CovarianceSequence(np.array([1.0, 0.9, 0.2]))
    fixed = repair_psd(bad)
    assert fixed.psd_status == "verified"
    assert fixed.values[0] == pytest.approx(1.0)


def test_sandwich_identity(identity_model):
    rep = sandwich_check(identity_model.link, identity_model.r_x,
                         identity_model.r_z, 1)
    assert rep.lower_constant == pytest.approx(1.0, abs=1e-9)
    assert rep.upper_constant == pytest.approx(1.0, abs=1e-12)
    assert rep.passed


def test_sandwich_skips_zero_lags():
    link = _identity_link()
    seq = CovarianceSequence(np.array([1.0, 0.0, 0.5]))
    result = calibrate(link, seq)
    assert result.sandwich.skipped_lags == (1,)
    assert any("independent" in note for note in result.warnings)


def test_even_rank_negative_target_warns():
    link = _h2_link()
    seq = CovarianceSequence(np.array([2.0, -0.05]))
    # -0.05 is below gamma = 0 for the pure even link: calibration refuses,
    # but the warning about even rank is raised first
    with pytest.warns(UserWarning, match="even Hermite rank"):
        with pytest.raises(AttainabilityError):
            calibrate(link, seq)


def test_calibration_csv_footer(exp_model):
    text = calibration_csv(exp_model[1])
    assert "# gamma" in text and "# psd_status = verified" in text
    assert text.splitlines()[0] == "tau,r_z,r_x,g_of_r_x,abs_error"


def test_covariance_sequence_validation():
    with pytest.raises(ValueError):
        CovarianceSequence(np.array([0.0, 0.1]))
    with pytest.raises(ValueError):
        CovarianceSequence(np.array([1.0, 1.2]))


def test_truncation_error_bound_surfaced(exp_model):
    model, _ = exp_model
    assert model.link.tail_mass_bound < 1e-12
