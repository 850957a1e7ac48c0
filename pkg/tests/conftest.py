import pytest

import gsubord as gs


@pytest.fixture(scope="session")
def shipped_marginals():
    return {
        "normal": gs.parse_marginal("normal"),
        "exponential": gs.parse_marginal("exponential"),
        "uniform": gs.parse_marginal("uniform"),
        "chisq1": gs.parse_marginal("chisq1"),
        "student_t(5)": gs.parse_marginal("student_t(5)"),
    }


@pytest.fixture(scope="session")
def exp_model():
    """Exponential marginal calibrated against r_z(tau) = 0.5^tau, L = 20."""
    marginal = gs.parse_marginal("exponential")
    model, calib = gs.build_model(marginal, gs.geometric_cov(0.5, 20))
    return model, calib


@pytest.fixture(scope="session")
def identity_model():
    """Standard normal marginal (identity transport), r_z(tau) = 0.5^tau."""
    model, _ = gs.build_model(gs.parse_marginal("normal"), gs.geometric_cov(0.5, 20))
    return model


@pytest.fixture(scope="session")
def white_noise_model():
    model, _ = gs.build_model(gs.parse_marginal("normal"), gs.geometric_cov(0.0, 20))
    return model


@pytest.fixture(scope="session")
def sample_series_csv(tmp_path_factory):
    """Deterministic bundled-style dataset: one short subordinated path."""
    marginal = gs.parse_marginal("exponential")
    model, _ = gs.build_model(marginal, gs.geometric_cov(0.4, 10))
    path = gs.simulate_subordinated(model, 3000, 11)
    target = tmp_path_factory.mktemp("data") / "sample_series.csv"
    target.write_text("\n".join(repr(float(v)) for v in path.values) + "\n")
    return target
