import numpy as np
import pytest

from gsubord import hermite
from gsubord.hermite import expand, expand_step, hermite_poly, rank, std_normal_rule

# closed forms for the first six polynomials
EXPLICIT = [
    lambda x: np.ones_like(x),
    lambda x: x,
    lambda x: x**2 - 1,
    lambda x: x**3 - 3 * x,
    lambda x: x**4 - 6 * x**2 + 3,
    lambda x: x**5 - 10 * x**3 + 15 * x,
]


def test_point_values():
    assert hermite_poly(0, 7.3) == 1.0
    assert hermite_poly(2, 2.0) == pytest.approx(3.0, abs=1e-14)
    assert hermite_poly(3, 1.0) == pytest.approx(-2.0, abs=1e-14)


def test_recursion_matches_explicit_forms():
    x = np.linspace(-4, 4, 81)
    for k, f in enumerate(EXPLICIT):
        assert np.max(np.abs(hermite_poly(k, x) - f(x))) < 1e-12


def test_orthogonality_by_quadrature():
    nodes, weights = std_normal_rule(64)
    table = hermite.normalized_hermite_values(nodes, 12)
    gram = (table * weights) @ table.T
    # normalized polynomials: Gram matrix should be the identity
    assert np.max(np.abs(gram - np.eye(13))) < 1e-10


def test_orthogonality_plain_polynomials():
    import math

    nodes, weights = std_normal_rule(48)
    for j in range(7):
        for k in range(7):
            val = float(weights @ (hermite_poly(j, nodes) * hermite_poly(k, nodes)))
            expected = math.factorial(k) if j == k else 0.0
            assert abs(val - expected) < 1e-10


def test_expand_identity_function():
    e = expand(lambda x: x, truncation=10)
    assert e.coefficients[1] == pytest.approx(1.0, abs=1e-13)
    others = np.delete(e.coefficients, 1)
    assert np.max(np.abs(others)) < 1e-12
    assert e.tail_mass_bound < 1e-12


def test_expand_h3_plus_h2():
    f = lambda x: hermite_poly(3, x) + hermite_poly(2, x)
    e = expand(f, truncation=10)
    assert e.coefficients[2] == pytest.approx(1.0, abs=1e-12)
    assert e.coefficients[3] == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(np.delete(e.coefficients, [2, 3]))) < 1e-11


def test_expand_square():
    e = expand(lambda x: x**2, truncation=8)
    assert e.coefficients[0] == pytest.approx(1.0, abs=1e-12)
    assert e.coefficients[2] == pytest.approx(1.0, abs=1e-12)


def test_parseval_tail_vanishes_for_polynomials():
    e = expand(lambda x: x**4 - 2 * x + 0.5, truncation=6)
    assert e.tail_mass_bound < 1e-10


def test_reconstruction_in_weighted_l2():
    f = lambda x: np.tanh(x) + 0.3 * x**2
    e = expand(f, truncation=40)
    nodes, weights = std_normal_rule(200)
    err = float(weights @ (f(nodes) - e.reconstruct(nodes)) ** 2)
    assert err <= e.tail_mass_bound + 1e-10


def test_integrability_error():
    with pytest.raises(hermite.IntegrabilityError):
        expand(lambda x: np.exp(x**4), truncation=4, quad_nodes=64)


def test_rank_fixtures():
    assert rank(expand(lambda x: x, truncation=8)) == 1
    assert rank(expand(lambda x: x**2, truncation=8)) == 2
    assert rank(expand(lambda x: hermite_poly(2, x), truncation=8)) == 2
    square_h2 = lambda x: hermite_poly(2, x) ** 2
    assert rank(expand(square_h2, truncation=8)) == 2


def test_rank_of_constant_is_undefined():
    e = expand(lambda x: np.full_like(x, 3.0), truncation=8)
    with pytest.raises(ValueError, match="rank undefined"):
        rank(e)


def test_expand_step_matches_quadrature_free_values():
    # f = 1{x > 0}: E[f] = 1/2, E[f H_1] = phi(0), E[f^2] = 1/2
    e = expand_step(np.array([0.0]), np.array([0.0, 1.0]), truncation=12)
    phi0 = 1.0 / np.sqrt(2 * np.pi)
    assert e.coefficients[0] == pytest.approx(0.5, abs=1e-14)
    assert e.coefficients[1] == pytest.approx(phi0, abs=1e-14)
    assert e.l2_mass + e.tail_mass_bound == pytest.approx(0.5, abs=1e-12)


def test_expand_step_three_point_mean():
    from scipy.stats import norm

    edges = norm.ppf([1 / 3, 2 / 3])
    e = expand_step(edges, np.array([1.0, 2.0, 3.0]), truncation=16)
    assert e.coefficients[0] == pytest.approx(2.0, abs=1e-12)


def test_rule_is_stable_at_high_node_counts():
    for n in (200, 400, 800):
        x, w = std_normal_rule(n)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        assert float(w @ x**6) == pytest.approx(15.0, rel=1e-11)
