"""Brute-force reference computations used to cross-check the fast paths.

These stay deliberately independent of the covariance-link machinery:
expectations come straight from Gauss-Hermite quadrature, and polynomial
Hermite coefficients come from exact Gaussian moment tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hermite import HermiteExpansion, std_normal_rule

DEFAULT_NODES = 200


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and probability weights for expectations under N(0,1)."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    @classmethod
    def gauss_hermite(cls, n=DEFAULT_NODES):
        nodes, weights = std_normal_rule(n)
        return cls(nodes, weights)


def gauss_expect(f, rule=None):
    """E[f(X)] for X ~ N(0,1) by quadrature."""
    if rule is None:
        rule = QuadratureRule.gauss_hermite()
    vals = np.asarray(f(rule.nodes), dtype=float)
    if not np.all(np.isfinite(vals * rule.weights)):
        raise ValueError("non-finite integrand value at quadrature node")
    return float(rule.weights @ vals)


def bivariate_gauss_expect(f, g, rho, rule=None):
    """E[f(X)g(Y)] for standard bivariate normal (X, Y) with correlation rho.

    Substitutes Y = rho X + sqrt(1-rho^2) Z on a tensor grid, so only
    one-dimensional rules are needed.
    """
    if abs(rho) > 1:
        raise ValueError("correlation must lie in [-1, 1]")
    if rule is None:
        rule = QuadratureRule.gauss_hermite()
    x = rule.nodes
    w = rule.weights
    fx = np.asarray(f(x), dtype=float)
    y = rho * x[:, None] + math.sqrt(max(0.0, 1.0 - rho * rho)) * x[None, :]
    gy = np.asarray(g(y.ravel()), dtype=float).reshape(y.shape)
    inner = gy @ w
    return float(w @ (fx * inner))


def _double_factorial_odd(m):
    # (m-1)!! for even m: E[X^m] for X ~ N(0,1)
    return math.factorial(m) // (2 ** (m // 2) * math.factorial(m // 2))


def _gaussian_moment(m):
    return 0 if m % 2 else _double_factorial_odd(m)


def _hermite_monomial_coeffs(max_degree):
    # rows of exact integer monomial coefficients of H_0..H_K (ascending powers)
    rows = [[1], [0, 1]]
    for k in range(1, max_degree):
        prev, cur = rows[k - 1], rows[k]
        nxt = [0] * (k + 2)
        for p, c in enumerate(cur):
            nxt[p + 1] += c
        for p, c in enumerate(prev):
            nxt[p] -= k * c
        rows.append(nxt)
    return rows[: max_degree + 1]


def poly_hermite_coeffs(coeffs):
    """Exact Hermite expansion of a polynomial given ascending monomial coeffs.

    alpha_k = E[p(X) H_k(X)] / k! evaluated through the Gaussian moment table
    (odd moments 0, E[X^{2m}] = (2m-1)!!), so there is no quadrature error.
    """
    coeffs = list(coeffs)
    while len(coeffs) > 1 and coeffs[-1] == 0:
        coeffs.pop()
    deg = len(coeffs) - 1
    hrows = _hermite_monomial_coeffs(deg)

    alphas = np.empty(deg + 1)
    mass = np.empty(deg + 1)
    for k in range(deg + 1):
        acc = 0.0
        for m, pm in enumerate(coeffs):
            if pm == 0:
                continue
            acc += pm * sum(
                c * _gaussian_moment(m + p) for p, c in enumerate(hrows[k]) if c
            )
        fact = math.factorial(k)
        alphas[k] = acc / fact
        mass[k] = acc * acc / fact

    # E[p^2] exactly from the moment table via the self-convolution of p
    sq = np.convolve(coeffs, coeffs)
    m2 = float(sum(c * _gaussian_moment(m) for m, c in enumerate(sq)))
    l2 = float(mass.sum())
    return HermiteExpansion(alphas, mass, l2, abs(m2 - l2))
