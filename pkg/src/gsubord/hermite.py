"""Probabilists' Hermite polynomials, expansions, and Hermite rank detection.

Everything here uses the probabilists' convention (weight e^{-x^2/2}):
H_0 = 1, H_1 = x, H_{k+1}(x) = x H_k(x) - k H_{k-1}(x), with
E[H_j(X) H_k(X)] = delta_jk * k! for X ~ N(0,1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

DEFAULT_TRUNCATION = 64
DEFAULT_QUAD_NODES = 256
DEFAULT_RANK_TOL = 1e-8

_STEP_CHUNK = 32768


class IntegrabilityError(ValueError):
    """The integrand is not square-integrable against the normal weight."""


def hermite_poly(k, x):
    """Evaluate H_k(x) via the three-term recursion.

    Accepts scalar or array ``x``; returns the same shape.
    """
    if k < 0:
        raise ValueError("degree must be >= 0")
    arr = np.asarray(x, dtype=float)
    prev = np.zeros_like(arr)
    cur = np.ones_like(arr)
    for j in range(k):
        prev, cur = cur, arr * cur - j * prev
    if np.isscalar(x) or arr.ndim == 0:
        return float(cur)
    return cur


def normalized_hermite_values(x, max_degree):
    """Table of h_k(x) = H_k(x)/sqrt(k!) for k = 0..max_degree.

    Returns an array of shape (max_degree+1,) + x.shape.  The normalized
    recursion h_{k+1} = (x h_k - sqrt(k) h_{k-1}) / sqrt(k+1) keeps values
    O(1) in the oscillatory region, which the plain recursion does not.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty((max_degree + 1,) + x.shape)
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = x
    for k in range(1, max_degree):
        out[k + 1] = (x * out[k] - math.sqrt(k) * out[k - 1]) / math.sqrt(k + 1)
    return out


def std_normal_rule(n):
    """Gauss-Hermite nodes/weights for the standard normal weight.

    Golub-Welsch on the probabilists' recursion (Jacobi off-diagonals
    sqrt(k)); weights sum to one.  Stable for large n, unlike
    numpy's hermgauss which overflows above ~300 nodes.
    """
    if n < 1:
        raise ValueError("need at least one node")
    nodes, vec = eigh_tridiagonal(np.zeros(n), np.sqrt(np.arange(1.0, n)))
    return nodes, vec[0] ** 2


@dataclass(frozen=True)
class HermiteExpansion:
    """Truncated Hermite coefficient vector of a function in L2(phi).

    coefficients[k] is alpha_k in f = sum alpha_k H_k; degree_mass[k] is
    k! alpha_k^2, the variance contribution of degree k.  tail_mass_bound
    is |E[f^2] - sum_k degree_mass[k]|, the Parseval defect of the
    truncation.
    """

    coefficients: np.ndarray
    degree_mass: np.ndarray
    l2_mass: float
    tail_mass_bound: float

    def __post_init__(self):
        self.coefficients.setflags(write=False)
        self.degree_mass.setflags(write=False)

    @property
    def truncation(self):
        return len(self.coefficients) - 1

    @property
    def link_weights(self):
        """k! alpha_k^2 for k >= 1, the covariance-link weights."""
        return self.degree_mass[1:]

    def reconstruct(self, x):
        """Evaluate sum_k alpha_k H_k(x)."""
        h = normalized_hermite_values(x, self.truncation)
        scaled = np.array(
            [self.coefficients[k] * math.sqrt(math.factorial(k))
             for k in range(self.truncation + 1)]
        )
        return scaled @ h

    def to_csv(self):
        """Dump rows (k, alpha_k, k!alpha_k^2), one per line."""
        lines = ["k,alpha_k,degree_mass"]
        for k, (a, m) in enumerate(zip(self.coefficients, self.degree_mass)):
            lines.append(f"{k},{float(a)!r},{float(m)!r}")
        return "\n".join(lines) + "\n"


def _build_expansion(scaled_coeffs, second_moment):
    # scaled_coeffs[k] = E[f h_k] = sqrt(k!) alpha_k
    K = len(scaled_coeffs) - 1
    mass = scaled_coeffs**2
    alphas = np.array(
        [scaled_coeffs[k] / math.sqrt(math.factorial(k)) for k in range(K + 1)]
    )
    l2 = float(mass.sum())
    tail = abs(float(second_moment) - l2)
    return HermiteExpansion(alphas, mass, l2, tail)


def expand(f, truncation=DEFAULT_TRUNCATION, quad_nodes=DEFAULT_QUAD_NODES):
    """Hermite coefficients of ``f`` by Gauss-Hermite quadrature.

    alpha_k = E[f(X) H_k(X)] / k!, accumulated against the normalized
    polynomials for stability.  Raises IntegrabilityError when the
    quadrature sum is not finite (f grows too fast for the weight).
    """
    if quad_nodes < truncation + 1:
        raise ValueError("quad_nodes must exceed the truncation degree")
    x, w = std_normal_rule(quad_nodes)
    with np.errstate(over="ignore", invalid="ignore"):
        fx = np.asarray(f(x), dtype=float)
        if fx.shape != x.shape:
            raise ValueError("integrand must be vectorized over nodes")
        wf = w * fx
        m2 = float(w @ fx**2)
    if not (np.all(np.isfinite(wf)) and np.isfinite(m2)):
        raise IntegrabilityError(
            "non-finite quadrature sum; integrand is not square-integrable "
            "against the normal weight"
        )
    h = normalized_hermite_values(x, truncation)
    return _build_expansion(h @ wf, m2)


def expand_step(edges, values, truncation=DEFAULT_TRUNCATION):
    """Exact Hermite coefficients of a step function.

    The function equals values[j] on (edges[j-1], edges[j]] with
    edges[-1] = -inf and edges[len(values)-1] = +inf implied, i.e.
    ``edges`` holds the len(values)-1 interior breakpoints.  Uses the
    closed form  int_a^b H_k phi dx = H_{k-1}(a)phi(a) - H_{k-1}(b)phi(b),
    so there is no quadrature error; preferred over ``expand`` for
    empirical transports where quadrature of the jumps converges slowly.
    """
    edges = np.asarray(edges, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(edges) != len(values) - 1:
        raise ValueError("need exactly len(values)-1 interior breakpoints")
    if len(values) == 0:
        raise ValueError("empty step function")

    from scipy.stats import norm

    K = truncation
    coeffs = np.zeros(K + 1)
    # Abel-summed form over the interior breakpoints: with rise_j the jump
    # c_{j+1} - c_j at edge a_j,
    #   E[f h_0] = c_last - sum_j rise_j Phi(a_j)
    #   E[f h_k] = sum_j rise_j h_{k-1}(a_j) phi(a_j) / sqrt(k),  k >= 1,
    # using int_a^b H_k phi dx = H_{k-1}(a)phi(a) - H_{k-1}(b)phi(b);
    # the boundary terms at +-inf vanish for k >= 1.
    rise = values[1:] - values[:-1]
    for start in range(0, len(edges), _STEP_CHUNK):
        a = edges[start:start + _STEP_CHUNK]
        j = rise[start:start + _STEP_CHUNK]
        phi_a = norm.pdf(a)
        h = normalized_hermite_values(a, max(K - 1, 0))
        coeffs[0] -= float(j @ norm.cdf(a))
        for k in range(1, K + 1):
            coeffs[k] += float(j @ (h[k - 1] * phi_a)) / math.sqrt(k)
    coeffs[0] += values[-1]

    # Exact second moment: each step carries the probability mass between
    # consecutive breakpoints.
    cdf_edges = np.concatenate([[0.0], norm.cdf(edges), [1.0]])
    m2 = float(values**2 @ np.diff(cdf_edges))
    return _build_expansion(coeffs, m2)


def rank(expansion, tol=DEFAULT_RANK_TOL):
    """Hermite rank: smallest k >= 1 with nonzero alpha_k.

    Uses the scale-free criterion k! alpha_k^2 > tol * l2_mass so the
    verdict does not depend on the overall variance.
    """
    mass = expansion.degree_mass
    scale = expansion.l2_mass
    for k in range(1, len(mass)):
        if mass[k] > tol * scale:
            return k
    raise ValueError("constant function, rank undefined")
