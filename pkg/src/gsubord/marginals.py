"""One-dimensional marginal distributions and the normal-to-marginal transport.

A marginal is exposed through its CDF, generalized quantile
F^{-1}(y) = inf{x : F(x) >= y}, and moments.  The transport
f(x) = F^{-1}(Phi(x)) maps a standard normal variable to the marginal law
and is the modeling function used throughout the package.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from . import hermite

_TINY = float(np.finfo(float).tiny)

PARAMETRIC_NAMES = ("normal", "exponential", "uniform", "chisq1", "student_t(df)")


class DegenerateMarginalError(ValueError):
    """Distribution concentrated at a point (or numerically unresolved)."""


@dataclass(frozen=True)
class MarginalDistribution:
    """A one-dimensional law: parametric (frozen scipy dist) or empirical.

    ``fourth_moment`` is the raw moment E[z^4]; None means unknown or
    infinite.  ``discrete`` marks laws with atoms (all empirical marginals);
    reports flag these because covariance targets may not be exactly
    attainable for atomic marginals.
    """

    name: str
    mean: float
    variance: float
    fourth_moment: Optional[float]
    dist: object = None
    sample: Optional[np.ndarray] = None
    discrete: bool = False

    def __post_init__(self):
        if self.sample is not None:
            self.sample.setflags(write=False)
        if not (math.isfinite(self.variance) and self.variance >= 0):
            raise ValueError("marginal variance must be finite and nonnegative")

    @property
    def is_empirical(self):
        return self.sample is not None

    def cdf(self, x):
        if self.is_empirical:
            x = np.asarray(x, dtype=float)
            return np.searchsorted(self.sample, x, side="right") / len(self.sample)
        return self.dist.cdf(x)

    def quantile(self, y):
        """Generalized inverse inf{x : F(x) >= y} for y in (0,1)."""
        arr = np.asarray(y, dtype=float)
        if np.any(arr <= 0.0) or np.any(arr >= 1.0):
            raise ValueError("quantile argument must lie strictly in (0,1)")
        if self.is_empirical:
            n = len(self.sample)
            idx = np.ceil(n * arr).astype(int) - 1
            out = self.sample[np.clip(idx, 0, n - 1)]
        else:
            # complementary branch in the upper tail avoids cancellation in 1-y
            out = np.where(arr <= 0.5, self.dist.ppf(arr), self.dist.isf(1.0 - arr))
        return float(out) if np.isscalar(y) else out


def quantile(d, y):
    """Generalized quantile of ``d`` at probability ``y``."""
    return d.quantile(y)


def _from_frozen(name, dist, fourth_moment=None, discrete=False):
    mean = float(dist.mean())
    var = float(dist.var())
    if not (math.isfinite(mean) and math.isfinite(var) and var > 0):
        raise ValueError(f"marginal {name!r} lacks a finite positive variance")
    if fourth_moment is None:
        m4 = float(dist.moment(4))
        fourth_moment = m4 if math.isfinite(m4) else None
    return MarginalDistribution(name, mean, var, fourth_moment, dist=dist,
                                discrete=discrete)


def normal():
    return _from_frozen("normal", stats.norm(), fourth_moment=3.0)


def exponential():
    return _from_frozen("exponential", stats.expon(), fourth_moment=24.0)


def uniform():
    return _from_frozen("uniform", stats.uniform(), fourth_moment=0.2)


def chisq1():
    return _from_frozen("chisq1", stats.chi2(1.0), fourth_moment=105.0)


def student_t(df):
    if df <= 2:
        raise ValueError("student_t needs df > 2 for a finite variance")
    return _from_frozen(f"student_t({df:g})", stats.t(df))


def parse_marginal(spec):
    """Resolve a marginal named by string, e.g. "exponential", "student_t(5)"."""
    spec = spec.strip()
    simple = {"normal": normal, "exponential": exponential, "uniform": uniform,
              "chisq1": chisq1}
    if spec in simple:
        return simple[spec]()
    m = re.fullmatch(r"student_t\(([^)]+)\)", spec)
    if m:
        return student_t(float(m.group(1)))
    raise ValueError(
        f"unknown marginal {spec!r}; expected one of {', '.join(PARAMETRIC_NAMES)} "
        "or a CSV path for an empirical marginal"
    )


def empirical_from_sample(data, min_n=30):
    """Empirical marginal with step CDF 1/n; moments from the sample."""
    arr = np.asarray(data, dtype=float).ravel()
    if len(arr) < min_n:
        raise ValueError(f"need at least {min_n} observations, got {len(arr)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("sample contains NaN or infinite entries")
    srt = np.sort(arr)
    mean = float(srt.mean())
    var = float(((srt - mean) ** 2).mean())
    m4 = float((srt**4).mean())
    return MarginalDistribution(f"empirical(n={len(srt)})", mean, var, m4,
                                sample=srt, discrete=True)


def load_marginal_csv(path, min_n=30):
    """Single-column CSV, optional header, one real per row."""
    rows = []
    with open(path) as fh:
        for i, line in enumerate(fh):
            token = line.strip().split(",")[0]
            if not token:
                continue
            try:
                rows.append(float(token))
            except ValueError:
                if i == 0:
                    continue  # header
                raise ValueError(f"{path}: non-numeric value {token!r} on line {i+1}")
    return empirical_from_sample(rows, min_n=min_n)


@dataclass(frozen=True)
class Transport:
    """x -> F^{-1}(Phi(x)), optionally recentered so E f(X) = 0.

    The uncentered evaluation carries the marginal's natural scale; the
    marginal mean is stored separately so the centered version used by the
    expansion machinery is always available.
    """

    marginal: MarginalDistribution
    centered: bool = False

    @property
    def mean(self):
        return self.marginal.mean

    def __call__(self, x):
        scalar = np.isscalar(x)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        d = self.marginal
        if d.is_empirical:
            n = len(d.sample)
            u = stats.norm.cdf(x)
            idx = np.clip(np.ceil(n * u).astype(int) - 1, 0, n - 1)
            out = d.sample[idx].astype(float)
        else:
            out = np.empty_like(x)
            lo = x <= 0
            # evaluate each branch through the accurate tail of Phi
            u = np.clip(stats.norm.cdf(x[lo]), _TINY, 1.0)
            out[lo] = d.dist.ppf(u)
            v = np.clip(stats.norm.sf(x[~lo]), _TINY, 1.0)
            out[~lo] = d.dist.isf(v)
        if self.centered:
            out = out - d.mean
        return float(out[0]) if scalar else out

    def step_representation(self):
        """(interior breakpoints, step values) for empirical marginals."""
        if not self.marginal.is_empirical:
            raise ValueError("step representation exists only for empirical marginals")
        n = len(self.marginal.sample)
        edges = stats.norm.ppf(np.arange(1, n) / n)
        values = self.marginal.sample.astype(float)
        if self.centered:
            values = values - self.marginal.mean
        return edges, values

    def hermite_expansion(self, truncation=hermite.DEFAULT_TRUNCATION,
                          quad_nodes=hermite.DEFAULT_QUAD_NODES):
        """Expansion of the evaluation; exact piecewise for empirical laws."""
        if self.marginal.is_empirical:
            edges, values = self.step_representation()
            return hermite.expand_step(edges, values, truncation)
        return hermite.expand(self, truncation, quad_nodes)

    def moment(self, p, quad_nodes=hermite.DEFAULT_QUAD_NODES):
        """E[f(X)^p] of the evaluation under X ~ N(0,1)."""
        if self.marginal.is_empirical:
            edges, values = self.step_representation()
            cdf_edges = np.concatenate([[0.0], stats.norm.cdf(edges), [1.0]])
            return float(values**p @ np.diff(cdf_edges))
        x, w = hermite.std_normal_rule(quad_nodes)
        return float(w @ self(x) ** p)


def build_transport(d, centered=False):
    """Transport of Theorem-style construction: quantile composed with Phi."""
    if not math.isfinite(d.variance):
        raise ValueError("transport requires a finite-variance marginal")
    return Transport(d, centered=centered)


def verify_rank_one(t, quad_nodes=200, tol=1e-8):
    """Numeric E[f(X) X]; strictly positive for non-degenerate marginals.

    For empirical marginals the value is exact:
    E[f X] = sum over jumps of (c_{j+1} - c_j) phi(a_j).
    Raises DegenerateMarginalError when the value cannot be resolved above
    tol * sqrt(variance).
    """
    d = t.marginal
    if d.is_empirical:
        edges, values = t.step_representation()
        value = float((values[1:] - values[:-1]) @ stats.norm.pdf(edges))
    else:
        x, w = hermite.std_normal_rule(quad_nodes)
        value = float(w @ (x * t(x)))
    threshold = tol * math.sqrt(max(d.variance, 0.0))
    if d.variance <= 0 or value <= threshold:
        raise DegenerateMarginalError(
            "degenerate or numerically unresolved rank: E[f(X)X] = "
            f"{value:.3e} is not positive beyond tolerance"
        )
    return value
