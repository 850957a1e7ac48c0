"""Covariance link between latent Gaussian correlation and observed covariance.

For a transport with Hermite weights w_k = k! alpha_k^2 the observed
autocovariance at latent correlation beta is g(beta) = sum_k w_k beta^k.
This module evaluates g, inverts it lag by lag to calibrate the latent
covariance from a target sequence, validates positive semidefiniteness of
the result, and checks the two-sided power bound |r_z| <~ |r_X|^q.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.linalg import eigvalsh, toeplitz

from . import hermite

INVERT_REL_TOL = 1e-11
GAMMA_TOL = 1e-12
PSD_TOL = 1e-8

EXT_ZERO = "zero"
EXT_FGN = "fgn"


class AttainabilityError(ValueError):
    """Target covariance below the attainability floor gamma = min g."""

    def __init__(self, message, gamma, lags=None):
        super().__init__(message)
        self.gamma = gamma
        self.lags = tuple(lags) if lags is not None else ()


@dataclass(frozen=True)
class CovarianceSequence:
    """Autocovariance values r(0..L) with a PSD validity status.

    ``extension`` records how the sequence continues beyond lag L for
    simulation and long-run sums: "zero" truncates, "fgn" continues with the
    fractional-Gaussian-noise second-difference formula using ``hurst``.
    """

    values: np.ndarray
    psd_status: str = "unchecked"      # "verified" | "failed" | "unchecked"
    psd_witness: Optional[float] = None
    extension: str = EXT_ZERO
    hurst: Optional[float] = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        vals.setflags(write=False)
        if len(vals) == 0 or vals[0] <= 0:
            raise ValueError("need r(0) > 0")
        if np.max(np.abs(vals)) > vals[0] * (1 + 1e-12):
            raise ValueError("|r(tau)| <= r(0) violated (Cauchy-Schwarz)")
        if self.extension == EXT_FGN and self.hurst is None:
            raise ValueError("fgn extension requires a hurst parameter")

    @property
    def max_lag(self):
        return len(self.values) - 1

    def extended(self, max_lag):
        """Values on lags 0..max_lag, continued by the extension rule."""
        return self.at(np.arange(max_lag + 1))

    def at(self, taus):
        """Values at arbitrary nonnegative lags, using the extension rule."""
        taus = np.asarray(taus, dtype=int)
        out = np.zeros(taus.shape, dtype=float)
        inside = taus <= self.max_lag
        out[inside] = self.values[taus[inside]]
        if self.extension == EXT_FGN and not np.all(inside):
            t = taus[~inside].astype(float)
            h2 = 2.0 * self.hurst
            out[~inside] = 0.5 * ((t + 1) ** h2 - 2 * t**h2 + (t - 1) ** h2)
        return out


def geometric_cov(rho, max_lag, scale=1.0):
    """r(tau) = scale * rho^tau; rho = 0 gives white noise."""
    if not -1.0 < rho < 1.0:
        raise ValueError("geometric decay parameter must lie in (-1, 1)")
    vals = scale * rho ** np.arange(max_lag + 1, dtype=float)
    return CovarianceSequence(vals)


@dataclass(frozen=True)
class PsdReport:
    status: str
    min_eigenvalue: float
    circulant_min: float


def psd_check(seq, tol=PSD_TOL):
    """PSD status of the symmetric Toeplitz matrix of the sequence.

    Verified iff the smallest eigenvalue is >= -tol * r(0).  Also reports
    the minimum of the even circulant extension spectrum, which is what the
    circulant-embedding simulator will see.
    """
    vals = seq.values if isinstance(seq, CovarianceSequence) else np.asarray(seq, float)
    lam_min = float(eigvalsh(toeplitz(vals)).min())
    circ = np.concatenate([vals, vals[-2:0:-1]]) if len(vals) > 2 else vals
    circ_min = float(np.fft.fft(circ).real.min())
    status = "verified" if lam_min >= -tol * vals[0] else "failed"
    return PsdReport(status, lam_min, circ_min)


def with_psd_status(seq, tol=PSD_TOL):
    report = psd_check(seq, tol)
    witness = None if report.status == "verified" else report.min_eigenvalue
    return replace(seq, psd_status=report.status, psd_witness=witness), report


def repair_psd(seq, tol=PSD_TOL):
    """Nearest-PSD projection by clipping the circulant extension spectrum.

    Returns a unit-variance sequence; the clip inflates r(0) slightly, so the
    result is rescaled and must be treated as an approximation of the input.
    """
    vals = seq.values
    n = len(vals)
    circ = np.concatenate([vals, vals[-2:0:-1]]) if n > 2 else vals
    lam = np.fft.fft(circ).real
    lam = np.clip(lam, 0.0, None)
    fixed = np.fft.ifft(lam).real[:n]
    fixed = fixed / fixed[0] * vals[0]
    repaired = CovarianceSequence(np.clip(fixed, -fixed[0], fixed[0]),
                                  extension=seq.extension, hurst=seq.hurst)
    repaired, _ = with_psd_status(repaired, tol)
    return repaired


@dataclass(frozen=True)
class CovarianceLink:
    """g(beta) = sum_{k>=1} w_k beta^k with w_k = k! alpha_k^2 >= 0.

    ``gamma`` is min g over [-1, 1], the attainability floor for covariance
    targets; ``variance`` = g(1) equals the truncated variance of the
    transport.  ``tail_mass_bound`` carries the expansion's Parseval defect,
    which bounds the truncation error |g_K(beta) - g(beta)| on [-1, 1].
    """

    weights: np.ndarray
    gamma: float
    tail_mass_bound: float = 0.0

    def __post_init__(self):
        self.weights.setflags(write=False)

    @property
    def variance(self):
        return float(self.weights.sum())

    def effective_rank(self, tol=hermite.DEFAULT_RANK_TOL):
        total = self.variance
        for k, w in enumerate(self.weights, start=1):
            if w > tol * total:
                return k
        raise ValueError("constant function, rank undefined")


def _horner(weights, beta):
    acc = np.zeros_like(np.asarray(beta, dtype=float))
    for w in weights[::-1]:
        acc = acc * beta + w
    return acc * beta


def link_value(link, beta):
    """g(beta); domain error outside [-1, 1]."""
    arr = np.asarray(beta, dtype=float)
    if np.any(np.abs(arr) > 1.0 + 1e-15):
        raise ValueError("link argument must lie in [-1, 1]")
    out = _horner(link.weights, np.clip(arr, -1.0, 1.0))
    return float(out) if np.isscalar(beta) else out


def _gamma_of_weights(weights):
    # g >= 0 on [0, 1], so the minimum over [-1, 1] is attained on [-1, 0].
    grid = np.linspace(-1.0, 0.0, 2049)
    vals = _horner(weights, grid)
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    dweights = weights * np.arange(1, len(weights) + 1)

    def dg(beta):
        acc = 0.0
        for w in dweights[::-1]:
            acc = acc * beta + w
        return acc

    if dg(lo) < 0.0 < dg(hi):
        while hi - lo > GAMMA_TOL:
            mid = 0.5 * (lo + hi)
            if dg(mid) < 0.0:
                lo = mid
            else:
                hi = mid
        best = 0.5 * (lo + hi)
    else:  # flat or edge minimum: golden-section refinement
        invphi = (math.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        c, d = b - invphi * (b - a), a + invphi * (b - a)
        while b - a > GAMMA_TOL:
            if _horner(weights, np.array(c)) < _horner(weights, np.array(d)):
                b, d = d, c
                c = b - invphi * (b - a)
            else:
                a, c = c, d
                d = a + invphi * (b - a)
        best = 0.5 * (a + b)
    candidates = np.array([-1.0, best, 0.0])
    return float(np.min(_horner(weights, candidates)))


def link_from_expansion(expansion):
    """Covariance link of a (centered) transport expansion."""
    weights = np.asarray(expansion.link_weights, dtype=float)
    if weights.sum() <= 0:
        raise ValueError("degenerate transport: zero variance link")
    return CovarianceLink(weights, _gamma_of_weights(weights),
                          expansion.tail_mass_bound)


def invert(link, target, tol=INVERT_REL_TOL):
    """beta in [-1, 1] with g(beta) = target.

    Nonnegative targets have a unique root in [0, 1] found by monotone
    bisection.  Negative targets take the grid-bracketed root closest to
    zero, which keeps r_X small when r_z is small.
    """
    g1 = link.variance
    ftol = tol * g1
    if target > g1 + ftol:
        raise ValueError(f"target {target:g} exceeds the link maximum g(1) = {g1:g}")
    if target < link.gamma - ftol:
        raise AttainabilityError(
            f"target {target:g} below the attainability floor gamma = {link.gamma:g}",
            gamma=link.gamma,
        )
    w = link.weights
    if target == 0.0:
        return 0.0

    def g(beta):
        return float(_horner(w, np.array(beta)))

    if target >= 0.0:
        lo, hi = 0.0, 1.0
        if target >= g1:
            return 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            val = g(mid)
            if abs(val - target) <= ftol:
                return mid
            if val < target:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    grid = np.linspace(-1.0, 0.0, 4097)
    vals = _horner(w, grid) - target
    sign = np.sign(vals)
    crossings = np.nonzero(sign[:-1] * sign[1:] <= 0)[0]
    if len(crossings) == 0:
        # target within tolerance of the floor: return the floor's argmin
        i = int(np.argmin(np.abs(vals)))
        return float(grid[i])
    i = int(crossings[-1])  # bracket closest to zero
    lo, hi = grid[i], grid[i + 1]
    flo = vals[i]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = g(mid) - target
        if abs(val) <= ftol:
            return mid
        if (val < 0) == (flo < 0):
            lo, flo = mid, val
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class SandwichReport:
    lower_constant: float      # largest feasible c in c|r_X|^q <= |r_z|
    upper_constant: float      # C = r_z(0)
    upper_holds: bool
    passed: bool
    skipped_lags: tuple


def sandwich_check(link, r_x, r_z, q):
    """Check c |r_X(tau)|^q <= |r_z(tau)| <= C |r_X(tau)|^q with C = r_z(0).

    The upper bound is exact for calibrated pairs; the reported c is the
    smallest observed ratio |r_z|/|r_X|^q over lags with r_X != 0.  Lags with
    r_X = 0 (hence r_z = 0) are skipped and flagged.
    """
    rx = np.asarray(r_x.values if isinstance(r_x, CovarianceSequence) else r_x, float)
    rz = np.asarray(r_z.values if isinstance(r_z, CovarianceSequence) else r_z, float)
    if len(rx) != len(rz):
        raise ValueError("sequences must have equal length")
    C = float(rz[0])
    skipped = []
    ratios = []
    upper_ok = True
    slack = 1e-12 * max(C, 1.0)
    for tau in range(len(rx)):
        if rx[tau] == 0.0:
            skipped.append(tau)
            if abs(rz[tau]) > slack:
                upper_ok = False
            continue
        bound = C * abs(rx[tau]) ** q
        if abs(rz[tau]) > bound + slack:
            upper_ok = False
        ratios.append(abs(rz[tau]) / abs(rx[tau]) ** q)
    c = float(min(ratios)) if ratios else 0.0
    return SandwichReport(c, C, upper_ok, upper_ok and c > 0.0,
                          tuple(skipped))


@dataclass(frozen=True)
class CalibrationResult:
    r_x: CovarianceSequence
    r_z: CovarianceSequence
    link: CovarianceLink
    rank: int
    residuals: np.ndarray              # |g(r_X(tau)) - r_z(tau)|
    sandwich: SandwichReport
    psd: PsdReport
    repaired: Optional[CovarianceSequence]
    warnings: tuple

    @property
    def max_residual(self):
        return float(self.residuals.max())


def calibrate(link, r_z, tol=INVERT_REL_TOL, psd_tol=PSD_TOL, repair=True):
    """Latent covariance r_X with g(r_X(tau)) = r_z(tau) per lag, r_X(0) = 1.

    Unattainable lags raise one aggregated AttainabilityError.  A PSD failure
    does not abort: the sequence comes back with failed status plus the
    clipped-spectrum repair (when ``repair``), clearly labeled.
    """
    g1 = link.variance
    targets = np.asarray(r_z.values, dtype=float)
    slack = 1e-8 * g1 + 2.0 * link.tail_mass_bound
    if abs(targets[0] - g1) > slack:
        raise ValueError(
            f"r_z(0) = {targets[0]:g} does not match the model variance "
            f"g(1) = {g1:g}; rescale the target covariance to the marginal"
        )

    notes = []
    q = link.effective_rank()
    negatives = [int(t) for t in np.nonzero(targets < 0)[0]]
    if q % 2 == 0 and negatives:
        notes.append(
            f"even Hermite rank {q} with negative target lags {negatives}: "
            "small negative covariances are at the edge of the model class"
        )
        warnings.warn(notes[-1], stacklevel=2)

    betas = np.empty_like(targets)
    betas[0] = 1.0
    bad = []
    for tau in range(1, len(targets)):
        try:
            betas[tau] = invert(link, targets[tau], tol)
        except AttainabilityError:
            bad.append(tau)
    if bad:
        raise AttainabilityError(
            f"targets at lags {bad} lie below the attainability floor "
            f"gamma = {link.gamma:g}",
            gamma=link.gamma,
            lags=bad,
        )

    zero_lags = [int(t) for t in np.nonzero(betas[1:] == 0.0)[0] + 1]
    if zero_lags:
        notes.append(
            f"r_X = 0 at lags {zero_lags}: the model makes those pairs independent"
        )

    r_x = CovarianceSequence(betas, extension=r_z.extension, hurst=r_z.hurst)
    r_x, report = with_psd_status(r_x, psd_tol)
    repaired = None
    if report.status == "failed" and repair:
        repaired = repair_psd(r_x, psd_tol)
        notes.append(
            "calibrated sequence is not PSD; repaired copy via circulant "
            "eigenvalue clipping attached"
        )

    residuals = np.abs(link_value(link, betas) - targets)
    residuals[0] = abs(g1 - targets[0])
    sandwich = sandwich_check(link, r_x, r_z, q)
    return CalibrationResult(r_x, r_z, link, q, residuals, sandwich, report,
                             repaired, tuple(notes))


def calibration_csv(result):
    """Per-lag report rows plus a footer with gamma, C, c, psd_status."""
    lines = ["tau,r_z,r_x,g_of_r_x,abs_error"]
    g_vals = link_value(result.link, result.r_x.values)
    for tau, (rz, rx, g) in enumerate(
        zip(result.r_z.values, result.r_x.values, g_vals)
    ):
        err = float(result.residuals[tau])
        lines.append(f"{tau},{float(rz)!r},{float(rx)!r},{float(g)!r},{err!r}")
    lines.append(f"# gamma = {result.link.gamma!r}")
    lines.append(f"# C = {result.sandwich.upper_constant!r}")
    lines.append(f"# c = {result.sandwich.lower_constant!r}")
    lines.append(f"# psd_status = {result.r_x.psd_status}")
    if result.sandwich.skipped_lags:
        lines.append(f"# sandwich_skipped_lags = {list(result.sandwich.skipped_lags)}")
    for note in result.warnings:
        lines.append(f"# note: {note}")
    return "\n".join(lines) + "\n"
