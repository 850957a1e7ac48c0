"""Mean and autocovariance estimators, their exact finite-T decomposition,
the long-run variance, and the limiting covariance matrix of the joint
autocovariance CLT.

Three normalizations ship: acov_hat divides by T (PSD-preserving, the one
the limit theorems are stated for), acov_tilde divides by T - tau, and
acov_bar is the uncentered product average.  They satisfy exactly
hat = bar - mean^2 + R_T per lag, which ``lemma_decomposition`` returns
piece by piece.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import gaussim
from .covlink import EXT_FGN
from .gaussim import SamplePath

SIGMA_TRUNC_REL = 1e-3
SIGMA_TRUNC_RUN = 5


class NonSummableCovarianceError(ValueError):
    """The model's autocovariances are not absolutely summable (long memory)."""


class FourthMomentError(ValueError):
    """The marginal's fourth moment is unknown or infinite."""


def _values(z):
    if isinstance(z, SamplePath):
        return z.values
    arr = np.asarray(z, dtype=float)
    if arr.ndim != 1:
        raise ValueError("expected a one-dimensional series")
    return arr


def mean_est(z):
    v = _values(z)
    if len(v) == 0:
        raise ValueError("empty series")
    return float(v.mean())


def _check_lag(tau, T):
    if not 0 <= tau < T:
        raise ValueError(f"lag {tau} out of range for series length {T}")


def acov_hat(z, tau):
    """(1/T) sum_{t<=T-tau} (z_t - m)(z_{t+tau} - m)."""
    v = _values(z)
    T = len(v)
    _check_lag(tau, T)
    c = v - v.mean()
    return float(c[: T - tau] @ c[tau:]) / T


def acov_tilde(z, tau):
    """Same sum as acov_hat but divided by T - tau."""
    v = _values(z)
    T = len(v)
    _check_lag(tau, T)
    c = v - v.mean()
    return float(c[: T - tau] @ c[tau:]) / (T - tau)


def acov_bar(z, tau):
    """(1/T) sum_{t<=T-tau} z_t z_{t+tau}, no mean correction."""
    v = _values(z)
    T = len(v)
    _check_lag(tau, T)
    return float(v[: T - tau] @ v[tau:]) / T


def acov_hat_all(z, max_lag):
    v = _values(z)
    T = len(v)
    _check_lag(max_lag, T)
    c = v - v.mean()
    return np.array([float(c[: T - tau] @ c[tau:]) / T for tau in range(max_lag + 1)])


@dataclass(frozen=True)
class LemmaParts:
    acov_bar: float
    mean_sq: float
    remainder: float
    reconstructed: float


def lemma_decomposition(z, tau):
    """Exact split acov_hat = acov_bar - m^2 + R_T with
    R_T = (m/T)(tail sum + head sum) - (tau/T) m^2, and R_T = 0 at tau = 0.
    """
    v = _values(z)
    T = len(v)
    _check_lag(tau, T)
    m = float(v.mean())
    bar = float(v[: T - tau] @ v[tau:]) / T
    if tau == 0:
        remainder = 0.0
    else:
        remainder = (
            m / T * float(v[T - tau:].sum())
            + m / T * float(v[:tau].sum())
            - tau / T * m * m
        )
    return LemmaParts(bar, m * m, remainder, bar - m * m + remainder)


def _analytic_autocov(model, tau_values):
    from .covlink import link_value

    return link_value(model.link, model.r_x.at(tau_values))


def _summability_guard(model):
    r_x = model.r_x
    if r_x.extension == EXT_FGN and r_x.hurst is not None:
        tail_exponent = model.rank * (2.0 * r_x.hurst - 2.0)
        if tail_exponent >= -1.0:
            raise NonSummableCovarianceError(
                "the model's autocovariances decay like tau^"
                f"{tail_exponent:.3g} and are not absolutely summable, so the "
                "sqrt(T) normalization does not apply; run the long-memory "
                "scan (CLI command 'scan') instead"
            )


def longrun_variance(obj, mode="analytic_from_link", bandwidth=None):
    """sigma^2 = r_z(0) + 2 sum_{tau>=1} r_z(tau).

    analytic_from_link: sums g(r_X(tau)) over the extension of a calibrated
    model, refusing non-summable (long-memory) cases.  plugin_from_path:
    Bartlett-tapered estimate from one observed series with default
    bandwidth floor(T^(1/3)).
    """
    if mode == "analytic_from_link":
        model = obj
        _summability_guard(model)
        L = model.r_x.max_lag
        total = float(model.r_z.values[0])
        tail_start = 1
        block = max(L, 64)
        # geometric blocks until the extension's contribution is negligible
        while tail_start < 10_000_000:
            taus = np.arange(tail_start, tail_start + block)
            vals = _analytic_autocov(model, taus)
            total += 2.0 * float(vals.sum())
            if np.max(np.abs(vals)) < 1e-14 * model.variance or (
                model.r_x.extension != EXT_FGN and tail_start > L
            ):
                break
            tail_start += block
            block *= 2
        if total < -1e-8 * model.variance:
            raise ValueError(f"analytic long-run variance came out negative: {total:g}")
        return max(total, 0.0)

    if mode == "plugin_from_path":
        v = _values(obj)
        T = len(v)
        b = int(T ** (1.0 / 3.0)) if bandwidth is None else int(bandwidth)
        b = min(max(b, 0), T - 1)
        acf = acov_hat_all(v, b)
        taper = 1.0 - np.arange(1, b + 1) / (b + 1.0)
        total = float(acf[0] + 2.0 * (taper @ acf[1:]))
        if total < -1e-8 * acf[0]:
            warnings.warn(
                f"plugin long-run variance is negative ({total:g}); "
                "the Bartlett window may be too short for this series",
                stacklevel=2,
            )
        return total

    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class SigmaReport:
    matrix: np.ndarray
    clip_magnitude: float
    truncation_lag: int

    def __post_init__(self):
        self.matrix.setflags(write=False)


def _product_cross_sums(w, k, max_tau):
    """A[i, j, tau] = time average of w_{t+tau} w_{t+tau+i} w_t w_{t+j}."""
    T = len(w)
    N = T - k - max_tau
    if N < 32:
        raise ValueError("series too short for the requested lags")
    u = [w[i: i + T - k] for i in range(k + 1)]  # aligned product factors
    prod = [w[: T - k] * ui for ui in u]         # u^{(i)}_t = w_t w_{t+i}
    A = np.empty((k + 1, k + 1, max_tau + 1))
    for j in range(k + 1):
        base = prod[j][:N]
        for i in range(k + 1):
            for tau in range(max_tau + 1):
                A[i, j, tau] = float(prod[i][tau: tau + N] @ base) / N
    return A


def _clip_psd(matrix):
    sym = 0.5 * (matrix + matrix.T)
    lam, vec = np.linalg.eigh(sym)
    clip = float(max(0.0, -lam.min()))
    fixed = (vec * np.clip(lam, 0.0, None)) @ vec.T
    return 0.5 * (fixed + fixed.T), clip


def _truncate_tau(gammas, leading, noise_se=None):
    """Index after which SIGMA_TRUNC_RUN consecutive terms stay below the
    larger of SIGMA_TRUNC_REL * |leading| and three Monte Carlo standard
    errors.  Without the noise floor the relative criterion alone almost
    never fires on estimated covariances, and the tau-sum accumulates pure
    noise."""
    run = 0
    for tau in range(1, gammas.shape[-1]):
        thresh = SIGMA_TRUNC_REL * abs(leading)
        if noise_se is not None:
            thresh = max(thresh, 3.0 * float(noise_se[..., tau].max()))
        if np.max(np.abs(gammas[..., tau])) < thresh:
            run += 1
            if run >= SIGMA_TRUNC_RUN:
                return tau
        else:
            run = 0
    return gammas.shape[-1] - 1


def sigma_matrix(model=None, k=1, mode="mc_oracle", path=None, reps=64,
                 T=1 << 15, seed=0, max_tau=None):
    """(k+1)x(k+1) limiting covariance of sqrt(T)(hat r(0..k) - r(0..k)):
    Sigma_ij = Cov(z_0 z_i, z_0 z_j) + 2 sum_{tau>=1} Cov(z_tau z_{i+tau}, z_0 z_j).

    mc_oracle averages the displayed covariances over ``reps`` fresh long
    simulated paths; plugin estimates them from one observed path.  The
    result is symmetrized and eigenvalue-clipped to PSD, with the clip
    magnitude reported.
    """
    if mode not in ("mc_oracle", "plugin"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "mc_oracle":
        if model is None:
            raise ValueError("mc_oracle mode needs a calibrated model")
        if model.marginal.fourth_moment is None:
            raise FourthMomentError(
                f"marginal {model.marginal.name!r} has unknown or infinite "
                "fourth moment; the autocovariance CLT does not apply"
            )
        _summability_guard(model)
        mu = model.mean
        r_pop = _analytic_autocov(model, np.arange(k + 1))
        cap = max_tau if max_tau is not None else min(256, T // 8)
        threads = gaussim.worker_count()

        def one(i):
            z = gaussim.simulate_subordinated(model, T, gaussim.seed_sequence(seed, 1, i))
            return _product_cross_sums(z.values - mu, k, cap)

        if threads > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(threads) as ex:
                results = list(ex.map(one, range(reps)))
        else:
            results = [one(i) for i in range(reps)]
        stacked = np.stack(results)
        acc = stacked.mean(axis=0)
        noise_se = stacked.std(axis=0, ddof=1) / math.sqrt(reps)
    else:
        v = _values(path)
        mu = float(v.mean())
        T = len(v)
        r_pop = np.array([acov_hat(v, tau) for tau in range(k + 1)])
        cap = max_tau if max_tau is not None else min(256, T // 8)
        # noise floor from the spread across path segments
        w = v - mu
        nblocks = 8
        step = (len(w) - cap - k) // nblocks
        if step > 64:
            blocks = np.stack(
                [_product_cross_sums(w[b * step: (b + 1) * step + cap + k], k, cap)
                 for b in range(nblocks)]
            )
            noise_se = blocks.std(axis=0, ddof=1) / math.sqrt(nblocks)
        else:
            noise_se = None
        acc = _product_cross_sums(w, k, cap)

    gammas = acc - r_pop[:, None, None] * r_pop[None, :, None]
    cut = _truncate_tau(gammas, gammas[0, 0, 0], noise_se)
    sigma = gammas[:, :, 0] + 2.0 * gammas[:, :, 1: cut + 1].sum(axis=2)
    matrix, clip = _clip_psd(sigma)
    return SigmaReport(matrix, clip, cut)


@dataclass(frozen=True)
class EstimatorReport:
    T: int
    mean: float
    lags: np.ndarray
    acov_hat: np.ndarray
    acov_tilde: np.ndarray
    acov_bar: np.ndarray
    remainder: np.ndarray
    longrun_sigma2: float
    sigma: Optional[SigmaReport] = None


def estimator_report(z, max_lag, bandwidth=None, include_sigma=True):
    """All three ACF variants, the lemma pieces, and the plugin sigma^2.

    Lags >= T are skipped with a warning rather than failing the run.
    """
    v = _values(z)
    T = len(v)
    if max_lag >= T:
        warnings.warn(
            f"lags {T}..{max_lag} skipped: lag must be below the series length {T}",
            stacklevel=2,
        )
        max_lag = T - 1
    lags = np.arange(max_lag + 1)
    hat = np.empty(max_lag + 1)
    tilde = np.empty(max_lag + 1)
    bar = np.empty(max_lag + 1)
    rem = np.empty(max_lag + 1)
    for tau in lags:
        parts = lemma_decomposition(v, tau)
        hat[tau] = parts.reconstructed
        bar[tau] = parts.acov_bar
        rem[tau] = parts.remainder
        tilde[tau] = hat[tau] * T / (T - tau)
    sigma2 = longrun_variance(v, mode="plugin_from_path", bandwidth=bandwidth)
    sigma = None
    if include_sigma:
        sigma = sigma_matrix(mode="plugin", path=v, k=min(max_lag, 8))
    return EstimatorReport(T, float(v.mean()), lags, hat, tilde, bar, rem,
                           sigma2, sigma)


def report_csv(report):
    """CSV blocks with named sections, one per estimator family."""
    lines = ["section,tau,value"]
    lines.append(f"MEAN,,{report.mean!r}")
    for name, vec in (("ACOV_HAT", report.acov_hat),
                      ("ACOV_TILDE", report.acov_tilde),
                      ("ACOV_BAR", report.acov_bar),
                      ("REMAINDER", report.remainder)):
        for tau, val in zip(report.lags, vec):
            lines.append(f"{name},{tau},{float(val)!r}")
    lines.append(f"SIGMA2,,{report.longrun_sigma2!r}")
    if report.sigma is not None:
        k = report.sigma.matrix.shape[0]
        for i in range(k):
            for j in range(k):
                lines.append(f"SIGMA_MATRIX,{i}:{j},{float(report.sigma.matrix[i, j])!r}")
        lines.append(f"SIGMA_CLIP,,{report.sigma.clip_magnitude!r}")
    return "\n".join(lines) + "\n"
