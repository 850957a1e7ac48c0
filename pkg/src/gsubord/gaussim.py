"""Simulation of stationary Gaussian paths and subordinated series z = f(X).

Gaussian paths use circulant embedding (exact, FFT-based) whenever the even
extension spectrum is nonnegative, otherwise an exact-window conditional
sampler whose theoretical autocovariance still matches the target at lags
up to L.  All randomness flows through the counter-based Philox generator
with per-replication stream splitting, so runs are reproducible regardless
of worker count.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh, solve, toeplitz

from . import covlink, hermite, marginals
from .covlink import EXT_FGN, CovarianceSequence
from .hermite import HermiteExpansion
from .marginals import Transport

EMBED_CAP = 1 << 20
_SPECTRUM_NEG_TOL = 1e-8

_spectrum_cache: dict = {}


def worker_count():
    """Worker bound from GS_THREADS; defaults to sequential execution."""
    try:
        return max(1, int(os.environ.get("GS_THREADS", "1")))
    except ValueError:
        return 1


def seed_sequence(root, *key):
    """Deterministic stream splitting: one SeedSequence per (root, key...)."""
    if isinstance(root, np.random.SeedSequence):
        return np.random.SeedSequence(
            entropy=root.entropy, spawn_key=tuple(root.spawn_key) + tuple(key)
        )
    return np.random.SeedSequence(entropy=root, spawn_key=tuple(key))


def make_rng(seed, *key):
    """Philox generator for the given root seed and stream key."""
    if isinstance(seed, np.random.SeedSequence) and not key:
        ss = seed
    else:
        ss = seed_sequence(seed, *key)
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SamplePath:
    values: np.ndarray
    seed: object
    generator_id: str
    model_fingerprint: str

    def __post_init__(self):
        self.values.setflags(write=False)

    def __len__(self):
        return len(self.values)


def _cov_fingerprint(seq):
    h = hashlib.sha256()
    h.update(seq.values.tobytes())
    h.update(seq.extension.encode())
    if seq.hurst is not None:
        h.update(np.float64(seq.hurst).tobytes())
    return h.hexdigest()[:16]


def fgn_cov(hurst, max_lag):
    """Fractional Gaussian noise autocovariance, r(0) = 1.

    r(tau) = 0.5(|tau+1|^{2H} - 2|tau|^{2H} + |tau-1|^{2H}); decays like
    H(2H-1) tau^{2H-2}, not absolutely summable for H > 1/2.  The sequence is
    a true autocovariance function (nonnegative spectral density), so the PSD
    status is set without an eigenvalue check.
    """
    if not 0.0 < hurst < 1.0:
        raise ValueError("hurst parameter must lie in (0, 1)")
    t = np.arange(max_lag + 1, dtype=float)
    h2 = 2.0 * hurst
    vals = 0.5 * (np.abs(t + 1) ** h2 - 2 * np.abs(t) ** h2 + np.abs(t - 1) ** h2)
    return CovarianceSequence(vals, psd_status="verified", extension=EXT_FGN,
                              hurst=hurst)


def _embedding_spectrum(seq, size):
    """Eigenvalues of the even circulant extension of length 2*size."""
    key = (seq.values.tobytes(), seq.extension, seq.hurst, size)
    lam = _spectrum_cache.get(key)
    if lam is None:
        ext = seq.extended(size)
        circ = np.concatenate([ext, ext[-2:0:-1]])
        lam = np.fft.fft(circ).real
        if len(_spectrum_cache) > 16:
            _spectrum_cache.clear()
        _spectrum_cache[key] = lam
    return lam


def _circulant_plan(seq, T):
    size = 1 << max(int(math.ceil(math.log2(max(T, seq.max_lag + 1)))), 1)
    while size <= EMBED_CAP:
        lam = _embedding_spectrum(seq, size)
        if lam.min() >= -_SPECTRUM_NEG_TOL * lam.max():
            return size, np.clip(lam, 0.0, None)
        size *= 2
    return None, None


def _sample_circulant(lam, T, rng):
    # Davies-Harte: complex normals with Hermitian symmetry under sqrt(lam)
    n = len(lam)  # even, = 2 * size
    m = n // 2
    z = np.empty(n, dtype=complex)
    z[0] = rng.standard_normal()
    z[m] = rng.standard_normal()
    v = rng.standard_normal((m - 1, 2))
    z[1:m] = (v[:, 0] + 1j * v[:, 1]) / math.sqrt(2.0)
    z[m + 1:] = np.conj(z[1:m][::-1])
    path = math.sqrt(n) * np.fft.ifft(np.sqrt(lam) * z).real
    return path[:T]


def _sample_window_conditional(seq, T, rng):
    """Exact-window sampler: first L+1 points from the Toeplitz square root,
    then conditional one-step sampling on a sliding window of length L.

    The resulting process is the stationary Yule-Walker extension of the
    sequence; its autocovariance equals the target at lags 0..L exactly.
    """
    r = seq.values
    L = seq.max_lag
    if L == 0:
        return rng.standard_normal(T) * math.sqrt(r[0])
    lam, vec = eigh(toeplitz(r))
    root = vec @ np.diag(np.sqrt(np.clip(lam, 0.0, None))) @ vec.T
    head = root @ rng.standard_normal(L + 1)
    if T <= L + 1:
        return head[:T]
    cvec = r[L:0:-1]                      # Cov(x_t, window) for window order t-L..t-1
    window_cov = toeplitz(r[:L])
    try:
        a = solve(window_cov, cvec, assume_a="pos")
    except np.linalg.LinAlgError:
        a = solve(window_cov + 1e-10 * r[0] * np.eye(L), cvec, assume_a="pos")
    s = math.sqrt(max(r[0] - float(cvec @ a), 0.0))
    out = np.empty(T)
    out[: L + 1] = head
    eps = rng.standard_normal(T - L - 1)
    for t in range(L + 1, T):
        out[t] = a @ out[t - L: t] + s * eps[t - L - 1]
    return out


def simulate_gaussian(r_x, T, seed):
    """Zero-mean stationary Gaussian path with autocovariance r_x at lags <= L.

    Requires verified PSD status (use the repaired sequence otherwise) and
    unit variance r(0) = 1.  generator_id records which sampler and extension
    produced the path.
    """
    if T < 1:
        raise ValueError("need T >= 1")
    if r_x.psd_status != "verified":
        raise ValueError(
            "refusing to simulate from a covariance sequence whose PSD status "
            f"is {r_x.psd_status!r}; run the PSD check or supply the repaired sequence"
        )
    if abs(r_x.values[0] - 1.0) > 1e-8:
        raise ValueError("latent Gaussian covariance must have r(0) = 1")
    rng = make_rng(seed)
    size, lam = _circulant_plan(r_x, T)
    if size is not None:
        values = _sample_circulant(lam, T, rng)
        gen = f"philox-circulant(size={size},ext={r_x.extension})"
    else:
        if abs(r_x.values[-1]) > 1e-3 * r_x.values[0]:
            import warnings

            warnings.warn(
                "circulant embedding failed and the window sampler extends "
                f"the covariance beyond lag {r_x.max_lag} by its Yule-Walker "
                "tail; with |r(L)| this large, analytic long-run sums that "
                "assume the declared extension will be off -- raise the "
                "truncation lag",
                stacklevel=2,
            )
        values = _sample_window_conditional(r_x, T, rng)
        gen = f"philox-window(L={r_x.max_lag},ext=yule-walker)"
    return SamplePath(values, seed, gen, _cov_fingerprint(r_x))


@dataclass(frozen=True)
class SubordinatedModel:
    """The calibrated object z_t = f(X_t) + mu.

    ``transport`` is the centered evaluation; ``mean`` restores the natural
    scale.  g(r_X(tau)) equals r_z(tau) within calibration tolerance, and the
    rank is 1 for every transport built from a quantile composition.
    """

    transport: Transport
    expansion: HermiteExpansion
    link: covlink.CovarianceLink
    r_x: CovarianceSequence
    r_z: CovarianceSequence
    rank: int
    mean: float

    @property
    def marginal(self):
        return self.transport.marginal

    @property
    def variance(self):
        return float(self.r_z.values[0])

    def fingerprint(self):
        h = hashlib.sha256()
        h.update(self.marginal.name.encode())
        if self.marginal.is_empirical:
            h.update(self.marginal.sample.tobytes())
        h.update(self.r_x.values.tobytes())
        h.update(str(self.expansion.truncation).encode())
        return h.hexdigest()[:16]

    def fourth_moment(self, quad_nodes=400):
        """Numeric E[z^4] (raw) from the transport."""
        t = Transport(self.marginal, centered=False)
        return t.moment(4, quad_nodes=quad_nodes)


def build_model(marginal, r_z, truncation=hermite.DEFAULT_TRUNCATION,
                quad_nodes=hermite.DEFAULT_QUAD_NODES, repair=False,
                calibration=None):
    """Assemble transport -> expansion -> link -> calibrated model.

    ``repair``: accept a non-PSD calibrated sequence by substituting its
    clipped-spectrum repair (recorded in the result warnings).  Returns
    (model, calibration_result).
    """
    transport = marginals.build_transport(marginal, centered=True)
    expansion = transport.hermite_expansion(truncation, quad_nodes)
    link = covlink.link_from_expansion(expansion)
    result = covlink.calibrate(link, r_z)
    r_x = result.r_x
    if r_x.psd_status != "verified":
        if not repair:
            raise ValueError(
                "calibrated latent covariance is not positive semidefinite "
                f"(witness eigenvalue {result.psd.min_eigenvalue:g}); "
                "pass repair=True to use the clipped-spectrum repair"
            )
        r_x = result.repaired
    q = hermite.rank(expansion)
    model = SubordinatedModel(transport, expansion, link, r_x, r_z, q,
                              marginal.mean)
    return model, result


def simulate_subordinated(model, T, seed):
    """Apply the transport pointwise to a latent Gaussian path and add mu.

    Evaluates the uncentered transport, which equals centered + mu without
    the rounding of an explicit re-shift; empirical marginals reproduce
    their atoms exactly.
    """
    latent = simulate_gaussian(model.r_x, T, seed)
    natural = Transport(model.marginal, centered=False)
    values = natural(latent.values)
    return SamplePath(values, seed,
                      latent.generator_id + "+transport",
                      model.fingerprint())


def linear_acf(phi, innovation_variance, max_lag):
    """Theoretical autocovariance of the causal MA: Var(xi) sum_j phi_j phi_{j+tau}."""
    phi = np.asarray(phi, dtype=float)
    vals = np.array(
        [phi[: len(phi) - tau] @ phi[tau:] if tau < len(phi) else 0.0
         for tau in range(max_lag + 1)]
    )
    return innovation_variance * vals


def linear_process(phi, innovation, T, seed, center_innovations=False):
    """Causal moving average z_t = sum_j phi_j xi_{t-j} with i.i.d. xi.

    Innovations are drawn by inverse transform from the innovation marginal,
    so any shipped or empirical law works.  ``center_innovations`` subtracts
    the innovation mean, giving a zero-mean process.
    """
    phi = np.asarray(phi, dtype=float)
    if len(phi) == 0:
        raise ValueError("need at least one moving-average coefficient")
    rng = make_rng(seed)
    u = rng.random(T + len(phi) - 1)
    np.clip(u, 2.0**-53, None, out=u)
    xi = innovation.quantile(u)
    if center_innovations:
        xi = xi - innovation.mean
    values = np.convolve(xi, phi, mode="valid")
    h = hashlib.sha256()
    h.update(phi.tobytes())
    h.update(innovation.name.encode())
    return SamplePath(values, seed, f"philox-linear(p={len(phi) - 1})",
                      h.hexdigest()[:16])
