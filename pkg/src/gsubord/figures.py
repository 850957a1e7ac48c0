"""Figure rendering for the CLI report paths.

Every figure lands next to the delimited output it illustrates.  PNG
metadata is pinned so reruns stay byte-identical.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import numpy as np
import matplotlib.pyplot as plt

from .covlink import link_value

_SAVE_KW = dict(dpi=110, metadata={"Software": "gsubord"})


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def calibration_figure(result, path):
    """Covariance match per lag plus the link function with its floor."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    lags = np.arange(len(result.r_z.values))
    ax1.plot(lags, result.r_z.values, "o-", label="target r_z", ms=4)
    ax1.plot(lags, result.r_x.values, "s--", label="latent r_X", ms=4)
    ax1.set_xlabel("lag")
    ax1.set_ylabel("autocovariance")
    ax1.legend(frameon=False)
    ax1.set_title(f"calibration (psd: {result.r_x.psd_status})")

    beta = np.linspace(-1, 1, 401)
    ax2.plot(beta, link_value(result.link, beta), lw=1.5)
    ax2.axhline(result.link.gamma, color="crimson", ls=":", lw=1,
                label=f"gamma = {result.link.gamma:.3g}")
    ax2.set_xlabel("latent correlation beta")
    ax2.set_ylabel("g(beta)")
    ax2.legend(frameon=False)
    ax2.set_title("covariance link")
    _finish(fig, path)


def transport_figure(transport, path, span=4.0):
    fig, ax = plt.subplots(figsize=(5, 3.6))
    x = np.linspace(-span, span, 801)
    ax.plot(x, transport(x), lw=1.5)
    ax.set_xlabel("latent gaussian x")
    ax.set_ylabel("f(x)")
    ax.set_title(f"transport for {transport.marginal.name}")
    _finish(fig, path)


def path_figure(values, path, max_points=2000):
    fig, ax = plt.subplots(figsize=(7, 3))
    n = min(len(values), max_points)
    ax.plot(np.arange(n), values[:n], lw=0.7)
    ax.set_xlabel("t")
    ax.set_ylabel("z_t")
    ax.set_title(f"simulated path (first {n} of {len(values)} points)")
    _finish(fig, path)


def estimate_figure(report, path):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    ax1.plot(report.lags, report.acov_hat, "o-", label="hat (1/T)", ms=4)
    ax1.plot(report.lags, report.acov_tilde, "s--", label="tilde (1/(T-tau))", ms=4)
    ax1.plot(report.lags, report.acov_bar, "^:", label="bar (uncentered)", ms=4)
    ax1.set_xlabel("lag")
    ax1.set_ylabel("autocovariance")
    ax1.legend(frameon=False)
    ax1.set_title("estimators")

    ax2.plot(report.lags, report.remainder, "o-", ms=4)
    ax2.set_xlabel("lag")
    ax2.set_ylabel("R_T")
    ax2.set_title("decomposition remainder")
    _finish(fig, path)


def verify_figure(summaries, path):
    """Histogram of each standardized statistic with the N(0,1) density."""
    n = len(summaries)
    fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 3.2), squeeze=False)
    grid = np.linspace(-4, 4, 301)
    dens = np.exp(-grid**2 / 2) / np.sqrt(2 * np.pi)
    for ax, s in zip(axes[0], summaries):
        ax.hist(s.standardized_values, bins=40, density=True, alpha=0.6)
        ax.plot(grid, dens, lw=1.2)
        ax.set_title(f"{s.statistic_name}\nKS = {s.ks_distance:.4f}", fontsize=8)
    _finish(fig, path)


def scan_figure(scan, path):
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.loglog(scan.T_grid, scan.variances, "o", label="Var(sqrt(T) m)")
    fit = np.exp(np.polyval(
        np.polyfit(np.log(scan.T_grid), np.log(scan.variances), 1),
        np.log(scan.T_grid),
    ))
    ax.loglog(scan.T_grid, fit, "--",
              label=f"slope {scan.slope:.3f} (target {scan.slope_target:.2f})")
    ax.set_xlabel("T")
    ax.set_ylabel("variance")
    ax.legend(frameon=False)
    ax.set_title(f"long-memory variance growth, H = {scan.hurst}")
    _finish(fig, path)
