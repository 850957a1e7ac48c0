"""Command-line surface: ingestion -> calibration -> simulation -> estimation
-> verification, with reproducible manifests.

Every run writes ``manifest.txt`` (key = value lines) echoing the fully
resolved configuration plus the library version; feeding that manifest back
through --config reproduces the run byte for byte, regardless of GS_THREADS.
Outputs are staged in a temporary directory and renamed into place only on
success, so failed runs leave no partial files.

Exit codes: 0 success / all claims pass; 1 missing or unreadable input;
2 attainability or degenerate-model failure; 3 non-PSD calibration without
--repair-psd; 4 claims skipped (refusal: non-summable covariance or missing
fourth moment); 5 claims failed.
"""

from __future__ import annotations

import argparse
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, covlink, estimators, figures, gaussim, hermite, marginals, mclab
from .covlink import AttainabilityError, CovarianceSequence
from .estimators import FourthMomentError, NonSummableCovarianceError

EXIT_OK = 0
EXIT_MISSING_INPUT = 1
EXIT_ATTAINABILITY = 2
EXIT_PSD = 3
EXIT_SKIP = 4
EXIT_FAIL = 5

BASE_DEFAULTS = {
    "marginal": "normal",
    "acf": "white",
    "acf_file": "",
    "data": "",
    "T": 4096,
    "reps": 2000,
    "lags": 20,
    "seed": 42,
    "alpha": 0.01,
    "bandwidth": "",
    "hurst": 0.7,
    "repair_psd": False,
    "figures": True,
    "out": "gsubord_out",
}

COMMAND_DEFAULTS = {
    "simulate": {"T": 100_000},
    "estimate": {"lags": 10},
    "verify": {"lags": 1},
    "scan": {"reps": 500, "T": 16384},
}

_FIELD_ORDER = ["command", "marginal", "acf", "acf_file", "data", "T", "reps",
                "lags", "seed", "alpha", "bandwidth", "hurst", "repair_psd",
                "figures", "out", "version"]

_INT_FIELDS = {"T", "reps", "lags", "seed"}
_FLOAT_FIELDS = {"alpha", "hurst"}
_BOOL_FIELDS = {"repair_psd", "figures"}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def read_config(path):
    """One ``key = value`` per line; # starts a comment."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_MISSING_INPUT)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected 'key = value'", EXIT_MISSING_INPUT)
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _coerce(key, value):
    if isinstance(value, str):
        if key in _INT_FIELDS:
            return int(value)
        if key in _FLOAT_FIELDS:
            return float(value)
        if key in _BOOL_FIELDS:
            return value.lower() in ("true", "1", "yes")
    return value


def resolve_config(command, args):
    """Precedence: flags > config file > per-command defaults > base defaults."""
    cfg = dict(BASE_DEFAULTS)
    cfg.update(COMMAND_DEFAULTS.get(command, {}))
    if args.config:
        loaded = read_config(args.config)
        recorded = loaded.pop("command", command)
        if recorded != command:
            raise CliError(
                f"config {args.config} was written for command {recorded!r}, "
                f"not {command!r}",
                EXIT_MISSING_INPUT,
            )
        loaded.pop("version", None)
        for key, value in loaded.items():
            if key not in cfg:
                raise CliError(f"unknown config key {key!r}", EXIT_MISSING_INPUT)
            cfg[key] = _coerce(key, value)
    for key in cfg:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    cfg["command"] = command
    return cfg


def manifest_text(cfg):
    lines = []
    for key in _FIELD_ORDER:
        if key == "version":
            lines.append(f"version = {__version__}")
        else:
            value = cfg.get(key, "")
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


class OutputStage:
    """Write outputs to a scratch directory, rename into place on success."""

    def __init__(self, out_dir):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=".stage-", dir=self.out))
        self.names = []

    def write(self, name, text):
        (self.tmp / name).write_text(text)
        self.names.append(name)

    def path(self, name):
        self.names.append(name)
        return self.tmp / name

    def commit(self):
        for name in self.names:
            os.replace(self.tmp / name, self.out / name)
        shutil.rmtree(self.tmp, ignore_errors=True)

    def abort(self):
        shutil.rmtree(self.tmp, ignore_errors=True)


def _resolve_marginal(cfg):
    spec = cfg["marginal"]
    try:
        return marginals.parse_marginal(spec)
    except ValueError:
        if Path(spec).exists():
            return marginals.load_marginal_csv(spec)
        if spec.endswith(".csv"):
            raise CliError(f"marginal file not found: {spec}", EXIT_MISSING_INPUT)
        raise CliError(
            f"unknown marginal {spec!r} (names: "
            f"{', '.join(marginals.PARAMETRIC_NAMES)}; or a CSV path)",
            EXIT_MISSING_INPUT,
        )


def _load_column(path, what):
    try:
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
                        continue
                    raise CliError(f"{path}: bad value on line {i + 1}",
                                   EXIT_MISSING_INPUT)
    except OSError:
        raise CliError(f"{what} file not found: {path}", EXIT_MISSING_INPUT)
    return np.asarray(rows)


def _load_acf_csv(path):
    return CovarianceSequence(_load_column(path, "autocovariance"))


def _resolve_target(cfg, marginal):
    """Target autocovariance: file values as-is, parametric shapes scaled by
    the marginal variance so r_z(0) matches the model."""
    if cfg["acf_file"]:
        return _load_acf_csv(cfg["acf_file"])
    spec = cfg["acf"].strip()
    L = cfg["lags"]
    scale = marginal.variance
    if spec == "empirical":
        # sample autocovariance of the marginal's own CSV, read as a series
        if not marginal.is_empirical:
            raise CliError(
                "acf=empirical needs an empirical marginal (a CSV path)",
                EXIT_MISSING_INPUT,
            )
        series = _load_column(cfg["marginal"], "marginal")
        return CovarianceSequence(
            estimators.acov_hat_all(series, min(L, len(series) - 1))
        )
    if spec == "white":
        return covlink.geometric_cov(0.0, L, scale)
    import re

    m = re.fullmatch(r"geometric\(([^)]+)\)", spec)
    if m:
        return covlink.geometric_cov(float(m.group(1)), L, scale)
    m = re.fullmatch(r"fgn\(([^)]+)\)", spec)
    if m:
        shape = gaussim.fgn_cov(float(m.group(1)), L)
        return CovarianceSequence(shape.values * scale, extension=shape.extension,
                                  hurst=shape.hurst)
    raise CliError(
        f"unknown acf spec {spec!r}; use white, geometric(rho), fgn(H) or --acf-file",
        EXIT_MISSING_INPUT,
    )


def _build_model(cfg):
    marginal = _resolve_marginal(cfg)
    target = _resolve_target(cfg, marginal)
    try:
        model, calib = gaussim.build_model(marginal, target,
                                           repair=cfg["repair_psd"])
    except AttainabilityError as exc:
        raise CliError(
            f"calibration failed: {exc} (gamma = {exc.gamma:g})", EXIT_ATTAINABILITY
        )
    except marginals.DegenerateMarginalError as exc:
        raise CliError(f"degenerate marginal: {exc}", EXIT_ATTAINABILITY)
    except ValueError as exc:
        if "not positive semidefinite" in str(exc):
            raise CliError(
                f"{exc}; rerun with --repair-psd to accept the repaired sequence",
                EXIT_PSD,
            )
        raise CliError(str(exc), EXIT_ATTAINABILITY)
    return model, calib


def _transport_summary_csv(model, calib):
    lines = [
        f"# marginal = {model.marginal.name}",
        f"# discrete = {model.marginal.discrete}",
        f"# mean = {model.mean!r}",
        f"# variance = {model.link.variance!r}",
        f"# fourth_moment = {model.fourth_moment()!r}",
        f"# rank = {model.rank}",
        f"# alpha_1 = {float(model.expansion.coefficients[1])!r}",
        f"# tail_mass_bound = {model.expansion.tail_mass_bound!r}",
    ]
    return "\n".join(lines) + "\n" + model.expansion.to_csv()


def cmd_calibrate(cfg, stage):
    model, calib = _build_model(cfg)
    stage.write("transport.csv", _transport_summary_csv(model, calib))
    stage.write("calibration.csv", covlink.calibration_csv(calib))
    rx_lines = ["tau,r_x"] + [f"{tau},{float(v)!r}"
                              for tau, v in enumerate(model.r_x.values)]
    stage.write("r_x.csv", "\n".join(rx_lines) + "\n")
    if cfg["figures"]:
        figures.calibration_figure(calib, stage.path("calibration.png"))
        figures.transport_figure(model.transport, stage.path("transport.png"))
    print(f"calibrated {model.marginal.name} against {cfg['acf'] or cfg['acf_file']}: "
          f"rank={model.rank} gamma={model.link.gamma:.6g} "
          f"max_residual={calib.max_residual:.3g} psd={model.r_x.psd_status}")
    for note in calib.warnings:
        print(f"note: {note}")
    return EXIT_OK


def cmd_simulate(cfg, stage):
    model, _ = _build_model(cfg)
    path = gaussim.simulate_subordinated(model, cfg["T"], cfg["seed"])
    stage.write("path.csv", "\n".join(repr(float(v)) for v in path.values) + "\n")
    meta = [
        f"seed = {cfg['seed']}",
        f"T = {cfg['T']}",
        f"generator_id = {path.generator_id}",
        f"model_fingerprint = {path.model_fingerprint}",
    ]
    stage.write("path_meta.txt", "\n".join(meta) + "\n")
    if cfg["figures"]:
        figures.path_figure(path.values, stage.path("path.png"))
    print(f"simulated {cfg['T']} points (seed {cfg['seed']}, "
          f"{path.generator_id}, fingerprint {path.model_fingerprint})")
    return EXIT_OK


def cmd_estimate(cfg, stage):
    if not cfg["data"]:
        raise CliError("estimate needs an input series (positional DATA csv)",
                       EXIT_MISSING_INPUT)
    values = _load_column(cfg["data"], "input series")
    bandwidth = int(cfg["bandwidth"]) if cfg["bandwidth"] else None
    report = estimators.estimator_report(values, cfg["lags"], bandwidth=bandwidth,
                                         include_sigma=len(values) >= 512)
    stage.write("estimate.csv", estimators.report_csv(report))
    lemma_lines = ["tau,acov_bar,mean_sq,remainder,acov_hat"]
    for tau in report.lags:
        parts = estimators.lemma_decomposition(values, int(tau))
        lemma_lines.append(
            f"{tau},{parts.acov_bar!r},{parts.mean_sq!r},"
            f"{parts.remainder!r},{parts.reconstructed!r}"
        )
    stage.write("lemma.csv", "\n".join(lemma_lines) + "\n")
    if cfg["figures"]:
        figures.estimate_figure(report, stage.path("estimate.png"))
    print(f"estimated {len(values)} points: mean={report.mean:.6g} "
          f"acov_hat(0)={report.acov_hat[0]:.6g} "
          f"plugin_sigma2={report.longrun_sigma2:.6g}")
    return EXIT_OK


def cmd_verify(cfg, stage):
    # --lags sets the CLT lag count k; the target ACF itself keeps the full
    # default truncation so the analytic sigma^2 is not cut short with it
    model_cfg = dict(cfg)
    model_cfg["lags"] = max(cfg["lags"], BASE_DEFAULTS["lags"])
    model, _ = _build_model(model_cfg)
    T, reps, k = cfg["T"], cfg["reps"], cfg["lags"]
    alpha, seed = cfg["alpha"], cfg["seed"]
    verdicts = []
    summaries = []
    csv_rows = ["claim,rep,standardized_value"]

    def record(claim, status, detail):
        verdicts.append((claim, status, detail))
        print(f"{status} {claim}: {detail}")

    mean_summary = None
    try:
        mean_summary = mclab.mean_clt_experiment(model, T, reps, seed, alpha)
        crit = mclab.kolmogorov_critical(alpha, reps)
        record("mean_clt", "PASS" if mean_summary.passed else "FAIL",
               f"ks={mean_summary.ks_distance:.4f} critical={crit:.4f}")
        summaries.append(mean_summary)
        sigma2 = estimators.longrun_variance(model)
        rel = abs(mean_summary.empirical_variance - sigma2) / sigma2
        record("variance_match", "PASS" if rel <= 0.10 else "FAIL",
               f"empirical={mean_summary.empirical_variance:.4f} "
               f"analytic={sigma2:.4f} rel_err={rel:.3f}")
    except (NonSummableCovarianceError, mclab.DegenerateModelError) as exc:
        record("mean_clt", "SKIP", str(exc))
        record("variance_match", "SKIP", "depends on mean_clt")

    try:
        acov = mclab.acov_clt_experiment(model, T, reps, k, seed, alpha)
        crit = mclab.kolmogorov_critical(alpha, reps)
        for lag, s in enumerate(acov.per_lag):
            record(f"acov_clt_lag{lag}", "PASS" if s.passed else "FAIL",
                   f"ks={s.ks_distance:.4f} critical={crit:.4f} "
                   f"var={s.empirical_variance:.4f} "
                   f"sigma={acov.sigma.matrix[lag, lag]:.4f}")
            summaries.append(s)
        record("joint_chi2", "PASS" if acov.joint_passed else "FAIL",
               f"ks={acov.joint_ks:.4f} critical={crit:.4f}")
    except (NonSummableCovarianceError, FourthMomentError) as exc:
        for lag in range(k + 1):
            record(f"acov_clt_lag{lag}", "SKIP", str(exc))
        record("joint_chi2", "SKIP", "depends on the autocovariance CLT")

    for s in summaries:
        for i, v in enumerate(s.standardized_values):
            csv_rows.append(f"{s.statistic_name},{i},{float(v)!r}")
    stage.write("verify.csv", "\n".join(csv_rows) + "\n")
    verdict_lines = [f"{status} {claim}: {detail}" for claim, status, detail in verdicts]
    stage.write("verdicts.txt", "\n".join(verdict_lines) + "\n")
    if cfg["figures"] and summaries:
        figures.verify_figure(summaries, stage.path("verify.png"))

    statuses = {status for _, status, _ in verdicts}
    if "FAIL" in statuses:
        return EXIT_FAIL
    if "SKIP" in statuses:
        return EXIT_SKIP
    return EXIT_OK


def cmd_rank(cfg, stage):
    marginal = _resolve_marginal(cfg)
    transport = marginals.build_transport(marginal, centered=True)
    try:
        alpha1 = marginals.verify_rank_one(transport)
    except marginals.DegenerateMarginalError as exc:
        raise CliError(str(exc), EXIT_ATTAINABILITY)
    expansion = transport.hermite_expansion()
    q = hermite.rank(expansion)
    weights = expansion.degree_mass[1:11]
    print(f"marginal {marginal.name}: Hermite rank = {q}, alpha_1 = E[f(X)X] = "
          f"{alpha1:.6g}")
    print("first weights k!alpha_k^2:",
          " ".join(f"{w:.6g}" for w in weights))
    if marginal.name == "chisq1":
        from .oracles import poly_hermite_coeffs

        square = poly_hermite_coeffs([0, 0, 1])
        print(f"note: the square function x^2 has Hermite rank "
              f"{hermite.rank(square)}, while this quantile transport has rank {q}")
    lines = ["k,alpha_k,degree_mass"]
    for kk in range(min(10, expansion.truncation) + 1):
        lines.append(f"{kk},{float(expansion.coefficients[kk])!r},"
                     f"{float(expansion.degree_mass[kk])!r}")
    stage.write("rank.csv", "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_scan(cfg, stage):
    max_T = cfg["T"]
    grid = [2**p for p in range(8, 21) if 2**p <= max_T]
    if len(grid) < 3:
        raise CliError("scan needs T >= 1024 for at least three grid points",
                       EXIT_MISSING_INPUT)
    try:
        scan = mclab.long_memory_scan(cfg["hurst"], np.array(grid), cfg["reps"],
                                      cfg["seed"], cfg["alpha"])
    except ValueError as exc:
        raise CliError(str(exc), EXIT_ATTAINABILITY)
    lo, hi = scan.slope_target - 0.1, scan.slope_target + 0.1
    print(f"{'PASS' if scan.slope_passed else 'FAIL'} variance_growth: "
          f"slope={scan.slope:.4f} target interval [{lo:.2f}, {hi:.2f}]")
    s = scan.lag_summary
    print(f"{'PASS' if s.passed else 'FAIL'} acov_normality_lag{scan.lag}: "
          f"ks={s.ks_distance:.4f} "
          f"critical={mclab.kolmogorov_critical(s.alpha, s.replications):.4f} "
          f"(mean-corrected variant ks={scan.hat_ks_distance:.4f})")
    rows = ["T,variance_sqrtT_mean"]
    for T, v in zip(scan.T_grid, scan.variances):
        rows.append(f"{T},{float(v)!r}")
    rows.append(f"# slope = {scan.slope!r}")
    rows.append(f"# slope_target = {scan.slope_target!r}")
    rows.append(f"# lag{scan.lag}_ks = {s.ks_distance!r}")
    stage.write("scan.csv", "\n".join(rows) + "\n")
    if cfg["figures"]:
        figures.scan_figure(scan, stage.path("scan.png"))
    return EXIT_OK if scan.passed else EXIT_FAIL


_COMMANDS = {
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "verify": cmd_verify,
    "rank": cmd_rank,
    "scan": cmd_scan,
}


def _add_common(p, data_positional=False):
    if data_positional:
        p.add_argument("data", nargs="?", default=None,
                       help="input series CSV (single column)")
    p.add_argument("--config", default=None,
                   help="key = value config file (a manifest works)")
    p.add_argument("--marginal", default=None,
                   help="marginal name or empirical CSV path")
    p.add_argument("--acf", default=None,
                   help="target acf: white, geometric(rho), fgn(H)")
    p.add_argument("--acf-file", dest="acf_file", default=None,
                   help="target autocovariance CSV (lags 0..L, one per row)")
    p.add_argument("--T", type=int, default=None, help="series length")
    p.add_argument("--reps", type=int, default=None, help="replications")
    p.add_argument("--lags", type=int, default=None, help="max lag")
    p.add_argument("--seed", type=int, default=None, help="root seed")
    p.add_argument("--alpha", type=float, default=None, help="test level")
    p.add_argument("--bandwidth", default=None,
                   help="Bartlett bandwidth for the plugin long-run variance")
    p.add_argument("--hurst", type=float, default=None,
                   help="Hurst parameter for the long-memory scan")
    p.add_argument("--repair-psd", dest="repair_psd", action="store_true",
                   default=None, help="accept the clipped-spectrum repair")
    p.add_argument("--no-figures", dest="figures", action="store_false",
                   default=None, help="skip figure rendering")
    p.add_argument("--out", default=None, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gsubord",
        description="Model weakly stationary series as transported Gaussian "
                    "processes: calibrate, simulate, estimate, verify.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "calibrate": "fit the transport and latent covariance for a target",
        "simulate": "simulate a subordinated path",
        "estimate": "mean/autocovariance estimators for a series",
        "verify": "Monte Carlo CLT verification, one verdict per claim",
        "rank": "Hermite rank report for a marginal",
        "scan": "long-memory variance growth scan",
    }
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=helps[name])
        _add_common(p, data_positional=(name == "estimate"))
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.command, args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    stage = OutputStage(cfg["out"])
    try:
        code = _COMMANDS[args.command](cfg, stage)
        stage.write("manifest.txt", manifest_text(cfg))
        stage.commit()
        return code
    except CliError as exc:
        stage.abort()
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except Exception:
        stage.abort()
        raise


if __name__ == "__main__":
    sys.exit(main())
