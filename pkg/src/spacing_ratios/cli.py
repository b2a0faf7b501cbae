"""Command-line runner for reproducible spacing-ratio experiments.

Subcommands
-----------
sample    write sampled spectra as CSV (one row per realization)
ratios    write pooled k-th order ratios as CSV
fit       maximum-likelihood effective index of pooled ratios
tails     tail-slope regression on both windows
duality   two-sample KS between the ratios and their reciprocals
curves    evaluate a reference density on a log grid as CSV
verify    full scaling-law pipeline: report JSON + histogram and curve CSVs

Every artifact embeds the resolved configuration and the toolkit version.
Seeds are explicit flags with a recorded default; there is deliberately no
environment-variable override.  Files are written atomically (temp file then
rename), and `verify` exits nonzero iff any of its echoed thresholds is
violated, so CI pipelines can consume it directly.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .analysis import (
    DEFAULT_LARGE_WINDOW,
    DEFAULT_SMALL_WINDOW,
    TailSide,
    TailWindow,
    VerifyMode,
    dumps_report_json,
    duality_test,
    fit_beta_prime_mle,
    pooled_ratio_series,
    tail_exponent,
    verify_scaling,
)
from .ensembles import (
    EnsembleSpec,
    MatrixModel,
    RngStream,
    sample_spectrum,
    save_spectra_csv,
)
from .errors import SpacingRatiosError
from .models import (
    poisson_kth_pdf,
    save_curve_csv,
    surmise_model,
    surmise_pdf,
)
from .ratios import Binning, histogram, log_edges, save_histogram_csv, save_ratios_csv

DEFAULT_SEED = 20260810
_HIST_EDGES = (1e-3, 1e3, 120)  # log-spaced default, tuned for tail work


def _parse_trials(text: str) -> int:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse trial count {text!r}")
    if value != int(value) or value < 1:
        raise argparse.ArgumentTypeError(
            f"trials must be a positive integer (scientific notation ok), got {text!r}"
        )
    return int(value)


def _parse_window(text: str):
    parts = text.split(":")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(
            f"window must look like LO:HI (e.g. 0.02:0.2), got {text!r}"
        )
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse window bounds in {text!r}")
    if not 0 < lo < hi:
        raise argparse.ArgumentTypeError(f"window needs 0 < LO < HI, got {text!r}")
    return lo, hi


def _parse_log_grid(text: str):
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            f"grid must look like LO:HI:POINTS (e.g. 1e-3:1e3:200), got {text!r}"
        )
    try:
        lo, hi, npts = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse grid spec {text!r}")
    if not 0 < lo < hi or npts < 2:
        raise argparse.ArgumentTypeError(f"grid needs 0 < LO < HI and POINTS >= 2")
    return lo, hi, npts


def _atomic_write_text(path: str, text: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _atomic_write_via(path: str, writer) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    writer(tmp)
    os.replace(tmp, path)


def _resolved_config(args, extra=None) -> dict:
    keep = (
        "command", "model", "beta", "k", "n", "trials", "bulk", "seed",
        "scale_a", "mode", "beta_prime", "poisson_k", "grid_log",
        "small_window", "large_window", "min_count", "tail_bins", "out",
        "format",
    )
    doc = {"toolkit_version": __version__}
    for key in keep:
        if hasattr(args, key):
            value = getattr(args, key)
            doc[key] = list(value) if isinstance(value, tuple) else value
    if extra:
        doc.update(extra)
    return doc


def _spec_from_args(args) -> EnsembleSpec:
    model = MatrixModel(args.model)
    beta = 0.0 if model is MatrixModel.POISSON_UNCORRELATED else args.beta
    return EnsembleSpec(beta=beta, n=args.n, model=model, scale_a=args.scale_a)


def _series_from_args(args):
    spec = _spec_from_args(args)
    return pooled_ratio_series(
        spec, args.k, args.trials, args.seed,
        bulk_fraction=args.bulk, workers=args.workers,
    )


def _write_json_doc(args, doc) -> None:
    if getattr(args, "format", "json") == "csv":
        lines = ["key,value"]
        flat = {k: v for k, v in doc.items() if not isinstance(v, (dict, list))}
        lines += [f"{k},{_csv_scalar(v)}" for k, v in flat.items()]
        _atomic_write_text(args.out, "\n".join(lines) + "\n")
    else:
        _atomic_write_text(args.out, dumps_report_json(doc))
    print(f"wrote {args.out}")


def _csv_scalar(v):
    if isinstance(v, float):
        return format(v, ".17g") if math.isfinite(v) else ""
    return str(v)


# ---------------------------------------------------------------------------
# subcommand implementations
# ---------------------------------------------------------------------------


def _cmd_sample(args) -> int:
    spec = _spec_from_args(args)
    spectra = [sample_spectrum(spec, RngStream(args.seed, i)) for i in range(args.trials)]
    meta = json.dumps(_resolved_config(args))
    _atomic_write_via(args.out, lambda p: save_spectra_csv(p, spectra, meta=meta))
    print(f"wrote {args.out} ({args.trials} spectra of {spec.n} levels)")
    return 0


def _cmd_ratios(args) -> int:
    series, discarded = _series_from_args(args)
    meta = json.dumps(_resolved_config(args, {"discarded_realizations": discarded}))
    _atomic_write_via(args.out, lambda p: save_ratios_csv(p, series, meta=meta))
    print(f"wrote {args.out} ({len(series)} ratios, {discarded} discarded)")
    return 0


def _cmd_fit(args) -> int:
    series, discarded = _series_from_args(args)
    b_hat, halfwidth = fit_beta_prime_mle(series)
    doc = _resolved_config(args)
    doc.update(
        {
            "beta_prime_hat": b_hat,
            "beta_prime_ci_halfwidth": halfwidth,
            "n_ratios": len(series),
            "discarded_realizations": discarded,
        }
    )
    _write_json_doc(args, doc)
    return 0


def _cmd_tails(args) -> int:
    series, discarded = _series_from_args(args)
    doc = _resolved_config(args)
    for side, bounds in (
        (TailSide.SMALL_R, args.small_window),
        (TailSide.LARGE_R, args.large_window),
    ):
        window = TailWindow(*bounds, min_count=args.min_count)
        slope, stderr = tail_exponent(series, side, window, nbins=args.tail_bins)
        doc[f"slope_{side.value}"] = slope
        doc[f"slope_{side.value}_stderr"] = stderr
    doc["n_ratios"] = len(series)
    doc["discarded_realizations"] = discarded
    _write_json_doc(args, doc)
    return 0


def _cmd_duality(args) -> int:
    series, discarded = _series_from_args(args)
    stat, pvalue = duality_test(series)
    doc = _resolved_config(args)
    doc.update(
        {
            "duality_ks": stat,
            "duality_p": pvalue,
            "n_ratios": len(series),
            "discarded_realizations": discarded,
        }
    )
    _write_json_doc(args, doc)
    return 0


def _cmd_curves(args) -> int:
    lo, hi, npts = args.grid_log
    grid = np.geomspace(lo, hi, npts)
    if args.poisson_k is not None:
        pdf = poisson_kth_pdf(grid, args.poisson_k)
        label = f"poisson k={args.poisson_k}"
    else:
        model = surmise_model(args.beta_prime)
        pdf = surmise_pdf(grid, model)
        label = f"index {args.beta_prime:g}"
    meta = json.dumps(_resolved_config(args))
    _atomic_write_via(args.out, lambda p: save_curve_csv(p, grid, pdf, meta=meta))
    print(f"wrote {args.out} ({npts} points, {label})")
    return 0


def _cmd_verify(args) -> int:
    spec = _spec_from_args(args)
    mode = VerifyMode(args.mode)
    report, series = verify_scaling(
        spec,
        args.k,
        args.trials,
        mode,
        seed=args.seed,
        bulk_fraction=args.bulk,
        small_window=TailWindow(*args.small_window, min_count=args.min_count),
        large_window=TailWindow(*args.large_window, min_count=args.min_count),
        tail_bins=args.tail_bins,
        workers=args.workers,
        keep_series=True,
    )

    duality_max = args.duality_threshold
    if duality_max is None:
        duality_max = 5.0 / math.sqrt(report.n_ratios)
    ks_max = args.ks_threshold
    if ks_max is None:
        ks_max = 0.01 if mode is VerifyMode.SURMISE else 0.02
    checks = {
        "beta_prime": _check(
            abs(report.beta_prime_hat - report.predicted_beta_prime),
            max(report.beta_prime_ci_halfwidth, args.beta_tolerance),
        ),
        "ks_distance": _check(report.ks_distance, ks_max),
        "duality_ks": _check(report.duality_ks, duality_max),
        "slope_small_r": _check(
            abs(report.slope_small_r - report.predicted_beta_prime),
            args.slope_tolerance,
        ),
        "slope_large_r": _check(
            abs(report.slope_large_r - (-2.0 - report.predicted_beta_prime)),
            args.slope_tolerance,
        ),
    }
    passed = all(c["pass"] for c in checks.values())

    doc = report.to_dict()
    doc["thresholds"] = checks
    doc["passed"] = passed
    _atomic_write_text(args.out, dumps_report_json(doc))

    stem = os.path.splitext(args.out)[0]
    hist_path = stem + ".hist.csv"
    curve_path = stem + ".curve.csv"

    hist = histogram(series, log_edges(*_HIST_EDGES), binning=Binning.LOG_ON_R)
    meta = json.dumps(_resolved_config(args))
    _atomic_write_via(hist_path, lambda p: save_histogram_csv(p, hist, meta=meta))

    grid = np.geomspace(_HIST_EDGES[0], _HIST_EDGES[1], 241)
    if spec.model is MatrixModel.POISSON_UNCORRELATED:
        pdf = poisson_kth_pdf(grid, args.k)
    else:
        pdf = surmise_pdf(grid, surmise_model(report.predicted_beta_prime))
    _atomic_write_via(curve_path, lambda p: save_curve_csv(p, grid, pdf, meta=meta))

    for name, check in checks.items():
        state = "pass" if check["pass"] else "FAIL"
        print(f"{state}  {name}: value {check['value']:.6g} vs limit {check['limit']:.6g}")
    print(f"wrote {args.out}, {hist_path}, {curve_path}")
    return 0 if passed else 1


def _check(value: float, limit: float) -> dict:
    ok = bool(value <= limit) if math.isfinite(value) else False
    return {"value": float(value), "limit": float(limit), "pass": ok}


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------


def _add_ensemble_args(p, need_k=True):
    p.add_argument("--model", choices=[m.value for m in MatrixModel],
                   default=MatrixModel.TRIDIAGONAL_BETA.value,
                   help="matrix model (default: tridiagonal)")
    p.add_argument("--beta", type=float, default=1.0, help="Dyson index (default 1)")
    p.add_argument("--n", type=int, default=None,
                   help="levels per realization (default 2k+1 in surmise-style runs)")
    p.add_argument("--trials", type=_parse_trials, default=10000,
                   help="number of realizations; accepts 1e6 notation")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                   help=f"RNG seed (default {DEFAULT_SEED}; recorded in output)")
    p.add_argument("--scale-a", dest="scale_a", type=float, default=0.5,
                   help="Gaussian weight of the eigenvalue density (default 0.5)")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                   help="sampling worker processes (default: machine parallelism)")
    if need_k:
        p.add_argument("--k", type=int, default=1, help="ratio order (default 1)")
        p.add_argument("--bulk", type=float, default=1.0,
                       help="central fraction of levels kept (default 1.0)")


def _add_window_args(p):
    p.add_argument("--small-window", type=_parse_window,
                   default=DEFAULT_SMALL_WINDOW, metavar="LO:HI",
                   help="small-r regression window (default 0.02:0.2)")
    p.add_argument("--large-window", type=_parse_window,
                   default=DEFAULT_LARGE_WINDOW, metavar="LO:HI",
                   help="large-r regression window (default 5:50)")
    p.add_argument("--min-count", type=int, default=500,
                   help="minimum in-window sample count (default 500)")
    p.add_argument("--tail-bins", type=int, default=10,
                   help="log bins per tail regression (default 10)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spacing-ratios",
        description="Monte Carlo spacing-ratio statistics of Gaussian beta-ensembles.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="write sampled spectra as CSV")
    _add_ensemble_args(p, need_k=False)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("ratios", help="write pooled k-th order ratios as CSV")
    _add_ensemble_args(p)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_ratios)

    p = sub.add_parser("fit", help="fit the effective index by maximum likelihood")
    _add_ensemble_args(p)
    p.add_argument("--out", required=True, help="output path")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("tails", help="tail-slope regression on both windows")
    _add_ensemble_args(p)
    _add_window_args(p)
    p.add_argument("--out", required=True, help="output path")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.set_defaults(func=_cmd_tails)

    p = sub.add_parser("duality", help="KS statistic between ratios and reciprocals")
    _add_ensemble_args(p)
    p.add_argument("--out", required=True, help="output path")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.set_defaults(func=_cmd_duality)

    p = sub.add_parser("curves", help="evaluate a reference density on a log grid")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--beta-prime", dest="beta_prime", type=float,
                       help="family index of the density to evaluate")
    group.add_argument("--poisson-k", dest="poisson_k", type=int,
                       help="order of the Poisson reference density")
    p.add_argument("--grid-log", dest="grid_log", type=_parse_log_grid,
                   default=(1e-3, 1e3, 200), metavar="LO:HI:POINTS",
                   help="logarithmic evaluation grid (default 1e-3:1e3:200)")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_curves)

    p = sub.add_parser("verify", help="full scaling-law verification pipeline")
    _add_ensemble_args(p)
    _add_window_args(p)
    p.add_argument("--mode", choices=[m.value for m in VerifyMode],
                   default=VerifyMode.SURMISE.value)
    p.add_argument("--ks-threshold", type=float, default=None,
                   help="KS pass limit (default 0.01 surmise, 0.02 large-n)")
    p.add_argument("--duality-threshold", type=float, default=None,
                   help="duality KS pass limit (default 5/sqrt(n_ratios))")
    p.add_argument("--beta-tolerance", dest="beta_tolerance", type=float, default=0.5,
                   help="index check: |fit - predicted| limit beyond the CI (default 0.5)")
    p.add_argument("--slope-tolerance", dest="slope_tolerance", type=float, default=0.75,
                   help="tail check: |slope - exponent| limit (default 0.75)")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if getattr(args, "n", "absent") is None:
        if hasattr(args, "k"):
            args.n = 2 * args.k + 1
        else:
            parser.error("--n is required for this command")
    if hasattr(args, "k") and hasattr(args, "n"):
        if args.n < 2 * args.k + 1:
            parser.error(
                f"--n {args.n} cannot support order k={args.k}; need n >= {2 * args.k + 1}"
            )

    try:
        return args.func(args)
    except SpacingRatiosError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
