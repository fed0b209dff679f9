"""Command-line interface.

Subcommands:

    simulate <config>          full scenario run (config file or bundled name)
    g2 <signal> <idler>        delay histogram + g2 from two timestamp files
    fit <histogram.csv>        Gaussian peak fit of a histogram CSV
    phasematch                 temperature-tuned phase-matching curve CSV
    report <run-dir>           recompute and print a run report

Exit codes: 0 success, 1 validation error (bad flags, bad config),
2 runtime failure.  The default output root is $FSOLINK_OUTPUT_ROOT or the
working directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import correlation, harness, photonics, streams
from .errors import ConfigError, FsoLinkError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="fsolink", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_sim = sub.add_parser("simulate", help="run a full scenario")
    p_sim.add_argument("config", help="scenario JSON path, or 'paper-default' / 'fast-ci'")
    p_sim.add_argument("--out", default=None, help="output directory")

    p_g2 = sub.add_parser("g2", help="coincidence histogram and g2 of two streams")
    p_g2.add_argument("signal", help="signal timestamps (.bin or .csv)")
    p_g2.add_argument("idler", help="idler timestamps (.bin or .csv)")
    p_g2.add_argument("--bin-ps", type=int, default=162)
    p_g2.add_argument("--range-ps", type=int, default=10044)
    p_g2.add_argument("--out", default=None, help="histogram CSV path (default stdout)")

    p_fit = sub.add_parser("fit", help="Gaussian fit of a histogram CSV")
    p_fit.add_argument("histogram", help="CSV with tau/counts columns")
    p_fit.add_argument(
        "--column", default="counts", choices=("counts", "g2", "g2_subtracted"),
        help="which column to fit",
    )

    p_pm = sub.add_parser("phasematch", help="phase-matching curve vs temperature")
    p_pm.add_argument("--tmin", type=float, required=True)
    p_pm.add_argument("--tmax", type=float, required=True)
    p_pm.add_argument("--step", type=float, required=True)
    p_pm.add_argument("--out", default=None, help="CSV path (default stdout)")

    p_rep = sub.add_parser("report", help="recompute a run report from artifacts")
    p_rep.add_argument("run_dir")
    return parser


def _load_stream_arg(path: str, channel: str) -> streams.PhotonEventStream:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"no such file: {path}")
    if p.suffix == ".csv":
        return streams.load_stream_csv(p, channel)
    return streams.load_stream(p)


def _cmd_simulate(args) -> int:
    cfg = harness.load_config(args.config)
    out = args.out
    if out is None:
        root = os.environ.get("FSOLINK_OUTPUT_ROOT", ".")
        stem = Path(str(args.config)).stem.replace("-", "_")
        out = Path(root) / f"run_{stem}"
    report = harness.run_scenario(cfg, out)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_g2(args) -> int:
    sig = _load_stream_arg(args.signal, "signal")
    idl = _load_stream_arg(args.idler, "idler")
    hist = correlation.coincidence_histogram(sig, idl, args.bin_ps, args.range_ps)
    try:
        hist = correlation.g2_normalize(hist)
        hist = correlation.subtract_accidentals(hist)
    except ConfigError:
        pass  # counts-only output when rates or range do not allow g2
    if args.out:
        hist.save_csv(args.out)
    else:
        hist.save_csv(sys.stdout)
    return 0


def _cmd_fit(args) -> int:
    p = Path(args.histogram)
    if not p.is_file():
        raise ConfigError(f"no such file: {args.histogram}")
    mat = np.loadtxt(p, delimiter=",", comments="#")
    if mat.ndim == 1:
        mat = mat[None, :]
    col = {"counts": 1, "g2": 2, "g2_subtracted": 3}[args.column]
    if mat.shape[1] <= col:
        raise ConfigError(f"histogram has no column {args.column!r}")
    y = mat[:, col]
    if not np.all(np.isfinite(y)):
        raise ConfigError(f"column {args.column!r} contains non-finite values")
    fit = correlation.fit_gaussian(mat[:, 0], y)
    for key, val in (
        ("amplitude", fit.amplitude),
        ("center", fit.center),
        ("sigma", fit.sigma),
        ("offset", fit.offset),
        ("fwhm", fit.fwhm),
        ("residual_norm", fit.residual_norm),
    ):
        print(f"{key}={val:.10g}")
    return 0


def _cmd_phasematch(args) -> int:
    if args.step <= 0 or args.tmax < args.tmin:
        raise ConfigError("need tmin <= tmax and step > 0")
    params = photonics.PhaseMatchParams()
    lines = ["temp_C,lambda_s_nm,lambda_i_nm"]
    t = args.tmin
    while t <= args.tmax + 1e-9:
        try:
            ls, li = photonics.phase_matched_wavelengths(t, params)
            lines.append(f"{t:.4f},{ls:.6f},{li:.6f}")
        except photonics.PhaseMatchError:
            lines.append(f"{t:.4f},nan,nan")
        t += args.step
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_report(args) -> int:
    report = harness.regenerate_report(args.run_dir)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "g2": _cmd_g2,
    "fit": _cmd_fit,
    "phasematch": _cmd_phasematch,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"fsolink: {exc}", file=sys.stderr)
        return 1
    except FsoLinkError as exc:
        print(f"fsolink: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"fsolink: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure inside a run
        print(f"fsolink: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
