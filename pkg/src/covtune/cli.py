"""Command-line front end.

Subcommands:
  study      run a comparison study from a config file into an output directory
  estimate   tune and write a covariance estimate for a data file
  summarize  aggregate a records CSV into the per-cell summary

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .estimators import LINEAR_FAMILIES, apply, empirical_cov, make_spec
from .frobenius_risk import frobenius_constant
from .linalg import NumericalError, RngStream
from .selection import parse_rule
from .study import (
    StudyConfig,
    read_records,
    rule_rankings,
    run_study,
    select_lambda,
    summarize,
    write_records,
    write_summary,
)

log = logging.getLogger(__name__)

FAMILY_ALIASES = {"hard": "hard", "soft": "soft", "band": "banding", "taper": "tapering"}

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class UsageError(ValueError):
    pass


class DataFormatError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; the contract reserves 2 for data errors
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def read_data_csv(path, skip_header: bool = False) -> np.ndarray:
    """Parse a headerless numeric CSV (rows = observations); errors carry the
    offending line and column."""
    rows = []
    width = None
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataFormatError(f"cannot open {path}: {exc}") from exc
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if skip_header and lineno == 1:
                continue
            if not row or all(not tok.strip() for tok in row):
                continue
            vals = []
            for colno, tok in enumerate(row, start=1):
                try:
                    vals.append(float(tok))
                except ValueError:
                    raise DataFormatError(
                        f"{path}: line {lineno}, column {colno}: {tok.strip()!r} is not a number"
                    ) from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise DataFormatError(
                    f"{path}: line {lineno}: expected {width} columns, found {len(vals)}"
                )
            rows.append(vals)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return np.asarray(rows, dtype=float)


def write_matrix(path, m) -> None:
    m = np.asarray(m, dtype=float)
    with open(path, "w", newline="") as fh:
        for row in m:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _resolve_threads(flag_value, config_value) -> int:
    # flags win over config; config wins over the environment
    if flag_value is not None:
        return flag_value
    if config_value is not None and config_value > 0:
        return config_value
    env = os.environ.get("COVTUNE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"COVTUNE_THREADS={env!r} is not an integer") from None
    return 1


def _cmd_study(args) -> int:
    config = StudyConfig.from_ini(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    overrides["threads"] = _resolve_threads(args.threads, config.threads)
    if overrides:
        config = StudyConfig(**{**vars(config), **overrides})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    handler = logging.FileHandler(out / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
    root = logging.getLogger("covtune")
    root.addHandler(handler)
    root.setLevel(logging.INFO)
    try:
        (out / "config.echo.ini").write_text(config.to_ini())

        def progress(done, total):
            if done % 10 == 0 or done == total:
                print(f"replications done: {done}/{total}", file=sys.stderr)

        records = run_study(config, progress=progress)
        write_records(records, out / "records.csv")
        summary = summarize(records)
        write_summary(summary, out / "summary.csv")
        rule_rankings(summary).to_csv(out / "summary_ranks.csv", index=False, na_rep="NA")
        if not args.no_figures:
            from .figures import render_summary_figures

            paths = render_summary_figures(summary, out / "figures")
            log.info("rendered %d figures", len(paths))
        failed = int((records["status"] != "ok").sum())
        print(f"wrote {len(records)} records ({failed} failed) to {out}")
    finally:
        root.removeHandler(handler)
        handler.close()
    return EXIT_OK


def _cmd_estimate(args) -> int:
    family = FAMILY_ALIASES.get(args.family)
    if family is None:
        raise UsageError(f"unknown family {args.family!r}; use one of {sorted(FAMILY_ALIASES)}")
    try:
        rule = parse_rule(args.rule, n_boot=args.bootstrap_samples)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if rule.kind in ("sure", "boot_operator") and family not in LINEAR_FAMILIES:
        raise UsageError(f"rule {rule.name!r} pairs only with band/taper, not {args.family}")
    x = read_data_csv(args.data, skip_header=args.header)
    if x.shape[0] < 2:
        raise DataFormatError(f"{args.data}: need at least 2 observation rows, found {x.shape[0]}")
    truth = None
    if args.truth is not None:
        truth = read_data_csv(args.truth)
        if truth.shape != (x.shape[1], x.shape[1]):
            raise DataFormatError(
                f"{args.truth}: expected a {x.shape[1]}x{x.shape[1]} matrix, found {truth.shape}"
            )
        truth = (truth + truth.T) / 2.0
    if rule.kind == "oracle" and truth is None:
        raise UsageError("rule oracle_* requires --truth")

    spec = make_spec(family, x=x)
    result = select_lambda(rule, spec, x, RngStream(args.seed), truth=truth)
    estimate = apply(spec, empirical_cov(x), result.selected)
    out = Path(args.out)
    write_matrix(out, estimate)

    report = out.with_name(out.name + ".report.csv")
    with open(report, "w", newline="") as fh:
        fh.write(f"# family={family} rule={rule.name} seed={args.seed}\n")
        fh.write(f"# selected_lambda={result.selected:.17g}\n")
        if rule.kind in ("boot_frobenius", "sure"):
            fh.write(f"# risk_constant={frobenius_constant(x):.17g}"
                     f" (omitted from the scores; subtract it for an un-shifted risk)\n")
        if "lam0" in result.details:
            fh.write(f"# pilot_lambda={result.details['lam0']:.17g}\n")
        fh.write("lambda,score\n")
        for lam, score in zip(result.lambdas, result.scores):
            fh.write(f"{lam:.17g},{score:.17g}\n")
    if not args.no_figures:
        from .figures import render_score_curve

        render_score_curve(result, out.with_name(out.name + ".report.png"),
                           title=f"{family} / {rule.name}")
    print(f"selected lambda {result.selected:g}; estimate written to {out}")
    return EXIT_OK


def _cmd_summarize(args) -> int:
    try:
        records = read_records(args.input)
    except (OSError, ValueError) as exc:
        raise DataFormatError(str(exc)) from exc
    summary = summarize(records, trim=args.trim)
    write_summary(summary, args.out)
    out = Path(args.out)
    ranks_path = out.with_name(out.stem + "_ranks" + out.suffix)
    rule_rankings(summary).to_csv(ranks_path, index=False, na_rep="NA")
    if not args.no_figures and not summary.empty:
        from .figures import render_summary_figures

        render_summary_figures(summary, out.parent / (out.stem + "_figures"))
    print(f"wrote {len(summary)} summary rows to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="covtune", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_study = sub.add_parser("study", help="run a comparison study from a config file")
    p_study.add_argument("--config", required=True, help="INI study configuration")
    p_study.add_argument("--out", required=True, help="output directory")
    p_study.add_argument("--threads", type=int, default=None, help="worker processes")
    p_study.add_argument("--seed", type=int, default=None, help="override the base seed")
    p_study.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p_study.set_defaults(func=_cmd_study)

    p_est = sub.add_parser("estimate", help="tune and write a covariance estimate")
    p_est.add_argument("--data", required=True, help="headerless CSV, rows = observations")
    p_est.add_argument("--family", required=True, choices=sorted(FAMILY_ALIASES),
                       help="estimator family")
    p_est.add_argument("--rule", required=True,
                       help="selection rule name, e.g. cv10_f, recv3_op, rcv2_f, boot_f, sure, "
                            "boot_op, oracle_f")
    p_est.add_argument("--truth", default=None, help="true covariance CSV (oracle rules)")
    p_est.add_argument("--seed", type=int, default=0)
    p_est.add_argument("--out", required=True, help="output matrix CSV")
    p_est.add_argument("--header", action="store_true", help="skip one header line in --data")
    p_est.add_argument("--bootstrap-samples", type=int, default=200, metavar="B",
                       help="bootstrap resamples for boot_* rules")
    p_est.add_argument("--no-figures", action="store_true", help="skip the score-curve figure")
    p_est.set_defaults(func=_cmd_estimate)

    p_sum = sub.add_parser("summarize", help="aggregate a records CSV")
    p_sum.add_argument("--in", dest="input", required=True, help="records CSV from a study run")
    p_sum.add_argument("--out", required=True, help="summary CSV path")
    p_sum.add_argument("--trim", type=float, default=0.0,
                       help="drop this fraction of the largest errors per cell before averaging "
                            "(diverges from the plain MSE; default 0)")
    p_sum.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p_sum.set_defaults(func=_cmd_summarize)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"covtune: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataFormatError as exc:
        print(f"covtune: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"covtune: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"covtune: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
