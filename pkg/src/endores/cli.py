"""Command-line entry point: ``endores run | fit | validate``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from endores import __version__
from endores.errors import EndoresError, IoError, ParseError, ValidationError
from endores.eventsplit import SplitSpec, comparative_study, read_csv_dataset
from endores.runner import (
    FORMATS,
    default_config_text,
    dumps,
    format_float,
    parse_config,
    run_experiment,
    serialize_report,
    write_report,
)

log = logging.getLogger("endores")

EXIT_OK = 0
EXIT_STAT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_IO = 3


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="endores",
        description="Monte Carlo checks of endogeneity bias cancellation in comparative regressions.",
    )
    parser.add_argument("--version", action="version", version=f"endores {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config (default: the shipped study)")
    run.add_argument("--config", type=Path, help="experiment JSON; omit for the built-in study")
    run.add_argument("--seed", type=_u64, help="override master_seed")
    run.add_argument("--reps", type=int, help="override replications for every scenario")
    run.add_argument("--format", choices=FORMATS, help="override output format")
    run.add_argument("--out", type=Path, help="report path; stdout when neither this nor the config sets one")
    run.add_argument("--timing", action="store_true", help="record wall-clock duration in the report")

    fit = sub.add_parser("fit", help="before/after OLS comparison on a CSV dataset")
    fit.add_argument("--data", type=Path, required=True)
    fit.add_argument("--response", required=True, help="name of the response column")
    fit.add_argument("--event", type=int, required=True, help="0-based first data row of the after period")
    fit.add_argument("--window", type=int, default=0, help="rows dropped on each side of the event")
    fit.add_argument("--intercept", action="store_true", help="prepend a column of ones")
    fit.add_argument("--format", choices=FORMATS, default="json")
    fit.add_argument("--out", type=Path)

    val = sub.add_parser("validate", help="parse and validate a config without running it")
    val.add_argument("--config", type=Path, required=True)
    return parser


def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        out.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {out}: {exc}") from exc


def _cmd_run(args) -> int:
    text = default_config_text() if args.config is None else _read(args.config)
    config = parse_config(text).with_overrides(
        seed=args.seed,
        reps=args.reps,
        format=args.format,
        output_path=None if args.out is None else str(args.out),
    )
    report = run_experiment(config)
    log.info("ran %d scenarios in %.2fs", len(report.scenarios), report.duration_s)
    for s in report.scenarios:
        if s.error is not None:
            log.warning("%s: %s", s.name, s.error)
        else:
            log.info("%s: %s%s", s.name, s.result.verdict, "" if s.ok else " (IDENTITY BREACH)")
    if config.output_path is None:
        sys.stdout.write(serialize_report(report, config.format, timing=args.timing))
    else:
        write_report(report, config.format, config.output_path, timing=args.timing)
    return EXIT_STAT_FAILURE if report.failed else EXIT_OK


def _fit_payload(res) -> dict:
    p = res.diff.diff.shape[0]
    labels = list(res.labels) if res.labels else [f"x{j}" for j in range(p)]

    def floats(v):
        return [float(x) for x in v]

    return {
        "labels": labels,
        "n_before": res.n_b,
        "n_after": res.n_a,
        "dropped": res.dropped,
        "beta_before": floats(res.fit_b.beta_hat),
        "beta_after": floats(res.fit_a.beta_hat),
        "se_before": floats(res.fit_b.se),
        "se_after": floats(res.fit_a.se),
        "diff": floats(res.diff.diff),
        "diff_se": floats(res.diff.se),
        "z_scores": floats(res.diff.z_scores),
        "condition_before": res.fit_b.condition_number,
        "condition_after": res.fit_a.condition_number,
        "gram_discrepancy": res.gram_discrepancy,
    }


def _fit_csv(payload: dict) -> str:
    cols = ("coef", "label", "beta_before", "beta_after", "diff", "diff_se", "z_score")
    lines = [",".join(cols)]
    for j, label in enumerate(payload["labels"]):
        nums = (
            payload["beta_before"][j],
            payload["beta_after"][j],
            payload["diff"][j],
            payload["diff_se"][j],
            payload["z_scores"][j],
        )
        lines.append(",".join([str(j), label, *(format_float(v) or "nan" for v in nums)]))
    return "\n".join(lines) + "\n"


def _cmd_fit(args) -> int:
    if not args.data.exists():
        raise IoError(f"cannot read {args.data}: no such file")
    data = read_csv_dataset(args.data, args.response, intercept=args.intercept)
    res = comparative_study(data, SplitSpec(args.event, args.window))
    payload = _fit_payload(res)
    _emit(dumps(payload) if args.format == "json" else _fit_csv(payload), args.out)
    return EXIT_OK


def _cmd_validate(args) -> int:
    config = parse_config(_read(args.config))
    print(f"ok: {len(config.scenarios)} scenarios")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    handler = {"run": _cmd_run, "fit": _cmd_fit, "validate": _cmd_validate}[args.command]
    try:
        return handler(args)
    except IoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EndoresError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
