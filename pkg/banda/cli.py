#!/usr/bin/env python3
"""Command-line interface for the banda aging laboratory."""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from banda.config import ExperimentConfig, ModelParams, Suite, load_config, regime_warnings
from banda.errors import BandaError, ConfigError
from banda.observe import read_traps_csv
from banda.stats import Verdict, suite_verdict
from banda.suites import REPORT_FILE, run_suite, scales_for, trap_reports, write_json

logger = logging.getLogger(__name__)

SIMULATE_SUITES = (Suite.DYNAMICS, Suite.CLOCK, Suite.AGE, Suite.ALL)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON experiment configuration")
    model = parser.add_argument_group("model (override the configuration)")
    model.add_argument("--n", type=int, help="hypercube dimension N")
    model.add_argument("--beta", type=float, help="inverse temperature")
    model.add_argument("--cbar", type=float, help="time-scale exponent, t_N = exp(cbar N)")
    model.add_argument("--alpha", type=float, help="choose cbar so that sqrt(2 cbar)/beta equals alpha")
    model.add_argument("--abar", type=float, help="a_N = abar sqrt(2 log N)")
    model.add_argument("--a", type=float, help="explicit a_N (0 gives random hopping times)")
    model.add_argument("--delta", type=float, help="deep-trap threshold in units of B_N")
    model.add_argument("--seed", type=int, help="base seed")
    run = parser.add_argument_group("experiment")
    run.add_argument("--horizon", type=float, help="horizon in units of t_N")
    run.add_argument("--replicas", type=int, help="number of replicas")
    run.add_argument("--workers", type=int, help="worker processes")
    run.add_argument("--output-dir", type=Path, help="artifact directory")
    run.add_argument("--no-trends", action="store_true", help="skip checks across the N grid")
    run.add_argument("--n-grid", type=int, nargs="+", metavar="N", help="system sizes for the trend checks")
    run.add_argument("--delta-grid", type=float, nargs="+", metavar="DELTA", help="thresholds for the truncated checks")
    run.add_argument("--max-events", type=int, help="event budget per trajectory")
    run.add_argument(
        "--fresh-env-per-replica",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="draw a new environment for every replica",
    )
    run.add_argument(
        "--use-d-estimate",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="use the simulated d_N instead of the asymptotic one",
    )
    run.add_argument("--csv-replicas", type=int, help="replicas whose paths are written to CSV")
    run.add_argument("--green-samples", type=int, help="killed runs per Green estimate")
    run.add_argument("--green-escape-radius", type=int, help="Hamming radius that stops a Green run")
    run.add_argument("--exact-n", type=int, help="dimension of the exact small-N checks")
    run.add_argument("--exact-environments", type=int, help="environments per exact check")
    run.add_argument("--sst-runs", type=int, help="runs of the first-step sampler checks")
    run.add_argument("--h2-runs", type=int, help="runs of the exit-time check")
    run.add_argument("--limit-paths", type=int, help="limit-process paths per check")
    run.add_argument("--limit-eps", type=float, help="small-jump cutoff of the limit samplers")
    run.add_argument("--bootstrap", type=int, help="bootstrap resamples")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeat for debug)")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="only log errors")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="banda",
        description="Simulate and verify aging of Bouchaud dynamics on the random energy model",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  banda scales --n 24 --beta 1.5 --alpha 0.6        # Print the scale quantities
  banda exact --config lab.json                      # Exact small-N identities
  banda traps --config lab.json --replicas 100       # Deep-trap statistics
  banda simulate --config lab.json --suite clock     # Clock limit checks
  banda report --output-dir banda-output             # Summarize a finished run
        """,
    )
    parser.add_argument("--version", action="version", version="%(prog)s 0.1.0")
    sub = parser.add_subparsers(dest="command", required=True)

    scales = sub.add_parser("scales", help="print phi, alpha, b_N, B_N, t_N, d_N")
    _add_common(scales)
    scales.add_argument("--estimate-d", action="store_true", help="also estimate d_N by simulation")

    simulate = sub.add_parser("simulate", help="run walk-based suites (dynamics, clock, age)")
    _add_common(simulate)
    simulate.add_argument(
        "--suite", choices=[s.value for s in SIMULATE_SUITES], default=Suite.DYNAMICS.value, help="suite to run"
    )

    for name, text in (
        ("traps", "deep-trap detection and pooled statistics"),
        ("exact", "exact linear-algebra checks at small N"),
        ("limits", "limit-process sampler checks"),
    ):
        _add_common(sub.add_parser(name, help=text))

    analyze = sub.add_parser("analyze", help="recompute trap statistics from a traps.csv")
    _add_common(analyze)
    analyze.add_argument("--traps-csv", type=Path, help="traps.csv to analyze (default: in the output dir)")

    report = sub.add_parser("report", help="summarize a report.json")
    report.add_argument("path", type=Path, nargs="?", default=Path("banda-output"), help="report file or directory")
    return parser


def _configure_logging(args: argparse.Namespace) -> None:
    if getattr(args, "quiet", False):
        level = logging.ERROR
    else:
        level = {0: logging.WARNING, 1: logging.INFO}.get(getattr(args, "verbose", 0), logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Configuration file (if any) with command-line overrides applied."""
    base = load_config(args.config) if args.config else None
    model_changes = {
        key: getattr(args, key)
        for key in ("n", "beta", "cbar", "abar", "a", "delta", "seed")
        if getattr(args, key) is not None
    }
    if base is None:
        missing = [k for k in ("n", "beta") if k not in model_changes]
        if args.alpha is None and "cbar" not in model_changes:
            missing.append("cbar or alpha")
        if missing:
            raise ConfigError(f"without --config, these are required: {', '.join(missing)}")
        if args.alpha is not None:
            model_changes["cbar"] = (args.alpha * model_changes["beta"]) ** 2 / 2.0
        config = ExperimentConfig(model=ModelParams(**model_changes))
    else:
        if args.alpha is not None:
            beta = model_changes.get("beta", base.model.beta)
            model_changes["cbar"] = (args.alpha * beta) ** 2 / 2.0
        try:
            config = base.with_model(**model_changes)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    run_changes = {
        "horizon_t": args.horizon,
        "replicas": args.replicas,
        "workers": args.workers,
        "output_dir": args.output_dir,
        "n_grid": None if args.n_grid is None else tuple(args.n_grid),
        "delta_grid": None if args.delta_grid is None else tuple(args.delta_grid),
        "max_events": args.max_events,
        "fresh_env_per_replica": args.fresh_env_per_replica,
        "use_d_estimate": args.use_d_estimate,
        "csv_replicas": args.csv_replicas,
        "green_samples": args.green_samples,
        "green_escape_radius": args.green_escape_radius,
        "exact_n": args.exact_n,
        "exact_environments": args.exact_environments,
        "sst_runs": args.sst_runs,
        "h2_runs": args.h2_runs,
        "limit_paths": args.limit_paths,
        "limit_eps": args.limit_eps,
        "bootstrap": args.bootstrap,
    }
    config = replace(config, **{k: v for k, v in run_changes.items() if v is not None})
    if args.no_trends:
        config = replace(config, n_grid=())
    return config


def _print_summary(reports: list, verdict: Verdict) -> None:
    for report in reports:
        p = "" if report.get("p_value") is None else f"  p={report['p_value']:.4g}"
        statistic = report.get("statistic")
        shown = "nan" if statistic is None else f"{statistic:.6g}"
        print(f"{report['verdict']:>12}  {report['name']}: {shown}{p}")
    print(f"verdict: {verdict.value}")


def _cmd_scales(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    if args.estimate_d:
        config = replace(config, use_d_estimate=True)
    scales = scales_for(config)
    data = scales.as_dict()
    data["warnings"] = regime_warnings(config.model)
    print(json.dumps(data, indent=2, sort_keys=True))
    return 0


def _cmd_suite(args: argparse.Namespace, suite: Suite) -> int:
    config = replace(config_from_args(args), suite=suite)
    status, reports = run_suite(config)
    verdict = suite_verdict(reports, config.tolerances.suite_pass_fraction)
    _print_summary([r.to_dict() for r in reports], verdict)
    print(f"OK: artifacts in {config.output_dir}")
    return status


def _cmd_analyze(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    path = args.traps_csv or Path(config.output_dir) / "traps.csv"
    try:
        events = read_traps_csv(path, config.replicas)
    except OSError as e:
        print(f"Error: cannot read '{path}': {e}", file=sys.stderr)
        return 1
    reports = trap_reports(events, scales_for(config), config)
    verdict = suite_verdict(reports, config.tolerances.suite_pass_fraction)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json({"source": str(path), "verdict": verdict.value, "reports": [r.to_dict() for r in reports]}, out / "analysis.json")
    _print_summary([r.to_dict() for r in reports], verdict)
    return 2 if verdict is Verdict.FAIL else 0


def _cmd_report(args: argparse.Namespace) -> int:
    path = args.path / REPORT_FILE if args.path.is_dir() else args.path
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        print(f"Error: report file '{path}' not found", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as e:
        print(f"Error reading report file: {e}", file=sys.stderr)
        return 1
    verdict = Verdict(data["verdict"])
    _print_summary(data["reports"], verdict)
    return 2 if verdict is Verdict.FAIL else 0


def main(argv: list[str] | None = None) -> int:
    """Main entry point for the CLI."""
    args = build_parser().parse_args(argv)
    _configure_logging(args)
    try:
        if args.command == "scales":
            return _cmd_scales(args)
        if args.command == "simulate":
            return _cmd_suite(args, Suite(args.suite))
        if args.command in ("traps", "exact", "limits"):
            return _cmd_suite(args, Suite(args.command))
        if args.command == "analyze":
            return _cmd_analyze(args)
        return _cmd_report(args)
    except BandaError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"Error writing artifacts: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
