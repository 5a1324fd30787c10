"""Command-line interface.

Exit status is 0 on success (including non-rejections and failed fits,
which are data outcomes), 2 on usage errors and 3 on I/O or parse errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from io import StringIO
from pathlib import Path

from . import __version__
from .asymptotics import asymptotic_curve
from .config import SweepConfig, config_from_dict, r_grid
from .io import DatasetError, format_value, write_table
from .model import RegionDesign

log = logging.getLogger("occutest")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3

SWEEP_COMMANDS = ("power", "medians", "agreement", "eigen", "scatter", "all")


# --------------------------------------------------------------------------
# flag types


def probability(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return value


def effect_size(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1), got {text}")
    return value


def positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {text}")
    return value


def seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"must lie in [0, 2^64), got {text}")
    return value


# --------------------------------------------------------------------------
# parser


def _study_flags(parser: argparse.ArgumentParser, r_step: float, r_max: float, reps: int) -> None:
    g = parser.add_argument_group("study configuration")
    g.add_argument("--psi1", type=probability, help="occupancy in region 1 (default 0.8)")
    g.add_argument("--psi2", type=probability, help="occupancy in region 2; sets a single effect size 1 - psi2/psi1")
    g.add_argument("--p1", type=probability, help="detection probability in region 1 (default 0.5)")
    g.add_argument("--p2", type=probability, help="detection probability in region 2 (default 0.5)")
    g.add_argument("--K", type=positive_int, help="visits per site in both regions (default 3)")
    g.add_argument("--N1", type=positive_int, help="sites in region 1 (default 50)")
    g.add_argument("--N2", type=positive_int, help="sites in region 2 (default 50)")
    g.add_argument("--r-min", type=effect_size, help="first effect size of the grid (default 0)")
    g.add_argument("--r-max", type=effect_size, help=f"last effect size of the grid (default {r_max:g})")
    g.add_argument("--r-step", type=positive_float, help=f"grid spacing (default {r_step:g})")
    g.add_argument("--reps", type=positive_int, help=f"replicates per effect size (default {reps})")
    g.add_argument("--alpha", type=probability, help="significance level (default 0.05)")
    g.add_argument("--seed", type=seed, help="base seed (default 20240101)")
    g.add_argument("--config", type=Path, help="resolved configuration file written by an earlier run")
    parser.set_defaults(default_r_step=r_step, default_r_max=r_max, default_reps=reps)


def _output_flags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("output")
    g.add_argument("--out-dir", type=Path, default=Path("."), help="directory for output files (default .)")
    g.add_argument("--format", choices=("csv", "json"), default="csv", help="table format (default csv)")
    g.add_argument("--no-plot", action="store_true", help="do not write SVG figures")
    g.add_argument("--workers", type=positive_int, default=1, help="worker processes (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="occutest",
        description="Two-sample occupancy tests and Monte Carlo studies of their behaviour.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("test", help="run all four tests on a dataset")
    p.add_argument("input", type=Path, help="dataset CSV (summary or site-level layout)")
    p.add_argument("--alpha", type=probability, default=0.05, help="significance level (default 0.05)")
    p.add_argument(
        "--rule",
        choices=("standard", "modified"),
        default="modified",
        help="rule for the headline observed-score decision (default modified)",
    )
    p.add_argument("--format", choices=("text", "csv", "json"), default="text", help="report format (default text)")
    p.add_argument("--out-dir", type=Path, help="also write the report to this directory")

    helps = {
        "power": "rejection rates over the effect-size grid",
        "medians": "medians of the score statistics and their ratio",
        "agreement": "agreement between the expected- and observed-information score tests",
        "eigen": "median eigenvalues of the observed information at the null fit",
        "scatter": "per-replicate expected and observed score statistics",
        "all": "power, medians, agreement, eigen and scatter from one simulation",
    }
    for name in SWEEP_COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        _study_flags(p, r_step=0.025, r_max=0.9, reps=10_000)
        _output_flags(p)
        if name in ("power", "all"):
            p.add_argument(
                "--filter",
                choices=("per-test", "common"),
                default="per-test",
                help="replicates counted per test, or only those where every test was computed",
            )
        if name in ("agreement", "all"):
            p.add_argument(
                "--rule",
                choices=("standard", "modified"),
                help="standard: positive observed statistics only; modified: all, with the modified rule "
                "(default both)",
            )

    p = sub.add_parser("asymptotics", help="pseudo-true parameters and eigenvalue curves")
    _study_flags(p, r_step=0.01, r_max=0.99, reps=1)
    _output_flags(p)

    p = sub.add_parser("fig6", help="reciprocal leading eigenvalue of the projected matrix per dataset")
    _study_flags(p, r_step=0.025, r_max=0.9, reps=1000)
    _output_flags(p)
    p.add_argument("--R", type=effect_size, help="effect size (default 0.6, or the single R of --config)")
    return parser


# --------------------------------------------------------------------------
# configuration


class UsageError(Exception):
    pass


def resolve_config(args) -> SweepConfig:
    """Defaults, then ``--config``, then explicit flags."""
    base = SweepConfig(R_grid=r_grid(0.0, args.default_r_max, args.default_r_step), replicates=args.default_reps)
    if args.config is not None:
        try:
            values = json.loads(args.config.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{args.config}: line {exc.lineno}: {exc.msg}") from None
        values = values.get("config", values)
        try:
            base = config_from_dict(values)
        except (TypeError, ValueError, KeyError) as exc:
            raise UsageError(f"--config: {exc}") from None

    changes = {}
    for flag in ("psi1", "p1", "p2", "alpha"):
        if getattr(args, flag) is not None:
            changes[flag] = getattr(args, flag)
    if args.reps is not None:
        changes["replicates"] = args.reps
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if args.K is not None or args.N1 is not None:
        changes["design_1"] = RegionDesign(
            args.N1 if args.N1 is not None else base.design_1.n_sites,
            args.K if args.K is not None else base.design_1.n_visits,
        )
    if args.K is not None or args.N2 is not None:
        changes["design_2"] = RegionDesign(
            args.N2 if args.N2 is not None else base.design_2.n_sites,
            args.K if args.K is not None else base.design_2.n_visits,
        )

    grid_flags = (args.r_min, args.r_max, args.r_step)
    if args.psi2 is not None:
        if any(v is not None for v in grid_flags):
            raise UsageError("--psi2 cannot be combined with --r-min/--r-max/--r-step")
        psi1 = changes.get("psi1", base.psi1)
        if args.psi2 > psi1:
            raise UsageError(f"--psi2 must not exceed --psi1 ({psi1:g}), got {args.psi2:g}")
        changes["R_grid"] = (round(1.0 - args.psi2 / psi1, 10),)
    elif any(v is not None for v in grid_flags):
        r_min = args.r_min if args.r_min is not None else 0.0
        r_max = args.r_max if args.r_max is not None else args.default_r_max
        step = args.r_step if args.r_step is not None else args.default_r_step
        if r_max < r_min:
            raise UsageError(f"--r-max ({r_max:g}) must not be below --r-min ({r_min:g})")
        changes["R_grid"] = r_grid(r_min, r_max, step)
    try:
        return base.with_(**changes)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _options(args) -> dict:
    out = {}
    for name in ("filter", "rule", "R"):
        if hasattr(args, name):
            out[name] = getattr(args, name)
    return out


def _record_config(args, config: SweepConfig) -> None:
    record = {"command": args.command, "config": config.to_dict(), "options": _options(args)}
    text = json.dumps(record, indent=2, sort_keys=True)
    log.info("resolved configuration:\n%s", text)
    print(f"resolved configuration: {json.dumps(record, sort_keys=True)}", file=sys.stderr)
    (args.out_dir / "config.json").write_text(text + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# commands


def cmd_test(args) -> int:
    from .analysis import analyze_dataset, format_report
    from .io import read_dataset

    dataset = read_dataset(args.input)
    report = analyze_dataset(dataset.data, dataset.designs, args.alpha)
    observed = next(t for t in report.tests if t.test == "score_observed")
    decision = observed.reject_modified if args.rule == "modified" else observed.reject_standard

    if args.format == "json":
        text = json.dumps(report.to_dict(), indent=2) + "\n"
    elif args.format == "csv":
        buf = StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["test", "statistic", "p_value", "reject_standard", "reject_modified", "note"])
        for t in report.tests:
            writer.writerow(
                [t.test]
                + [format_value(v) for v in (t.statistic, t.p_value, t.reject_standard, t.reject_modified)]
                + [t.note]
            )
        text = buf.getvalue()
    else:
        text = format_report(report) + "\n"
        if decision is not None:
            text += f"observed score test ({args.rule} rule): {'reject' if decision else 'accept'} H0\n"
    sys.stdout.write(text)
    if args.out_dir is not None:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        suffix = {"text": "txt", "csv": "csv", "json": "json"}[args.format]
        (args.out_dir / f"report.{suffix}").write_text(text, encoding="utf-8")
    return EXIT_OK


def _emit(args, stem: str, table, plot=None) -> None:
    path = write_table(args.out_dir / f"{stem}.{args.format}", *table, fmt=args.format)
    log.info("wrote %s", path)
    if plot is not None and not args.no_plot:
        figure = plot(table, args.out_dir / f"{stem}.svg")
        log.info("wrote %s", figure)


def cmd_sweep(args, config: SweepConfig) -> int:
    from . import plotting, reporting
    from .simulation import (
        agreement_row,
        eigen_point,
        median_point,
        power_point,
        simulate_sweep,
    )
    from .asymptotics import expected_info_eigen_curve

    tables = simulate_sweep(config, args.workers)
    command = args.command
    if command in ("power", "all"):
        points = [power_point(t, config.alpha, args.filter) for t in tables]
        _emit(args, "power", reporting.power_rows(points), plotting.plot_power)
        _emit(args, "failures", reporting.failure_rows(points))
    if command in ("medians", "all"):
        _emit(args, "medians", reporting.median_rows([median_point(t) for t in tables]), plotting.plot_medians)
    if command in ("agreement", "all"):
        variants = {"standard": ("positive",), "modified": ("modified",), None: ("positive", "modified")}[args.rule]
        rows = [agreement_row(t, config.alpha, v) for v in variants for t in tables]
        _emit(args, "agreement", reporting.agreement_rows(rows), plotting.plot_agreement)
    if command in ("eigen", "all"):
        points = [eigen_point(t) for t in tables]
        for p, rep in zip(points, expected_info_eigen_curve(config, [p.R for p in points])):
            p.expected = rep.eigenvalues
        _emit(args, "eigen", reporting.eigen_rows(points), plotting.plot_eigen)
    if command in ("scatter", "all"):
        _emit(args, "scatter", reporting.scatter_rows(tables), plotting.plot_scatter)
    return EXIT_OK


def cmd_asymptotics(args, config: SweepConfig) -> int:
    from . import plotting, reporting

    points = asymptotic_curve(config)
    rows = reporting.asymptotic_rows([(p, config.truth(p.R).psi2) for p in points])
    _emit(args, "asymptotics", rows, plotting.plot_asymptotics)
    return EXIT_OK


def cmd_fig6(args, config: SweepConfig) -> int:
    from . import plotting, reporting
    from .simulation import run_fig6_experiment

    result = run_fig6_experiment(config, args.R)
    _emit(args, "fig6", reporting.fig6_rows(result), plotting.plot_fig6)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "test":
            return cmd_test(args)
        config = resolve_config(args)
        if args.command == "fig6":
            if args.R is None:
                args.R = config.R_grid[0] if args.config is not None and len(config.R_grid) == 1 else 0.6
            config = config.with_(R_grid=(args.R,))
        args.out_dir.mkdir(parents=True, exist_ok=True)
        _record_config(args, config)
        if args.command == "asymptotics":
            return cmd_asymptotics(args, config)
        if args.command == "fig6":
            return cmd_fig6(args, config)
        return cmd_sweep(args, config)
    except UsageError as exc:
        parser.error(str(exc))
    except DatasetError as exc:
        print(f"occutest: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"occutest: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
