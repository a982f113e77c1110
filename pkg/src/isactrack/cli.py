"""Command line entry point: ``isactrack run | compare | scenario gen``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from ._validation import ContractError
from .evaluation import MetricsReport
from .pipeline import ConfigError, default_parallelism, load_config, run_to_directory
from .scenario import scenario_preset

EXIT_CONFIG = 2
EXIT_RUNTIME = 1


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _nonnegative_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="isactrack", description="ISAC multi-object tracking workbench")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment from a TOML config")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--seed", type=_nonnegative_int, help="override the config seed")
    run.add_argument("--out", type=Path, help="output directory (default: config output.dir or ./out)")
    run.add_argument("--dump-csi", action="store_true", help="write binary CSI dumps (ofdm mode)")
    run.add_argument("--dump-periodogram", action="store_true", help="write binary periodogram dumps (ofdm mode)")
    run.add_argument("--parallel", type=_positive_int, default=None,
                     help="worker processes for the sensing stage (default: all cores)")

    cmp_ = sub.add_parser("compare", help="side-by-side table of two metrics JSON files")
    cmp_.add_argument("a", type=Path)
    cmp_.add_argument("b", type=Path)
    cmp_.add_argument("--format", choices=("markdown", "csv"), default="markdown")

    scen = sub.add_parser("scenario", help="scenario utilities")
    scen_sub = scen.add_subparsers(dest="scenario_command", required=True)
    gen = scen_sub.add_parser("gen", help="write a preset scenario as JSON")
    gen.add_argument("--preset", required=True, type=int, choices=(1, 2, 3, 4))
    gen.add_argument("--seed", required=True, type=_nonnegative_int)
    gen.add_argument("--out", required=True, type=Path)
    return parser


def _cmd_run(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    out = args.out or Path(cfg.output.get("dir", "out"))
    parallel = args.parallel or default_parallelism()
    res = run_to_directory(cfg, out, parallel, args.dump_csi, args.dump_periodogram)
    print(res.report.to_csv(), end="")
    print(f"artifacts written to {out}", file=sys.stderr)
    return 0


def _fmt(x):
    if x is None:
        return "nan"
    if isinstance(x, float):
        return f"{x:.4f}"
    return str(x)


def compare_table(report_a, report_b, fmt="markdown", labels=("A", "B")):
    """Render two :class:`MetricsReport` objects side by side."""
    rows = [
        ("scenario", report_a.scenario, report_b.scenario),
        ("mode", report_a.mode, report_b.mode),
        ("mae_range_m", report_a.mae_range, report_b.mae_range),
        ("mae_speed_mps", report_a.mae_speed, report_b.mae_speed),
        ("pd", report_a.prob_detection, report_b.prob_detection),
        ("fa_per_scan", report_a.false_alarms_per_scan, report_b.false_alarms_per_scan),
    ]
    header = ("metric",) + tuple(labels)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for name, a, b in rows:
            w.writerow((name, _fmt(a), _fmt(b)))
        return buf.getvalue()
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += [f"| {name} | {_fmt(a)} | {_fmt(b)} |" for name, a, b in rows]
    return "\n".join(lines) + "\n"


def _load_report(path):
    if not path.is_file():
        raise ConfigError(f"metrics file {str(path)!r} does not exist")
    try:
        return MetricsReport.from_dict(json.loads(path.read_text()))
    except (json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"{str(path)!r} is not a metrics JSON file: {exc}") from None


def _cmd_compare(args):
    a, b = _load_report(args.a), _load_report(args.b)
    print(compare_table(a, b, args.format, (args.a.stem if args.a.stem != "metrics" else str(args.a.parent),
                                            args.b.stem if args.b.stem != "metrics" else str(args.b.parent))),
          end="")
    return 0


def _cmd_scenario_gen(args):
    sc = scenario_preset(args.preset, seed=args.seed)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    sc.save_json(args.out)
    print(f"wrote {sc.label} ({len(sc.trajectories)} objects, {sc.n_frames} frames) to {args.out}", file=sys.stderr)
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _cmd_run, "compare": _cmd_compare}
    try:
        if args.command == "scenario":
            return _cmd_scenario_gen(args)
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ArithmeticError, FloatingPointError, RuntimeError, ValueError, OSError) as exc:
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
