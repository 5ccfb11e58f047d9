"""Command-line entry point.

    besframe run CONFIG [--repetitions N] [--iterations N] [--seed S] [--out DIR]
    besframe list-benchmarks
    besframe summarize RESULTS.csv [...] [--figure PNG] [--json PATH]
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import runner
from .bench import list_benchmarks

METRIC_LABELS = {"lse": "log loss", "implicit_lse": "log loss", "bo": "simple regret"}


def _run(args) -> int:
    overrides = {}
    if args.repetitions is not None:
        overrides["repetitions"] = args.repetitions
    if args.iterations is not None:
        overrides["iterations"] = args.iterations
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    try:
        cfg = runner.load_config(args.config, **overrides)
    except (runner.ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else runner.results_dir()
    stem = f"{Path(args.config).stem}-{cfg.criterion.lower()}-{runner.config_hash(cfg)}"
    records = runner.run_experiment(cfg)
    if not records:
        print("error: every repetition failed", file=sys.stderr)
        return 1
    summary = runner.summarize(records)
    csv_path = runner.write_records(records, out / f"{stem}.csv")
    json_path = runner.write_summary(summary, out / f"{stem}.json", cfg)
    from .plotting import plot_summaries
    png_path = plot_summaries({cfg.criterion: summary}, out / f"{stem}.png",
                              ylabel=METRIC_LABELS[cfg.problem])
    print(f"final mean {cfg.problem} metric: {summary['mean'][-1]:.6g} "
          f"(sd {summary['sd'][-1]:.3g}, {summary['n_repetitions'][-1]} repetitions)")
    for p in (csv_path, json_path, png_path):
        print(p)
    return 0


def _list(args) -> int:
    for name in list_benchmarks():
        print(name)
    return 0


def _summarize(args) -> int:
    summaries = {}
    for p in args.results:
        try:
            records = runner.read_records(p)
        except (OSError, KeyError, ValueError) as exc:
            print(f"error: cannot read {p}: {exc}", file=sys.stderr)
            return 2
        summaries[Path(p).stem] = runner.summarize(records)
    for label, s in summaries.items():
        print(f"{label}: final mean {s['mean'][-1]:.6g} sd {s['sd'][-1]:.3g} "
              f"over {s['n_repetitions'][-1]} repetitions")
    if args.json:
        Path(args.json).write_text(json.dumps(summaries, indent=2))
    if args.figure:
        from .plotting import plot_summaries
        plot_summaries(summaries, args.figure)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="besframe", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment from a key = value config file")
    p.add_argument("config")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help=f"output directory (default ${runner.RESULTS_ENV} or ./results)")
    p.set_defaults(func=_run)

    p = sub.add_parser("list-benchmarks", help="print the available benchmark names")
    p.set_defaults(func=_list)

    p = sub.add_parser("summarize", help="summarise result CSVs and optionally plot them")
    p.add_argument("results", nargs="+")
    p.add_argument("--figure")
    p.add_argument("--json")
    p.set_defaults(func=_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
