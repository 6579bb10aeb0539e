"""Command line entry point.

    gmmbench bench <config> [--experiment NAME]   run one sweep
    gmmbench all <config>                         run all four sweeps
    gmmbench verify                               quick oracle/gradient self-checks
    gmmbench plot <csv> <out.svg>                 re-plot a results file

Exit codes: 0 success, 2 invalid config, 3 numerical failure,
4 an estimator beat the MMSE bound by more than the audit slack.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .errors import InvalidConfigurationError, NumericalFailure
from .harness.config import EXPERIMENTS, load_config
from .harness.experiments import audit_bound, run_experiment
from .harness.io import emit_config, emit_csv, emit_plot, read_csv
from .metrics import aggregate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_AUDIT = 4

log = logging.getLogger("gmmbench")


def format_table(records, domain: str = "db") -> str:
    """Mean (std) NMSE in dB, one row per estimator, one column per sweep value."""
    stats = aggregate(records, domain)
    values = sorted({s.sweep_value for s in stats})
    names = []
    for r in records:
        if r.estimator not in names:
            names.append(r.estimator)
    cell = {(s.estimator, s.sweep_value): s for s in stats}
    width = max(len(n) for n in names) + 2
    lines = [f"{records[0].sweep_name:<{width}}" + "".join(f"{v:>16g}" for v in values)]
    for n in names:
        row = "".join(
            f"{cell[(n, v)].mean:>9.2f} ({cell[(n, v)].std:4.2f})" if (n, v) in cell else " " * 16
            for v in values
        )
        lines.append(f"{n:<{width}}{row}")
    return "\n".join(lines)


def run_one(cfg, out_dir=None, plot=True) -> int:
    out = Path(out_dir or cfg.out_dir)
    log.info("running %s (%d grid points x %d runs)", cfg.experiment, len(cfg.grid), cfg.mc_runs)
    result = run_experiment(cfg)
    csv_path = emit_csv(result, out / f"{cfg.experiment}.csv")
    emit_config(result, out / f"{cfg.experiment}.config.json")
    if plot:
        emit_plot(result, out / f"{cfg.experiment}.svg", title=cfg.experiment, domain=cfg.averaging)
    print(f"== {cfg.experiment} -> {csv_path}")
    print(format_table(result.records, cfg.averaging))
    violations = audit_bound(result.records, cfg.audit_slack_db)
    if violations:
        print(f"bound audit FAILED ({len(violations)} rows):")
        for v in violations:
            print(f"  {v}")
        return EXIT_AUDIT
    print("bound audit passed")
    return EXIT_OK


def _with_overrides(cfg, args):
    changes = {}
    if args.jobs is not None:
        changes["n_jobs"] = args.jobs
    if args.mc_runs is not None:
        changes["mc_runs"] = args.mc_runs
    if not changes:
        return cfg
    try:
        return replace(cfg, **changes)
    except ValueError as exc:
        raise InvalidConfigurationError(str(exc)) from None


def cmd_bench(args) -> int:
    cfg = _with_overrides(load_config(args.config, args.experiment), args)
    return run_one(cfg, args.out_dir, not args.no_plot)


def cmd_all(args) -> int:
    configs = [_with_overrides(load_config(args.config, e), args) for e in EXPERIMENTS]
    code = EXIT_OK
    for cfg in configs:
        code = max(code, run_one(cfg, args.out_dir, not args.no_plot))
    return code


def cmd_verify(args) -> int:
    from .verify import run_checks

    failed = 0
    for name, ok, detail in run_checks():
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        failed += not ok
    return EXIT_NUMERICAL if failed else EXIT_OK


def cmd_plot(args) -> int:
    records = read_csv(args.csv)
    if not records:
        raise InvalidConfigurationError(f"{args.csv} has no data rows")
    emit_plot(records, args.out, title=args.title or records[0].experiment, domain=args.domain)
    print(args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gmmbench", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def sweep_opts(p):
        p.add_argument("config", help="YAML config file")
        p.add_argument("--out-dir", help="override out_dir from the config")
        p.add_argument("--jobs", type=int, help="worker processes")
        p.add_argument("--mc-runs", type=int, help="override the number of Monte-Carlo runs")
        p.add_argument("--no-plot", action="store_true", help="skip the SVG")

    p = sub.add_parser("bench", help="run one experiment")
    sweep_opts(p)
    p.add_argument("--experiment", choices=EXPERIMENTS, help="override the config's experiment")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("all", help="run all four experiments")
    sweep_opts(p)
    p.set_defaults(func=cmd_all)

    p = sub.add_parser("verify", help="run quick oracle and gradient self-checks")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("plot", help="plot a results CSV")
    p.add_argument("csv")
    p.add_argument("out")
    p.add_argument("--title")
    p.add_argument("--domain", choices=("db", "linear"), default="db")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InvalidConfigurationError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
