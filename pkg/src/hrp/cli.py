"""Command-line entry point.

Subcommands
-----------
run              one or more seeds at a fixed configuration
sweep            one parameter axis x seeds, with per-point aggregates
validate-config  parse and check a config file, print its canonical form
dump-gp          print a scenario's geometric program and its log-domain form

Exit status is 0 on success, 1 when every allocation result is infeasible,
and 2 on usage or configuration errors.  Set ``HRP_LOG`` (e.g. ``DEBUG``)
for diagnostic logging on stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .allocator import GP_OBJECTIVES, INFEASIBLE, OBJECTIVES, AllocationProblem, build_problem
from .association import associate, rate_matrix
from .channel import build_channels
from .config import ConfigError, NetworkConfig
from .experiments import (
    AXES,
    DEFAULT_AXIS_VALUES,
    SweepSpec,
    aggregate,
    default_seeds,
    run_scenario,
    sweep,
)
from .gp import dump_program
from .report import atomic_write, build_manifest, write_manifest, write_report
from .scenario import build_topology

log = logging.getLogger("hrp")

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_USAGE = 2

OBJECTIVE_CHOICES = ("sum-rate", "max-min", "min-ris", "proportional", "all")


class UsageError(ValueError):
    pass


def parse_objectives(name: str, allowed=OBJECTIVES) -> list:
    if name == "all":
        return list(allowed)
    kind = name.replace("-", "_")
    if kind not in allowed:
        raise UsageError(f"objective {name!r} not available here")
    return [kind]


def parse_seeds(text: str) -> list:
    """``"A..B"`` (inclusive) or a comma-separated list."""
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            lo, hi = int(a), int(b)
            if hi < lo:
                raise UsageError(f"empty seed range {text!r}")
            return list(range(lo, hi + 1))
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"bad seed list {text!r}") from exc


def _number(tok: str):
    tok = tok.strip()
    try:
        return int(tok)
    except ValueError:
        return float(tok)


def parse_values(text: str) -> list:
    """``lo:hi:step`` (inclusive of ``hi`` when it lies on the grid) or ``a,b,c``."""
    try:
        if ":" not in text:
            return [_number(t) for t in text.split(",") if t.strip()]
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"expected lo:hi:step, got {text!r}")
        lo, hi, step = (_number(p) for p in parts)
    except ValueError as exc:
        raise UsageError(f"bad value range {text!r}") from exc
    if step <= 0 or hi < lo:
        raise UsageError(f"bad value range {text!r}")
    if all(isinstance(v, int) for v in (lo, hi, step)):
        return list(range(lo, hi + 1, step))
    count = int((hi - lo) / step + 1e-9) + 1
    return [lo + i * step for i in range(count)]


def _load_config(path) -> NetworkConfig:
    if path is None:
        return NetworkConfig()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return NetworkConfig.load(p)


def _seeds(args, config: NetworkConfig, fallback: list) -> list:
    if args.seeds is not None:
        return parse_seeds(args.seeds)
    if args.seed is not None:
        return [args.seed]
    return fallback


def _exit_status(records) -> int:
    statuses = [r.status for rec in records for r in rec.results]
    if statuses and all(s == INFEASIBLE for s in statuses):
        return EXIT_INFEASIBLE
    return EXIT_OK


def _print_summary(records, out=sys.stdout):
    for rec in records:
        head = f"seed {rec.seed}"
        if rec.axis_value is not None:
            head += f" value {rec.axis_value}"
        print(f"{head}: coverage {rec.coverage_pct:.1f}% |K1|={rec.k1_count} |K2|={rec.k2_count}", file=out)
        for r in rec.results:
            print(f"  {r.objective:<13} {r.status:<10} sum {r.sum_rate_bps / 1e6:10.4f} Mb/s"
                  f"  worst {r.worst_rate_bps / 1e6:8.4f} Mb/s  units {r.total_n_units}", file=out)


def cmd_run(args) -> int:
    config = _load_config(args.config)
    seeds = _seeds(args, config, [config.seed])
    objectives = parse_objectives(args.objective)
    manifest = build_manifest(config, "run", seeds, objectives)
    write_manifest(manifest, args.out)
    records = [run_scenario(config, s, objectives) for s in seeds]
    rows = [row for rec in records for row in rec.rows()]
    write_report(rows, manifest, args.out)
    if not args.quiet:
        _print_summary(records)
    return _exit_status(records)


def cmd_sweep(args) -> int:
    config = _load_config(args.config)
    axis = args.axis.replace("-", "_")
    if axis not in AXES:
        raise UsageError(f"unknown axis {args.axis!r}")
    values = parse_values(args.values) if args.values else DEFAULT_AXIS_VALUES[axis]
    seeds = _seeds(args, config, default_seeds(config.seed))
    objectives = parse_objectives(args.objective)
    spec = SweepSpec(axis, values, seeds, objectives)
    manifest = build_manifest(config, "sweep", spec.seeds, objectives, axis, spec.values)
    write_manifest(manifest, args.out)
    records = sweep(spec, config, jobs=args.jobs)
    rows = [row for rec in records for row in rec.rows()]
    aggregates = aggregate(records)
    write_report(rows, manifest, args.out, aggregates)
    if not args.quiet:
        for agg in aggregates:
            print(f"{axis}={agg['axis_value']} {agg['objective']:<13} ok {agg['n_ok']}/{agg['n_seeds']}"
                  f"  coverage {agg['coverage_pct_mean']:.1f}%"
                  f"  sum {agg['sum_rate_bps_mean'] / 1e6:.4f} Mb/s"
                  f"  worst {agg['worst_rate_bps_mean'] / 1e6:.4f} Mb/s"
                  f"  units {agg['total_n_units_mean']:.0f}")
    return _exit_status(records)


def cmd_validate(args) -> int:
    config = _load_config(args.config)
    sys.stdout.write(config.to_yaml())
    print(f"# ok, config hash {config.config_hash()}", file=sys.stderr)
    return EXIT_OK


def cmd_dump_gp(args) -> int:
    config = _load_config(args.config)
    seed = args.seed if args.seed is not None else config.seed
    objectives = parse_objectives(args.objective, GP_OBJECTIVES)
    topo = build_topology(config, seed)
    channels = build_channels(topo, config, seed)
    if config.num_bs:
        k2 = associate(rate_matrix(channels.gains, config), channels.gains, config).k2
    else:
        k2 = list(range(topo.num_ues))
    ap = AllocationProblem.from_config(channels.beyond_gains[k2], config)
    chunks = []
    for kind in objectives:
        try:
            text = dump_program(build_problem(ap, kind))
        except ValueError as exc:
            print(f"{kind}: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        chunks.append(f"### {kind} (seed {seed}, |K2|={ap.size})\n{text}")
    body = "\n".join(chunks)
    if args.out:
        atomic_write(args.out, body)
    else:
        sys.stdout.write(body)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hrp", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default="hrp-out", seeds=True):
        p.add_argument("--config", metavar="PATH", help="YAML config file (defaults if omitted)")
        p.add_argument("--seed", type=int, help="single seed")
        if seeds:
            p.add_argument("--seeds", metavar="A..B", help="inclusive seed range or comma list")
        p.add_argument("--objective", choices=OBJECTIVE_CHOICES, default="all")
        p.add_argument("--out", metavar="DIR", default=out_default)

    p = sub.add_parser("run", help="run scenarios at a fixed configuration")
    common(p)
    p.add_argument("--jobs", type=int, default=1, help="accepted for symmetry; runs are sequential")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="sweep one parameter axis over seeds")
    common(p)
    p.add_argument("--axis", required=True,
                   choices=sorted(a.replace("_", "-") for a in AXES) + sorted(AXES))
    p.add_argument("--values", metavar="LO:HI:STEP", help="inclusive range or comma list")
    p.add_argument("--jobs", type=int, default=1, help="parallel sweep cells")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate-config", help="check a config and print its canonical form")
    p.add_argument("--config", metavar="PATH")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("dump-gp", help="print the GP of one scenario")
    common(p, out_default=None, seeds=False)
    p.set_defaults(func=cmd_dump_gp)
    return parser


def _setup_logging():
    level = os.environ.get("HRP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "jobs", 1) < 1:
        print("hrp: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"hrp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        # invalid sweep points or objectives surface as ValueError
        print(f"hrp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
