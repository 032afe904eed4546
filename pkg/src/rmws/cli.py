"""Command-line entry point: ``rmws run|sweep|verify|gen-trace``.

Exit status is 0 on success, 1 when ``--strict`` is set and some row was
infeasible (or a verification probe failed), and 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .estimators import ALGORITHMS
from .exceptions import ConfigError
from .harness import (SWEEPABLE, SweepSpec, emit_report, load_config, run_experiment,
                      run_sweep, write_sweep)
from .instances import table1_config
from .placement import GibbsConfig
from .workload import generate_trace


def _algorithms(text):
    names = tuple(a.strip() for a in text.split(",") if a.strip())
    unknown = [a for a in names if a not in ALGORITHMS]
    if unknown or not names:
        raise argparse.ArgumentTypeError(
            f"unknown algorithm(s) {unknown}; choose from {','.join(ALGORITHMS)}")
    return names


def _numbers(text):
    try:
        return tuple(float(v) if "." in v or "e" in v.lower() else int(v)
                     for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from exc


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="rmws", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, algo=True):
        sp.add_argument("--config", help="JSON system config (full or {\"generate\": {...}})")
        sp.add_argument("--seed", type=_seed, default=0, help="run seed (default 0)")
        sp.add_argument("--out", default=".", help="output directory (default .)")
        sp.add_argument("--frames", type=int, help="override the number of frames")
        if algo:
            sp.add_argument("--algo", type=_algorithms, default=ALGORITHMS,
                            help="comma-separated algorithms (default all)")
            sp.add_argument("--format", choices=("csv", "json"), default="csv")
            sp.add_argument("--strict", action="store_true",
                            help="exit 1 if any row is infeasible")

    common(sub.add_parser("run", help="run one two-timescale experiment"))
    sw = sub.add_parser("sweep", help="sweep one parameter over values and seeds")
    common(sw)
    sw.add_argument("--param", required=True, choices=sorted(SWEEPABLE))
    sw.add_argument("--values", required=True, type=_numbers)
    sw.add_argument("--seeds", type=_numbers, help="replication seeds (default: --seed)")
    vf = sub.add_parser("verify", help="run the verification probe suite")
    vf.add_argument("--seed", type=_seed, default=0)
    vf.add_argument("--out", help="write probes.json here")
    vf.add_argument("--pairs", type=int, default=1000, help="pairs per convexity probe")
    common(sub.add_parser("gen-trace", help="write a workload trace as CSV"), algo=False)
    return p


def _config(args):
    overrides = {"rng_seed": args.seed}
    if args.frames is not None:
        overrides["frames"] = args.frames
    if args.config:
        return load_config(args.config).replace(**overrides)
    return table1_config(args.seed, **overrides)


def _cmd_run(args):
    config = _config(args)
    report = run_experiment(config, args.algo, GibbsConfig(rng_seed=args.seed))
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"report.{args.format}")
    emit_report(report, path, args.format)
    for name, agg in report.aggregates().items():
        print(f"{name:7s} mean {agg['mean']:.6g} s  p95 {agg['p95']:.6g} s"
              f"{'' if agg['feasible'] else '  INFEASIBLE'}")
    print(f"wrote {path}")
    if args.strict and not all(r.feasible for r in report.rows):
        return 1
    return 0


def _cmd_sweep(args):
    if args.config:
        raise ConfigError("sweep draws its systems from the default ranges; --config is not supported")
    base = {} if args.frames is None else {"frames": args.frames}
    spec = SweepSpec(args.param, args.values, base, args.algo, args.seeds or (args.seed,))
    result = run_sweep(spec)
    write_sweep(result, args.out, args.format)
    sys.stdout.write(result.summary_csv())
    if args.strict and not all(r.feasible for rep in result.reports.values() for r in rep.rows):
        return 1
    return 0


def _cmd_verify(args):
    from .verification import run_probe_suite

    reports = run_probe_suite(args.seed, args.pairs)
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.violations} violation(s) in "
              f"{r.samples} sample(s), worst {r.worst_margin:.3g} (tol {r.tolerance:g})")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "probes.json"), "w", encoding="utf-8", newline="\n") as fh:
            json.dump([json.loads(r.to_json()) for r in reports], fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0 if all(r.passed for r in reports) else 1


def _cmd_gen_trace(args):
    config = _config(args)
    trace = generate_trace(config)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "trace.csv")
    trace.to_csv(path)
    print(f"wrote {path}")
    return 0


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "verify": _cmd_verify, "gen-trace": _cmd_gen_trace}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"rmws: config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
