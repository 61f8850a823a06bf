"""Command line entry points.

Subcommands: simulate-particles, simulate-spde, simulate-baseline, verify,
compare. Simulation writes per-replica NDJSON plus a summary CSV; verify and
compare write a report CSV and exit nonzero unless every test passes.
"""

from __future__ import annotations

import argparse
import sys

from .config import ParseError, parse_config
from .diagnostics import (
    convergence_test,
    moment_bound_test,
    run_suite,
    write_report_csv,
)
from .params import ValidationError
from .runner import load_records, run_replicas, write_outputs

SUITES = ("drift", "qv-limit", "qv-finite", "covariation", "covariation-limit",
          "covariation-finite", "moments", "all")


def _add_sim(sub, name, mode, help_text):
    p = sub.add_parser(name, help=help_text)
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--replicas", type=int, default=None, help="override config replicas")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: COLONYSIM_WORKERS or all cores)")
    p.set_defaults(mode=mode)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="colonysim")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_sim(sub, "simulate-particles", "particles", "run the branching particle system")
    _add_sim(sub, "simulate-spde", "spde", "run the distribution-function SPDE scheme")
    _add_sim(sub, "simulate-baseline", "baseline", "run the single-colony baseline")

    v = sub.add_parser("verify", help="statistical test suites over saved records")
    v.add_argument("--records", nargs="+", required=True,
                   help="one or more record directories (several for 'moments')")
    v.add_argument("--suite", required=True, choices=SUITES)
    v.add_argument("--out", required=True, help="report CSV path")
    v.add_argument("--threshold", type=float, default=4.0)
    v.add_argument("--checkpoints", type=float, nargs="*", default=None)

    c = sub.add_parser("compare", help="particle-to-SPDE convergence in rho")
    c.add_argument("--particle-records", nargs="+", required=True,
                   help="record directories at increasing n")
    c.add_argument("--spde-records", required=True)
    c.add_argument("--t", type=float, required=True, help="checkpoint time")
    c.add_argument("--out", required=True)
    c.add_argument("--threshold", type=float, default=2.0)
    return parser


def _cmd_simulate(args) -> int:
    try:
        config = parse_config(args.config)
    except (ParseError, ValidationError) as exc:
        if isinstance(exc, ValidationError):
            print("config is invalid:", file=sys.stderr)
            for v in exc.violations:
                print(f"  - {v}", file=sys.stderr)
        else:
            print(exc, file=sys.stderr)
        return 2
    from dataclasses import replace

    overrides = {"mode": args.mode}
    if args.replicas is not None:
        overrides["replicas"] = args.replicas
    if args.seed is not None:
        overrides["seed"] = args.seed
    config = replace(config, **overrides)
    records = run_replicas(config, args.workers)
    write_outputs(config, records, args.out)
    print(f"wrote {len(records)} replicas to {args.out} "
          f"(config {config.config_hash}, seed {config.seed})")
    return 0


def _cmd_verify(args) -> int:
    reports = []
    if args.suite == "moments":
        by_n = {}
        hashes = []
        for d in args.records:
            records = load_records(d)
            by_n[records[0].model_info["n"]] = records
            hashes.append(records[0].config_hash)
        reports.append(moment_bound_test(by_n))
        header = (f"suite=moments config_hashes={hashes} "
                  f"seed={next(iter(by_n.values()))[0].seed}")
    else:
        if len(args.records) != 1:
            print("this suite takes exactly one records directory", file=sys.stderr)
            return 2
        records = load_records(args.records[0])
        reports = run_suite(args.suite, records, threshold=args.threshold,
                            checkpoints=args.checkpoints)
        header = (f"suite={args.suite} records={args.records[0]} "
                  f"config_hash={records[0].config_hash} seed={records[0].seed}")
    write_report_csv(reports, args.out, header_comment=header)
    for rep in reports:
        flag = "PASS" if rep.passed else "FAIL"
        print(f"[{flag}] {rep.test}: estimate={rep.estimate:.6g} "
              f"target={rep.target:.6g} z={rep.z:.3g}")
    return 0 if all(r.passed for r in reports) else 1


def _cmd_compare(args) -> int:
    by_n = {}
    hashes = []
    for d in args.particle_records:
        records = load_records(d)
        by_n[records[0].model_info["n"]] = records
        hashes.append(records[0].config_hash)
    spde_records = load_records(args.spde_records)
    hashes.append(spde_records[0].config_hash)
    reports = [
        convergence_test(by_n, spde_records, args.t, colony, threshold=args.threshold)
        for colony in (1, 2)
    ]
    write_report_csv(reports, args.out,
                     header_comment=f"compare t={args.t} config_hashes={hashes} "
                                    f"seed={spde_records[0].seed}")
    for rep in reports:
        flag = "PASS" if rep.passed else "FAIL"
        rhos = [d for d in rep.details if "rho" in d]
        trail = " -> ".join(f"{d['rho']:.4g}" for d in rhos)
        print(f"[{flag}] {rep.test}: {trail}")
    return 0 if all(r.passed for r in reports) else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in ("simulate-particles", "simulate-spde", "simulate-baseline"):
        return _cmd_simulate(args)
    if args.command == "verify":
        return _cmd_verify(args)
    if args.command == "compare":
        return _cmd_compare(args)
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
