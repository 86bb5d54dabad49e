"""
The ``slsq`` command line.

Subcommands::

    slsq design   --config configs/sectionV_system.json --tau-a 1.0
                  [--tau-s .. --n .. --alpha ..] [--sweep ..] [--check]
    slsq simulate --config configs/sectionV_case1.json [--seed 7] [--runs 1] [--out out/case1]
    slsq prop1    [--config configs/example1.json] [--n 1,10,100,1000]
    slsq verify   --config configs/sectionV_case1.json --config configs/sectionV_case2.json [--runs 10000]
    slsq replay   --config out/case1/config.json --log out/case1/symbols.bin
                  [--segments out/case1/segments.jsonl]

Exit codes: 0 when every requested check passes, 1 when a check fails,
2 on malformed input.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from typing import Iterable, Optional

import numpy as np

from . import design, experiments, plot, symbols
from .simulate import read_segments_jsonl, replay_controller, write_segments_jsonl
from .switching import AdtBudget, signal_to_csv, signal_to_document
from .system import system_constants, system_from_document
from .util import ConfigError, dump_document, load_document, parse_float_list, parse_int_list, struct_to_csv

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2

SUITES = ("certificate", "quantizer", "adt", "closed_loop", "replica", "gronwall", "prop1")


def _build_argument_parser() -> argparse.ArgumentParser:
    """Build and return the CLI argument parser."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Random seed (overrides the config)")
    common.add_argument("--out", default=None, help="Output directory")
    common.add_argument("--silent", action="store_true", help="Disable progress bars")
    common.add_argument("--reraise", action="store_true",
                        help="Re-raise exceptions instead of exiting gracefully (for debugging)")
    common.add_argument("-v", "--verbose", action="count", default=0, help="More logging (-vv for debug)")

    parser = argparse.ArgumentParser(
        prog="slsq",
        description="Finite-data-rate stabilization of switched linear systems",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__.split("\n\n", 1)[1],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", parents=[common], help="Choose (tau_s, n, alpha) and compute the data rate")
    p.add_argument("--config", required=True,
                   help="System document (or, with --check, a coder-controller config)")
    p.add_argument("--tau-a", dest="tau_a", type=float, default=1.0, help="Average dwell time (default: 1.0)")
    p.add_argument("--r0", type=float, default=1.0, help="Initial radius (default: 1.0)")
    p.add_argument("--tau-s", dest="tau_s", type=float, help="Use this sampling period instead of searching")
    p.add_argument("--n", type=int, help="Use this block length instead of searching")
    p.add_argument("--alpha", type=float, help="Use this quantizer accuracy instead of searching")
    p.add_argument("--base-tick", dest="base_tick", type=float, default=design.DEFAULT_BASE_TICK,
                   help=f"Time quantum (default: {design.DEFAULT_BASE_TICK})")
    p.add_argument("--margin", type=float, default=design.DEFAULT_MARGIN,
                   help=f"Search margin on the overshoot term (default: {design.DEFAULT_MARGIN})")
    p.add_argument("--sweep", help="Comma-separated tau_a values: tabulate the searched rate for each")
    p.add_argument("--check", action="store_true", help="Validate an existing coder-controller config")

    p = sub.add_parser("simulate", parents=[common], help="Run the closed loop and verify the trace")
    p.add_argument("--config", required=True, help="Experiment document")
    p.add_argument("--runs", type=int, default=None, help="Number of runs (overrides the config)")
    p.add_argument("--parquet", action="store_true", help="Also write Parquet copies of the tables")
    p.add_argument("--no-svg", dest="svg", action="store_false", help="Skip the SVG plot")

    p = sub.add_parser("prop1", parents=[common], help="Fast-switching input experiment")
    p.add_argument("--config", help="Scalar two-mode system document (default: B = -1, +1)")
    p.add_argument("--n", default=",".join(map(str, experiments.DEFAULT_PROP1_N)),
                   help="Comma-separated n values (default: 1,10,100,1000)")
    p.add_argument("--T", type=float, default=experiments.DEFAULT_PROP1_T, help="Horizon (default: 2)")
    p.add_argument("--tol", type=float, default=None,
                   help="Also require the sup at the largest n to be below this value")

    p = sub.add_parser("verify", parents=[common], help="Randomized property suites")
    p.add_argument("--config", action="append", default=[], help="Experiment document (repeatable)")
    p.add_argument("--runs", type=int, default=100,
                   help="Closed-loop runs in total, split over configs and N0 values (default: 100)")
    p.add_argument("--n0", default="0,2,5", help="Comma-separated N0 values (default: 0,2,5)")
    p.add_argument("--suites", default=",".join(SUITES), help=f"Comma-separated subset of {','.join(SUITES)}")
    p.add_argument("--samples", type=int, default=10_000, help="Quantizer samples per configuration")

    p = sub.add_parser("replay", parents=[common], help="Re-run the controller from a symbol log")
    p.add_argument("--config", required=True, help="Coder-controller config with embedded system")
    p.add_argument("--log", required=True, help="Symbol log (.bin or .jsonl)")
    p.add_argument("--segments", help="Recorded segments.jsonl to compare against")
    return parser


###
### design
###

def _cmd_design(args) -> int:
    if args.check:
        doc = load_document(args.config)
        cfg = design.config_from_document(doc)
        chk = design.check_condition(cfg)
        print(f"lhs = {chk.lhs:.9g}")
        print(f"rhs = {chk.rhs:.9g}")
        print(f"rate = {design.data_rate(cfg):.6g} bits/time")
        if chk.satisfied:
            print("✓ condition satisfied")
            return EXIT_OK
        print("✗ condition NOT satisfied")
        return EXIT_FAILED

    system_doc = load_document(args.config)
    sys_, fb, cert = system_from_document(system_doc)
    if cert is None:
        raise ConfigError(f"{args.config}: a certificate is needed for design")
    consts = system_constants(sys_, fb)
    targets = design.SearchTargets(d=sys_.d, mode_count=sys_.N, r0=args.r0, base_tick=args.base_tick,
                                   margin=args.margin)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)

    if args.sweep:
        table = design.rate_sweep(consts, cert, parse_float_list(args.sweep), targets)
        path = os.path.join(out, "sweep.csv")
        struct_to_csv(table, path)
        for row in table:
            if row["feasible"]:
                print(f"tau_a={row['tau_a']:<8g} tau_s={row['tau_s']:<8g} n={row['n']:<6d} "
                      f"alpha={row['alpha']:<10g} R={row['rate']:.2f}")
            else:
                print(f"tau_a={row['tau_a']:<8g} infeasible")
        print(f"✓ Exported sweep to {path}")
        return EXIT_OK

    given = [v is not None for v in (args.tau_s, args.n, args.alpha)]
    if any(given) and not all(given):
        raise ConfigError("--tau-s, --n and --alpha must be given together")
    if all(given):
        cfg = design.CoderControllerConfig(
            tau_s=args.tau_s, n=args.n, alpha=args.alpha, r0=args.r0, tau_a=args.tau_a, cert=cert,
            consts=consts, d=sys_.d, mode_count=sys_.N, base_tick=args.base_tick,
        )
    else:
        try:
            cfg = design.search_parameters(consts, cert, args.tau_a, targets)
        except (design.InfeasibleDesign, design.SearchExhausted) as e:
            print(f"✗ {e}")
            return EXIT_FAILED

    chk = design.check_condition(cfg)
    dc = design.derived_constants(cfg)
    path = os.path.join(out, "config.json")
    dump_document(design.config_to_document(cfg, system_doc), path)
    print(f"nu={consts.nu:.6g} Delta1={consts.delta1:.6g} Delta2={consts.delta2:.6g} L={consts.L:.6g}")
    print(f"tau_s={cfg.tau_s:g} n={cfg.n} alpha={cfg.alpha:g} tau_a={cfg.tau_a:g}")
    print(f"lhs={chk.lhs:.6g} rhs={chk.rhs:.6g} m_hat={dc.m_hat}")
    print(f"rate = {dc.rate:.2f} bits/time (~{round(dc.rate)})")
    if dc.mu is not None:
        print(f"mu = {dc.mu:.6g}, lambda = {dc.lam:.6g}")
    print(f"✓ Exported config to {path}")
    return EXIT_OK if chk.satisfied else EXIT_FAILED


###
### simulate
###

def _cmd_simulate(args) -> int:
    exp = experiments.load_experiment(args.config)
    seed = exp.seed if args.seed is None else args.seed
    runs = exp.runs if args.runs is None else args.runs
    out = args.out or exp.out
    os.makedirs(out, exist_ok=True)
    dump_document(design.config_to_document(exp.cfg, exp.system_doc), os.path.join(out, "config.json"))

    failed = 0
    for r in range(runs):
        run_seed = seed + r
        sig, trace, rep = experiments.run_experiment(exp, run_seed)
        run_dir = out if runs == 1 else os.path.join(out, f"run_{run_seed}")
        trace.write(run_dir, parquet=args.parquet)
        signal_to_csv(sig, os.path.join(run_dir, "signal.csv"))
        dump_document(signal_to_document(sig), os.path.join(run_dir, "signal.json"))
        if args.svg:
            plot.plot_trace(trace, os.path.join(run_dir, "trace.svg"), title=f"seed {run_seed}")
        if not args.silent:
            print(f"--- seed {run_seed} ---")
            print(rep.summary())
            print(f"bits: {trace.total_bits():.1f} (wire {trace.total_wire_bits()}), "
                  f"rate {trace.empirical_rate():.2f} bits/time")
        failed += not rep.ok
        print(f"✓ Exported trace to {run_dir}")
    return EXIT_FAILED if failed else EXIT_OK


###
### prop1
###

def _cmd_prop1(args) -> int:
    B = (-1.0, 1.0)
    if args.config:
        sys_, _, _ = system_from_document(load_document(args.config))
        B = experiments.scalar_input_gains(sys_)
    n_values = parse_int_list(args.n)
    if not n_values:
        raise ConfigError("--n needs at least one value")
    seed = 0 if args.seed is None else args.seed
    table = experiments.prop1_experiment(n_values, experiments.default_prop1_inputs(args.T, seed=seed),
                                         args.T, B)
    print(f"{'n':>8} {'sup|int|':>12} {'min|x(T)|':>12} {'T/(2n)':>12}")
    for row in table:
        print(f"{row['n']:>8d} {row['sup_integral']:>12.6g} {row['min_abs_x']:>12.6g} "
              f"{row['linear_reference']:>12.6g}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        struct_to_csv(table, os.path.join(args.out, "prop1.csv"))
        plot.plot_prop1(table, os.path.join(args.out, "prop1.svg"))
        print(f"✓ Exported table to {args.out}")

    sup = table["sup_integral"]
    ok = bool(np.all(np.diff(sup) <= 0))
    if args.tol is not None:
        ok &= bool(sup[-1] < args.tol)
    print("✓ sup is non-increasing in n" if ok else "✗ check failed")
    return EXIT_OK if ok else EXIT_FAILED


###
### verify
###

def _cmd_verify(args) -> int:
    wanted = [s.strip() for s in args.suites.split(",") if s.strip()]
    unknown = set(wanted) - set(SUITES)
    if unknown:
        raise ConfigError(f"unknown suites: {', '.join(sorted(unknown))}")
    exps = [experiments.load_experiment(p) for p in args.config]
    needs_exp = {"certificate", "closed_loop", "replica"} & set(wanted)
    if needs_exp and not exps:
        raise ConfigError(f"suites {', '.join(sorted(needs_exp))} need at least one --config")
    seed = 0 if args.seed is None else args.seed
    n0s = parse_float_list(args.n0)
    rows = []

    if "certificate" in wanted:
        for e in exps:
            rows.append(experiments.certificate_suite(e.sys, e.fb, e.cert, e.budget, seed=seed,
                                                      silent=args.silent))
    if "quantizer" in wanted:
        rows.append(experiments.quantizer_suite(samples=args.samples, seed=seed, silent=args.silent))
    if "adt" in wanted:
        budgets = [AdtBudget(tau_a, N0) for tau_a in (0.25, 1.0) for N0 in n0s]
        rows.append(experiments.adt_suite(budgets, seed=seed, silent=args.silent))
    if "closed_loop" in wanted:
        variants = [dataclasses.replace(e, budget=AdtBudget(e.budget.tau_a, N0)) for e in exps for N0 in n0s]
        per = max(1, args.runs // len(variants))
        rows.extend(experiments.closed_loop_suite(variants, runs=per, seed=seed, silent=args.silent))
    if "replica" in wanted:
        rows.append(experiments.replica_suite(exps[0], runs=min(100, args.runs), seed=seed,
                                              silent=args.silent))
    if "gronwall" in wanted:
        rows.append(experiments.gronwall_suite(seed=seed, silent=args.silent))
    if "prop1" in wanted:
        rows.append(experiments.prop1_suite(seed=seed))

    table = np.concatenate(rows)
    for row in table:
        mark = "✓" if row["passed"] else "✗"
        print(f"{mark} {row['suite']:<12} runs={row['runs']:<8d} violations={row['violations']}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "suites.csv")
        struct_to_csv(table, path)
        print(f"✓ Exported results to {path}")
    return EXIT_OK if np.all(table["passed"]) else EXIT_FAILED


###
### replay
###

def _cmd_replay(args) -> int:
    doc = load_document(args.config)
    if "system" not in doc:
        raise ConfigError(f"{args.config}: replay needs a config with an embedded 'system'")
    cfg = design.config_from_document(doc)
    sys_, fb, _ = system_from_document(doc["system"])
    log = symbols.read_log(args.log)
    radii, _, segs = replay_controller(cfg, sys_, fb, log)
    print(f"replayed {len(log)} symbols, {len(radii)} blocks")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_segments_jsonl(segs, os.path.join(args.out, "replay_segments.jsonl"))
    if args.segments:
        ref = read_segments_jsonl(args.segments, sys_.d)
        same = len(ref) == len(segs) and all(np.array_equal(ref[f], segs[f]) for f in segs.dtype.names)
        print("✓ segments identical" if same else "✗ segments differ")
        return EXIT_OK if same else EXIT_FAILED
    return EXIT_OK


COMMANDS = {
    "design": _cmd_design,
    "simulate": _cmd_simulate,
    "prop1": _cmd_prop1,
    "verify": _cmd_verify,
    "replay": _cmd_replay,
}


def main(argv: Optional[Iterable[str]] = None) -> int:
    """CLI entry point; returns the exit code."""
    args = _build_argument_parser().parse_args(list(argv) if argv is not None else None)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        if args.reraise:
            raise
        return EXIT_USAGE
    except Exception as e:
        print(f"Error: {e}", file=sys.stderr)
        if args.reraise:
            raise
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
