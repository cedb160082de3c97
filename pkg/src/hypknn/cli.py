"""Command-line experiment runner.

Subcommands: geometry-check, simulate, compare, rates, sweep.
Exit codes: 0 success, 1 check/acceptance failure, 2 usage error, 3 IO
error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import geometry, limitlaw
from .pipeline import (
    ExperimentConfig,
    SimOptions,
    compare_run,
    load_run,
    run_experiment,
)
from .rng import RngStream
from .stats import empirical_law_tv
from .stats import BinnedLaw

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _geometry_checks(perturb: float = 0.0, n: int = 20000, seed: int = 0):
    """Deterministic identity suite for the half-space geometry.

    perturb injects an error of the given size into the distance used in
    the cross-check, for validating the suite's sensitivity.
    """
    gen = RngStream(seed, ("geometry-check",)).generator()
    failures = []
    # distance vs the horizontal-offset/height-ratio formula
    x1 = gen.uniform(-5, 5, size=n)
    y1 = np.exp(gen.uniform(-3, 3, size=n))
    x2 = gen.uniform(-5, 5, size=n)
    y2 = np.exp(gen.uniform(-3, 3, size=n))
    dev = 0.0
    for i in range(n):
        d1 = geometry.dist_hyp(geometry.HPoint(x=[x1[i]], y=y1[i]),
                               geometry.HPoint(x=[x2[i]], y=y2[i])) + perturb
        d2 = geometry.phi_dist(abs(x2[i] - x1[i]) / y1[i], y2[i] / y1[i])
        dev = max(dev, abs(d1 - d2))
    if dev > 1e-10:
        failures.append(f"dist_hyp vs phi_dist deviation {dev:.3e}")
    # quadrature vs closed forms and inverse round trip
    for d in (2, 3, 4, 5):
        for r in (0.1, 1.0, 5.0):
            v = geometry.ball_volume(r, d)
            if d == 2:
                ref = 2 * math.pi * (math.cosh(r) - 1)
            elif d == 3:
                ref = math.pi * math.sinh(2 * r) - 2 * math.pi * r
            else:
                ref = None
            if ref is not None and abs(v - ref) > 1e-10 * ref:
                failures.append(f"ball_volume closed-form mismatch d={d} r={r}")
            rr = geometry.inverse_ball_volume(v, d)
            if abs(rr - r) > 1e-10:
                failures.append(f"inverse round trip off by {abs(rr - r):.3e} d={d} r={r}")
    report = {"max_phi_deviation": dev, "failures": failures}
    return report


def cmd_geometry_check(args) -> int:
    report = _geometry_checks(perturb=args.perturb)
    print(json.dumps(report, indent=2))
    return EXIT_OK if not report["failures"] else EXIT_FAIL


def _config_from_args(args) -> ExperimentConfig:
    base = {}
    if args.config:
        with open(args.config) as fh:
            base = json.load(fh)
    opts = base.pop("options", {})
    if "mecke_u" in opts:
        opts["mecke_u"] = tuple(opts["mecke_u"])
    base["options"] = SimOptions(**opts)
    for name, val in (
        ("master_seed", args.seed),
        ("replicates", args.replicates),
        ("parallel", args.parallel),
    ):
        if val is not None:
            base[name] = val
    return ExperimentConfig(**base)


def cmd_simulate(args) -> int:
    try:
        config = _config_from_args(args)
    except (TypeError, ValueError, KeyError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        run = run_experiment(config, out_dir=args.out, resume=args.resume, progress=True)
    except OSError as exc:
        print(f"IO error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(json.dumps({"run_dir": args.out, "replicates": len(run.reps)}))
    return EXIT_OK


def cmd_compare(args) -> int:
    try:
        run = load_run(args.run_dir)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot load run: {exc}", file=sys.stderr)
        return EXIT_IO
    report = compare_run(run)
    if run.config.options.eta_scores and run.config.options.zeta:
        edges = np.linspace(run.regime.s0, run.regime.s0 + 20.0, 9)
        eta_law = BinnedLaw.from_atom_measures(run.eta_measures(block=0), edges)
        zeta_law = BinnedLaw.from_atom_measures(run.zeta_measures(block=0), edges)
        tv = empirical_law_tv(eta_law, zeta_law, cap=20)
        report["tv_eta_zeta_block0"] = {
            "estimate": tv.estimate, "ci": [tv.ci_low, tv.ci_high],
            "few_replicates": tv.few_replicates,
        }
    print(json.dumps(report, indent=2))
    if len(run.reps) < 100:
        print("warning: fewer than 100 replicates", file=sys.stderr)
    return EXIT_OK


def cmd_rates(args) -> int:
    ref = limitlaw.RefMeasure(k=args.k, s0=args.s0)
    rows = []
    for a in np.linspace(0.0, 4.0 * ref.total_mass, args.points):
        rows.append({"mass": float(a), "rate": limitlaw.scalar_rate(float(a), ref)})
    print(json.dumps({"k": args.k, "s0": args.s0, "table": rows}, indent=2))
    return EXIT_OK


def cmd_sweep(args) -> int:
    lams = [float(t) for t in args.lams.split(",")]
    reports = []
    for lam in lams:
        config = ExperimentConfig(
            d=args.d, k=args.k, lam=lam, target_u=args.target_u,
            replicates=args.replicates or 100, master_seed=args.seed or 0,
            parallel=args.parallel or 1,
        )
        out = os.path.join(args.out, f"lam{lam:g}") if args.out else None
        run = run_experiment(config, out_dir=out, resume=args.resume)
        reports.append(compare_run(run))
    print(json.dumps({"sweep": reports}, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hypknn")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("geometry-check", help="run the geometry identity suite")
    g.add_argument("--perturb", type=float, default=0.0)
    g.set_defaults(func=cmd_geometry_check)

    s = sub.add_parser("simulate", help="run replicates and write artifacts")
    s.add_argument("--config", help="JSON file of ExperimentConfig fields")
    s.add_argument("--seed", type=int)
    s.add_argument("--replicates", type=int)
    s.add_argument("--parallel", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--resume", action="store_true")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compare", help="analyze a finished run directory")
    c.add_argument("run_dir")
    c.set_defaults(func=cmd_compare)

    r = sub.add_parser("rates", help="tabulate the scalar rate function")
    r.add_argument("--k", type=int, default=1)
    r.add_argument("--s0", type=float, default=0.0)
    r.add_argument("--points", type=int, default=9)
    r.set_defaults(func=cmd_rates)

    w = sub.add_parser("sweep", help="run a grid of window scales")
    w.add_argument("--lams", default="6,8,10,12")
    w.add_argument("--d", type=int, default=2)
    w.add_argument("--k", type=int, default=1)
    w.add_argument("--target-u", dest="target_u", type=float, default=20.0)
    w.add_argument("--replicates", type=int)
    w.add_argument("--seed", type=int)
    w.add_argument("--parallel", type=int)
    w.add_argument("--out")
    w.add_argument("--resume", action="store_true")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
