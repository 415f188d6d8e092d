"""Command line entry point: ``lifelong-vrp <subcommand>``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .core import optimality_gap, reference_solve
from .metrics import compute_metrics
from .policy import PolicyParams, load_checkpoint
from .training import Strategy, solve_greedy
from .bench.outputs import curves_svg, participation_bands, read_curves, write_atomic
from .bench.runner import RunConfig, run
from .bench.scenario import format_scenario, profile_scenario
from .bench.tsplib import best_known, parse_tsplib


def _gen_scenario(args):
    order = [s.strip() for s in args.order.split(",")] if args.order else None
    text = format_scenario(profile_scenario(args.profile, args.problem, order, args.epochs))
    if args.output:
        write_atomic({Path(args.output).name: text}, Path(args.output).parent or ".")
    else:
        sys.stdout.write(text)


def _run(args):
    config = RunConfig(
        scenario=args.scenario, strategy=args.strategy, seed=args.seed, profile=args.profile,
        alpha=args.alpha, beta=args.beta, buffer_capacity=args.buffer_capacity, LB=args.lb, UB=args.ub,
        batch_size=args.batch_size, batches_per_epoch=args.batches_per_epoch, epochs=args.epochs,
        n_starts=args.n_starts, output_dir=args.out, episode_parity=args.episode_parity,
        test_size=args.test_size, test_seed=args.test_seed, reference_restarts=args.reference_restarts,
    )
    artifacts = run(config)
    print(json.dumps(artifacts.metrics, indent=2, sort_keys=True))


def _eval_lib(args):
    params = load_checkpoint(args.checkpoint) if args.checkpoint else PolicyParams()
    known = best_known()
    rng = np.random.default_rng(args.seed)
    rows = []
    for path in args.files:
        inst = parse_tsplib(path)
        cost = float(solve_greedy(params, [inst], args.n_starts)[0])
        ref = reference_solve(inst, args.restarts, rng)
        row = {"instance": inst.id, "n": inst.n, "policy_cost": cost, "reference_cost": ref}
        bk = known.get(inst.id, {}).get("best_known")
        if bk is not None:
            row.update(best_known=bk, policy_gap=optimality_gap(cost, bk), reference_gap=optimality_gap(ref, bk))
        rows.append(row)
    print(json.dumps(rows, indent=2))


def _metrics(args):
    print(json.dumps(compute_metrics(read_curves(args.curves)), indent=2, sort_keys=True))


def _plot(args):
    ledger = read_curves(args.curves)
    out = Path(args.output) if args.output else Path(args.curves).with_suffix(".svg")
    write_atomic({out.name: curves_svg(ledger, participation_bands(ledger.K, ledger.T))}, out.parent)
    print(out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lifelong-vrp", description="Lifelong learning benchmark for routing policies.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scenario", help="write a scenario file for a built-in profile")
    g.add_argument("--profile", choices=("desk", "full"), default="desk")
    g.add_argument("--problem", choices=("TSP", "CVRP"), default="TSP")
    g.add_argument("--order", help="comma-separated task labels, e.g. U,C,G")
    g.add_argument("--epochs", type=int)
    g.add_argument("-o", "--output")
    g.set_defaults(func=_gen_scenario)

    r = sub.add_parser("run", help="train one strategy and write curves/metrics/plot")
    r.add_argument("--scenario", help="scenario file (default: the profile's built-in scenario)")
    r.add_argument("--strategy", choices=[s.value for s in Strategy], default="DREE")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--profile", choices=("desk", "full"), default="desk")
    r.add_argument("--alpha", type=float, default=100.0)
    r.add_argument("--beta", type=float, default=1.0)
    r.add_argument("--buffer-capacity", type=int)
    r.add_argument("--lb", type=int, default=1)
    r.add_argument("--ub", type=int, default=4)
    r.add_argument("--batch-size", type=int)
    r.add_argument("--batches-per-epoch", type=int)
    r.add_argument("--epochs", type=int)
    r.add_argument("--n-starts", type=int)
    r.add_argument("--test-size", type=int)
    r.add_argument("--test-seed", type=int, default=12345)
    r.add_argument("--reference-restarts", type=int, default=20)
    r.add_argument("--episode-parity", action="store_true")
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(func=_run)

    e = sub.add_parser("eval-lib", help="evaluate a policy on TSPLIB/CVRPLIB files")
    e.add_argument("files", nargs="+")
    e.add_argument("--checkpoint")
    e.add_argument("--restarts", type=int, default=50)
    e.add_argument("--n-starts", type=int)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=_eval_lib)

    m = sub.add_parser("metrics", help="recompute AP/AFB/AMFB/ABPl from curves.csv")
    m.add_argument("curves")
    m.set_defaults(func=_metrics)

    pl = sub.add_parser("plot", help="render curves.csv as SVG")
    pl.add_argument("curves")
    pl.add_argument("-o", "--output")
    pl.set_defaults(func=_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
