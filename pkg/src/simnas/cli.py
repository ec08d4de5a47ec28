"""Command-line entry point: ``simnas {search,sweep,ablate-rejection,stats,gen-bench}``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict

import numpy as np

from .bench import generate_synthetic_bench, load_bench, save_bench
from .engine import SearchConfig, SearchContext, make_rmi_context
from .estimator import DATASETS
from .experiments import (
    feasible_fraction,
    omega_for_fraction,
    op_distribution,
    rejection_vs_penalty_experiment,
    run_single,
    run_sweep,
    top_k_archs,
)
from .hwcost import DEVICES, Constraint, CostQuery
from .results import write_results

ESTIMATOR_FLAGS = {"rmi": "rmi_surrogate", "tabular": "tabular_accuracy"}


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _names(text):
    names = [x.strip() for x in text.split(",") if x.strip()]
    bad = [n for n in names if n not in DEVICES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown device(s) {bad}; choose from {list(DEVICES)}")
    return names


def _query(args, device=None):
    if args.metric == "latency":
        return CostQuery("latency", device or args.device)
    return CostQuery("macs")


def _table(args, required):
    if args.bench is None:
        if required:
            raise SystemExit("error: --bench is required for this estimator/metric")
        return None
    return load_bench(args.bench)


def _common_search_flags(p):
    p.add_argument("--bench", help="benchmark CSV (see gen-bench)")
    p.add_argument("--estimator", choices=sorted(ESTIMATOR_FLAGS), default="tabular")
    p.add_argument("--metric", choices=("macs", "latency"), default="latency")
    p.add_argument("--dataset", choices=DATASETS, default="cifar10")
    p.add_argument("--gens", type=int, default=100)
    p.add_argument("--pop", type=int, default=20)
    p.add_argument("--epochs", type=int, default=100, help="surrogate training epochs per candidate")
    p.add_argument("--beta", type=float, default=0.8)
    p.add_argument("--out", help="write results as JSON lines")


def _template(args, seed=0, constraint=None):
    return SearchConfig(
        n_gen=args.gens,
        n_pop=args.pop,
        n_train=args.epochs,
        beta=args.beta,
        estimator=ESTIMATOR_FLAGS[args.estimator],
        dataset=args.dataset,
        seed=seed,
        constraint=constraint or Constraint(math.inf),
    )


def _context(args, table):
    if args.estimator == "rmi":
        return make_rmi_context(seed=0, table=table)
    return SearchContext(table=table)


def cmd_search(args):
    needs_table = args.estimator == "tabular" or args.metric == "latency"
    table = _table(args, needs_table)
    cfg = _template(args, args.seed, Constraint(args.omega, _query(args)))
    result = run_single(cfg, _context(args, table))
    b = result.best
    print(f"best {b.arch} fitness={b.fitness:.6g} score={b.phi:.6g} cost={b.cost:.6g}{b.unit} feasible={b.feasible}")
    if table is not None:
        print(f"{args.dataset} test accuracy: {table.value(b.arch, f'{args.dataset}_test'):.2f}%")
    if args.out:
        write_results([result], args.out)


def cmd_sweep(args):
    table = _table(args, True)
    devices = args.devices or ([args.device] if args.device else list(DEVICES))
    results, cells = run_sweep(
        args.omegas, devices, range(args.seeds), _template(args), table, _context(args, table), metric=args.metric
    )
    for c in cells:
        print(json.dumps(asdict(c)))
    if args.out:
        write_results(results, args.out)
    return 1 if any(c.failed for c in cells) else 0


def cmd_ablate(args):
    table = _table(args, True)
    query = _query(args)
    if args.fractions:
        omegas = [omega_for_fraction(table, query, p) for p in args.fractions]
    else:
        omegas = args.omegas
    rows = rejection_vs_penalty_experiment(
        [Constraint(w, query) for w in omegas],
        table,
        size=args.size,
        runs=args.runs,
        rng=np.random.default_rng(args.seed),
        max_attempts=args.max_attempts,
    )
    for r in rows:
        print(json.dumps(asdict(r)))


def cmd_stats(args):
    table = _table(args, True)
    constraint = Constraint(args.omega, _query(args))
    archs = top_k_archs(table, args.top_k, args.dataset, constraint)
    if not archs:
        raise ValueError(f"no architecture satisfies {constraint.query.column} <= {args.omega}")
    print(
        json.dumps(
            {
                "top_k": len(archs),
                "omega": args.omega if math.isfinite(args.omega) else "inf",
                "feasible_fraction": feasible_fraction(table, constraint.query, args.omega),
                "ops": op_distribution(archs),
            }
        )
    )


def cmd_gen_bench(args):
    table = generate_synthetic_bench(args.seed)
    save_bench(table, args.out)
    print(f"wrote {len(table)} rows to {args.out}")


def build_parser():
    parser = argparse.ArgumentParser(prog="simnas", description="Hardware-constrained evolutionary architecture search.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run one search")
    _common_search_flags(p)
    p.add_argument("--device", choices=DEVICES, default="edgegpu")
    p.add_argument("--omega", type=float, default=math.inf, help="cost threshold (ms or millions of MACs)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("sweep", help="constraints x devices x seeds")
    _common_search_flags(p)
    p.add_argument("--device", choices=DEVICES)
    p.add_argument("--omegas", type=_floats, required=True)
    p.add_argument("--devices", type=_names)
    p.add_argument("--seeds", type=int, default=10)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate-rejection", help="samples needed: rejection sampling vs penalty")
    p.add_argument("--bench", required=True)
    p.add_argument("--metric", choices=("macs", "latency"), default="macs")
    p.add_argument("--device", choices=DEVICES, default="edgegpu")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--omegas", type=_floats)
    group.add_argument("--fractions", type=_floats, help="pick thresholds admitting these fractions of the space")
    p.add_argument("--size", type=int, default=50)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-attempts", type=int, default=10**6)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("stats", help="operation distribution of the top-k feasible architectures")
    p.add_argument("--bench", required=True)
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--dataset", choices=DATASETS, default="cifar10")
    p.add_argument("--metric", choices=("macs", "latency"), default="latency")
    p.add_argument("--device", choices=DEVICES, default="edgegpu")
    p.add_argument("--omega", type=float, default=math.inf)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("gen-bench", help="write the synthetic benchmark table")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="bench.csv")
    p.set_defaults(func=cmd_gen_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args) or 0
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return 1
        raise
    except Exception as exc:  # noqa: BLE001 - one-line diagnostic for the CLI
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
