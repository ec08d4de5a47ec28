"""Experiment orchestration: single runs, constraint sweeps, the
rejection-vs-penalty ablation and operation-distribution statistics."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .engine import SampleCounter, SearchConfig, SearchContext, init_population, run_search
from .errors import HaltingError
from .genotype import Genotype, Operation
from .hwcost import Constraint, CostQuery, rejection_sample_population
from .results import RunResult

log = logging.getLogger(__name__)


def op_distribution(archs) -> dict[str, float]:
    """Mean number of edges per operation over `archs`; the values sum to 6."""
    archs = list(archs)
    if not archs:
        raise ValueError("op_distribution needs at least one architecture")
    counts = np.zeros(len(Operation))
    for g in archs:
        counts += np.bincount(g.genes, minlength=len(Operation))
    return {op.name: float(c / len(archs)) for op, c in zip(Operation, counts)}


def run_single(cfg: SearchConfig, ctx: SearchContext, workers: int | None = None) -> RunResult:
    t0 = time.perf_counter()
    best, history = run_search(cfg, ctx, workers=workers)
    return RunResult(
        config=cfg.to_dict(),
        best_arch=str(best),
        best=history.best,
        history=history,
        duration=time.perf_counter() - t0,
        seed=cfg.seed,
    )


def ranked_feasible(table, query: CostQuery, omega: float, dataset: str = "cifar10") -> list[int]:
    """Row indices of feasible architectures, best accuracy first (ties by arch string)."""
    cost = table.column(query.column)
    acc = table.column(f"{dataset}_test")
    rows = np.flatnonzero(cost <= omega)
    return sorted(rows.tolist(), key=lambda i: (-acc[i], table.arch_strs[i]))


def exhaustive_optimum(table, query: CostQuery, omega: float, dataset: str = "cifar10"):
    """Brute-force best feasible row as (arch, accuracy, cost), or None if nothing fits."""
    ranked = ranked_feasible(table, query, omega, dataset)
    if not ranked:
        return None
    i = ranked[0]
    return table.arch_strs[i], float(table.column(f"{dataset}_test")[i]), float(table.column(query.column)[i])


def feasible_fraction(table, query: CostQuery, omega: float) -> float:
    return float(np.mean(table.column(query.column) <= omega))


def omega_for_fraction(table, query: CostQuery, fraction: float) -> float:
    """Smallest threshold admitting round(fraction * rows) architectures."""
    cost = np.sort(table.column(query.column))
    k = max(1, int(round(fraction * len(cost))))
    return float(cost[min(k, len(cost)) - 1])


@dataclass
class CellSummary:
    metric: str
    device: str | None
    omega: float
    runs: int
    failed: int
    accuracy_mean: float | None = None
    accuracy_std: float | None = None
    cost_mean: float | None = None
    cost_std: float | None = None
    feasible_rate: float | None = None
    discovered_ops: dict | None = None
    oracle_arch: str | None = None
    oracle_accuracy: float | None = None
    oracle_cost: float | None = None
    oracle_top10_ops: dict | None = None
    errors: list[str] = field(default_factory=list)


def _mean_std(xs):
    xs = np.asarray(xs, dtype=float)
    return float(xs.mean()), float(xs.std(ddof=1)) if len(xs) > 1 else 0.0


def run_sweep(
    omegas,
    devices,
    seeds,
    template: SearchConfig,
    table,
    ctx: SearchContext | None = None,
    metric: str = "latency",
):
    """Run every (device, omega, seed) cell; failed runs are logged, not fatal.

    Returns (results in grid order, one CellSummary per (device, omega)).
    """
    ctx = ctx or SearchContext(table=table)
    if ctx.table is None:
        ctx = replace(ctx, table=table)
    if metric == "macs":
        devices = [None]
    results = []
    cells = []
    for device in devices:
        query = CostQuery(metric, device)
        for omega in omegas:
            cell_results = []
            errors = []
            for seed in seeds:
                cfg = replace(template, seed=seed, constraint=Constraint(omega, query))
                try:
                    cell_results.append(run_single(cfg, ctx))
                except Exception as exc:  # noqa: BLE001 - recorded per cell
                    log.warning("cell device=%s omega=%s seed=%s failed: %s", device, omega, seed, exc)
                    errors.append(f"seed {seed}: {type(exc).__name__}: {exc}")
            results.extend(cell_results)
            cells.append(_summarise(cell_results, errors, table, query, omega, template.dataset))
    return results, cells


def _summarise(cell_results, errors, table, query, omega, dataset):
    s = CellSummary(query.metric, query.device, omega, runs=len(cell_results) + len(errors), failed=len(errors), errors=errors)
    if cell_results:
        bests = [r.best.genotype for r in cell_results]
        s.accuracy_mean, s.accuracy_std = _mean_std([table.value(g, f"{dataset}_test") for g in bests])
        s.cost_mean, s.cost_std = _mean_std([r.best.cost for r in cell_results])
        s.feasible_rate = float(np.mean([r.best.feasible for r in cell_results]))
        s.discovered_ops = op_distribution(bests)
    ranked = ranked_feasible(table, query, omega, dataset)
    if ranked:
        opt = exhaustive_optimum(table, query, omega, dataset)
        s.oracle_arch, s.oracle_accuracy, s.oracle_cost = opt
        top = [table.genotypes()[i] for i in ranked[:10]]
        s.oracle_top10_ops = op_distribution(top)
    return s


@dataclass
class AblationRow:
    omega: float
    feasible_fraction: float
    rejection_samples: list[int]
    rejection_mean: float | None
    penalty_samples: list[int]
    penalty_mean: float
    halted: bool = False


def rejection_vs_penalty_experiment(
    constraints,
    table,
    size: int = 50,
    runs: int = 10,
    rng: np.random.Generator | None = None,
    max_attempts: int = 10**6,
) -> list[AblationRow]:
    """Samples needed to build a population of `size` under each constraint.

    Rejection sampling redraws until `size` feasible architectures are kept;
    the penalty approach draws `size` architectures and keeps all of them.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    rows = []
    for c in constraints:
        if not isinstance(c, Constraint):
            c = Constraint(c)

        def cost_fn(g, c=c):
            return c.query.cost(g, table)

        rej = []
        halted = False
        for _ in range(runs):
            try:
                _, drawn = rejection_sample_population(c, cost_fn, size, rng, max_attempts)
            except HaltingError as exc:
                log.warning("rejection sampling halted at omega=%s after %d draws", c.omega, exc.attempts)
                halted = True
                break
            rej.append(drawn)
        pen = []
        for _ in range(runs):
            counter = SampleCounter()
            init_population(SearchConfig(n_pop=size, constraint=c), rng, counter)
            pen.append(counter.total)
        rows.append(
            AblationRow(
                omega=c.omega,
                feasible_fraction=feasible_fraction(table, c.query, c.omega),
                rejection_samples=rej,
                rejection_mean=None if halted else float(np.mean(rej)),
                penalty_samples=pen,
                penalty_mean=float(np.mean(pen)),
                halted=halted,
            )
        )
    return rows


def top_k_archs(table, k: int, dataset: str = "cifar10", constraint: Constraint | None = None) -> list[Genotype]:
    omega = math.inf if constraint is None else constraint.omega
    query = CostQuery() if constraint is None else constraint.query
    ranked = ranked_feasible(table, query, omega, dataset)
    return [table.genotypes()[i] for i in ranked[:k]]
