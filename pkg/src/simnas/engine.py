"""Generational genetic search under a hardware-cost constraint.

Every individual gets fitness = score + penalty, where the score is either
the trained surrogate's similarity to the reference or the tabular accuracy
rescaled to [0, 1], and the penalty is zero inside the constraint and
(omega - cost) outside it. Infeasible individuals are never rejected; they
are only ranked lower.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError
from .estimator import (
    DATASETS,
    ReferenceModel,
    TrainSettings,
    build_surrogate,
    make_reference,
    tabular_accuracy,
    train_single_batch,
)
from .genotype import Genotype, crossover, format_arch_str, mutate, parse_arch_str, random_genotype
from .hwcost import Constraint, CostQuery, MacroSkeleton

ESTIMATORS = ("rmi_surrogate", "tabular_accuracy")


class EvaluationError(RuntimeError):
    """An estimator or cost lookup failed for one architecture."""

    def __init__(self, arch: str, cause: Exception):
        super().__init__(f"evaluating {arch}: {type(cause).__name__}: {cause}")
        self.arch = arch


@dataclass(frozen=True)
class SearchConfig:
    n_gen: int = 100
    n_pop: int = 20
    n_train: int = 100
    beta: float = 0.8
    mutation_rate: float = 1 / 6
    elitism: int = 1
    tournament: int = 2
    constraint: Constraint = Constraint(math.inf)
    estimator: str = "tabular_accuracy"
    dataset: str = "cifar10"
    step: float = 1e-2
    seed: int = 0

    def __post_init__(self):
        if self.n_pop < 2:
            raise ConfigError(f"population size must be >= 2, got {self.n_pop}")
        if not 0 <= self.elitism < self.n_pop:
            raise ConfigError(f"elitism must lie in [0, n_pop), got {self.elitism}")
        if self.tournament < 1:
            raise ConfigError(f"tournament size must be >= 1, got {self.tournament}")
        if self.n_gen < 0 or self.n_train < 0:
            raise ConfigError("generation and epoch counts must be non-negative")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ConfigError(f"mutation rate must lie in [0, 1], got {self.mutation_rate}")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must lie in [0, 1], got {self.beta}")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {self.estimator!r}; choose from {ESTIMATORS}")
        if self.dataset not in DATASETS:
            raise ConfigError(f"unknown dataset {self.dataset!r}; choose from {DATASETS}")

    @property
    def offspring_per_generation(self) -> int:
        return self.n_pop - self.elitism

    def to_dict(self) -> dict:
        d = asdict(self)
        c = self.constraint
        d["constraint"] = {
            "omega": c.omega if math.isfinite(c.omega) else "inf",
            "metric": c.query.metric,
            "device": c.query.device,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> SearchConfig:
        d = dict(d)
        c = d.pop("constraint")
        constraint = Constraint(float(c["omega"]), CostQuery(c["metric"], c["device"]))
        return cls(constraint=constraint, **d)


@dataclass(frozen=True)
class FitnessRecord:
    arch: str
    phi: float
    cost: float
    unit: str
    psi: float
    fitness: float

    @property
    def feasible(self) -> bool:
        return self.psi == 0

    @property
    def genotype(self) -> Genotype:
        return parse_arch_str(self.arch)


@dataclass
class SearchContext:
    """What evaluation needs besides the config: a benchmark table for
    tabular scores or latency costs, and the reference model plus batch for
    the surrogate estimator."""

    table: object = None
    reference: ReferenceModel | None = None
    batch: np.ndarray | None = None
    targets: np.ndarray | None = None
    skeleton: MacroSkeleton = field(default_factory=MacroSkeleton)
    surrogate_width: int | None = None


def make_rmi_context(seed: int = 0, n: int = 32, in_width: int = 16, width: int = 16, table=None) -> SearchContext:
    """Context with a fixed random batch and a synthetic reference model."""
    batch = np.random.default_rng([seed, 7]).normal(size=(n, in_width))
    ref, targets = make_reference(batch, seed=seed + 1000, width=width)
    return SearchContext(table=table, reference=ref, batch=batch, targets=targets, surrogate_width=width)


@dataclass
class SampleCounter:
    """Counts genotype-producing events: uniform draws and offspring."""

    random_draws: int = 0
    offspring: int = 0

    @property
    def total(self) -> int:
        return self.random_draws + self.offspring


def _score(g: Genotype, cfg: SearchConfig, ctx: SearchContext) -> float:
    if cfg.estimator == "tabular_accuracy":
        if ctx.table is None:
            raise ConfigError("tabular estimator needs a benchmark table")
        return tabular_accuracy(ctx.table, g, cfg.dataset) / 100.0
    if ctx.reference is None or ctx.batch is None:
        raise ConfigError("surrogate estimator needs a reference model and batch")
    settings = TrainSettings(ctx.batch, ctx.targets, epochs=cfg.n_train, beta=cfg.beta, step=cfg.step)
    width = ctx.surrogate_width or ctx.batch.shape[1]
    net = build_surrogate(g, ctx.batch.shape[1], width, cfg.seed)
    _, phi = train_single_batch(net, ctx.reference, settings)
    return phi


def evaluate_fitness(g: Genotype, cfg: SearchConfig, ctx: SearchContext) -> FitnessRecord:
    arch = format_arch_str(g)
    try:
        phi = _score(g, cfg, ctx)
        cost = cfg.constraint.query.cost(g, ctx.table, ctx.skeleton)
        psi = cfg.constraint.penalty(cost)
    except ConfigError:
        raise
    except Exception as exc:
        raise EvaluationError(arch, exc) from exc
    return FitnessRecord(arch, phi, cost.value, cost.unit, psi, phi + psi)


def init_population(cfg: SearchConfig, rng: np.random.Generator, counter: SampleCounter | None = None) -> list[Genotype]:
    pop = [random_genotype(rng) for _ in range(cfg.n_pop)]
    if counter is not None:
        counter.random_draws += len(pop)
    return pop


def _rank_key(rec: FitnessRecord):
    return (-rec.fitness, rec.arch)


def _tournament(records: list[FitnessRecord], size: int, rng: np.random.Generator) -> FitnessRecord:
    picks = rng.integers(0, len(records), size=size)
    return min((records[i] for i in picks), key=_rank_key)


def evolve_generation(
    records: list[FitnessRecord],
    cfg: SearchConfig,
    rng: np.random.Generator,
    counter: SampleCounter | None = None,
) -> list[Genotype]:
    """Next population: elites by fitness, then tournament/crossover/mutation children."""
    elites = sorted(records, key=_rank_key)[: cfg.elitism]
    nxt = [r.genotype for r in elites]
    while len(nxt) < cfg.n_pop:
        a = _tournament(records, cfg.tournament, rng).genotype
        b = _tournament(records, cfg.tournament, rng).genotype
        nxt.append(mutate(crossover(a, b, rng), cfg.mutation_rate, rng))
        if counter is not None:
            counter.offspring += 1
    return nxt


@dataclass
class GenerationRecord:
    generation: int
    best: FitnessRecord
    mean_fitness: float
    evaluations: int


@dataclass
class SearchHistory:
    generations: list[GenerationRecord] = field(default_factory=list)
    sampling: SampleCounter = field(default_factory=SampleCounter)
    best: FitnessRecord | None = None
    feasible_seen: bool = False

    def best_fitness_trace(self) -> list[float]:
        return [r.best.fitness for r in self.generations]


def pick_best(records) -> FitnessRecord:
    """Feasible before infeasible, then highest fitness, then lexicographic arch."""
    return min(records, key=lambda r: (not r.feasible, -r.fitness, r.arch))


def run_search(cfg: SearchConfig, ctx: SearchContext, workers: int | None = None):
    """Run the generational search and return (best genotype, history).

    Generations 0..n_gen are evaluated, so the history has n_gen + 1 entries.
    The returned architecture is the best seen over the whole run; it is
    feasible whenever any feasible architecture was evaluated.
    """
    if cfg.estimator == "tabular_accuracy" and ctx.table is None:
        raise ConfigError("tabular estimator needs a benchmark table")
    history = SearchHistory()
    cache: dict[Genotype, FitnessRecord] = {}
    best_ever = None
    any_feasible_seen = False
    pool = ThreadPoolExecutor(workers) if workers and workers > 1 else None
    try:
        pop = init_population(cfg, np.random.default_rng([cfg.seed, 0]), history.sampling)
        evaluations = 0
        for gen in range(cfg.n_gen + 1):
            todo = list(dict.fromkeys(g for g in pop if g not in cache))
            if pool is not None:
                results = list(pool.map(lambda g: evaluate_fitness(g, cfg, ctx), todo))
            else:
                results = [evaluate_fitness(g, cfg, ctx) for g in todo]
            cache.update(zip(todo, results))
            records = [cache[g] for g in pop]
            evaluations += len(records)

            gen_best = min(records, key=_rank_key)
            history.generations.append(
                GenerationRecord(gen, gen_best, float(np.mean([r.fitness for r in records])), evaluations)
            )
            cand = pick_best(records)
            best_ever = cand if best_ever is None else pick_best([best_ever, cand])
            any_feasible_seen = any_feasible_seen or any(r.feasible for r in records)

            if gen < cfg.n_gen:
                pop = evolve_generation(records, cfg, np.random.default_rng([cfg.seed, 1, gen]), history.sampling)
    finally:
        if pool is not None:
            pool.shutdown()
    history.best = best_ever
    history.feasible_seen = any_feasible_seen
    return best_ever.genotype, history
