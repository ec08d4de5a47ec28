"""Cell encoding for the 5-operation, 4-node tabular search space.

A genotype is six operation genes, one per edge of the cell DAG, stored in
the order the canonical architecture string lists them::

    |op~0|+|op~0|op~1|+|op~0|op~1|op~2|
     (1,0)  (2,0) (2,1)  (3,0) (3,1) (3,2)
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterator

import numpy as np

from .errors import ArchParseError


class Operation(IntEnum):
    none = 0
    skip_connect = 1
    nor_conv_1x1 = 2
    nor_conv_3x3 = 3
    avg_pool_3x3 = 4


NUM_OPS = len(Operation)
NUM_NODES = 4
# (target node, source node) for every gene position
EDGES = ((1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2))
NUM_GENES = len(EDGES)
SPACE_SIZE = NUM_OPS**NUM_GENES


@dataclass(frozen=True, order=True)
class Genotype:
    genes: tuple[int, ...]

    def __post_init__(self):
        genes = tuple(int(x) for x in self.genes)
        if len(genes) != NUM_GENES:
            raise ValueError(f"genotype needs {NUM_GENES} genes, got {len(genes)}")
        for i, x in enumerate(genes):
            if not 0 <= x < NUM_OPS:
                raise ValueError(f"gene {i} has invalid operation code {x}")
        object.__setattr__(self, "genes", genes)

    @property
    def ops(self) -> tuple[Operation, ...]:
        return tuple(Operation(x) for x in self.genes)

    @property
    def index(self) -> int:
        """Position in the lexicographic enumeration of the space."""
        idx = 0
        for x in self.genes:
            idx = idx * NUM_OPS + x
        return idx

    @classmethod
    def from_index(cls, idx: int) -> Genotype:
        if not 0 <= idx < SPACE_SIZE:
            raise ValueError(f"index {idx} outside [0, {SPACE_SIZE})")
        genes = []
        for _ in range(NUM_GENES):
            idx, r = divmod(idx, NUM_OPS)
            genes.append(r)
        return cls(tuple(reversed(genes)))

    def count(self, op: Operation) -> int:
        return sum(1 for x in self.genes if x == op)

    def __str__(self) -> str:
        return format_arch_str(self)


def format_arch_str(g: Genotype) -> str:
    nodes = []
    k = 0
    for target in range(1, NUM_NODES):
        tokens = []
        for source in range(target):
            tokens.append(f"{Operation(g.genes[k]).name}~{source}")
            k += 1
        nodes.append("|" + "|".join(tokens) + "|")
    return "+".join(nodes)


def parse_arch_str(s: str) -> Genotype:
    """Inverse of :func:`format_arch_str`.

    Raises ArchParseError pointing at the offending node/token.
    """
    groups = s.split("+")
    if len(groups) != NUM_NODES - 1:
        raise ArchParseError(f"expected {NUM_NODES - 1} '+'-separated nodes, got {len(groups)} in {s!r}")
    genes = []
    for target, group in enumerate(groups, start=1):
        if len(group) < 2 or not (group.startswith("|") and group.endswith("|")):
            raise ArchParseError(f"node {target}: {group!r} must be wrapped in '|' delimiters")
        tokens = group[1:-1].split("|")
        if len(tokens) != target:
            raise ArchParseError(f"node {target}: expected {target} inputs, got {len(tokens)} in {group!r}")
        for source, token in enumerate(tokens):
            where = f"node {target}, input {source}"
            name, sep, suffix = token.partition("~")
            if not sep:
                raise ArchParseError(f"{where}: token {token!r} lacks a '~k' input index")
            if name not in Operation.__members__:
                raise ArchParseError(f"{where}: unknown operation {name!r}")
            if suffix != str(source):
                raise ArchParseError(f"{where}: token {token!r} has input index {suffix!r}, expected {source}")
            genes.append(Operation[name].value)
    return Genotype(tuple(genes))


def random_genotype(rng: np.random.Generator) -> Genotype:
    return Genotype(tuple(rng.integers(0, NUM_OPS, size=NUM_GENES)))


def crossover(a: Genotype, b: Genotype, rng: np.random.Generator) -> Genotype:
    """Uniform crossover: each gene comes from either parent with probability 1/2."""
    take_a = rng.random(NUM_GENES) < 0.5
    return Genotype(tuple(x if t else y for x, y, t in zip(a.genes, b.genes, take_a)))


def mutate(g: Genotype, rate: float, rng: np.random.Generator) -> Genotype:
    """Resample each gene with probability `rate` to a different operation."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"mutation rate must lie in [0, 1], got {rate}")
    flip = rng.random(NUM_GENES) < rate
    # offset in 1..NUM_OPS-1 guarantees the new op differs from the old one
    offset = rng.integers(1, NUM_OPS, size=NUM_GENES)
    return Genotype(tuple((x + o) % NUM_OPS if f else x for x, f, o in zip(g.genes, flip, offset)))


def enumerate_space() -> Iterator[Genotype]:
    for genes in itertools.product(range(NUM_OPS), repeat=NUM_GENES):
        yield Genotype(genes)
