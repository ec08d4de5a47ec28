"""Hardware cost: analytic MACs, per-device latency lookups and the penalty.

Costs carry their unit so a latency threshold is never compared against a
MACs figure by accident.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import HaltingError, TableLookupError
from .genotype import Genotype, Operation, random_genotype

DEVICES = ("edgegpu", "raspi4", "edgetpu", "pixel3", "eyeriss", "fpga")
METRICS = ("macs", "latency")
UNITS = {"macs": "M", "latency": "ms"}


class Cost(NamedTuple):
    value: float
    unit: str


@dataclass(frozen=True)
class CostQuery:
    metric: str = "macs"
    device: str | None = None

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown cost metric {self.metric!r}; choose from {METRICS}")
        if self.metric == "latency":
            if self.device not in DEVICES:
                raise ValueError(f"latency queries need a device from {DEVICES}, got {self.device!r}")
        elif self.device is not None:
            raise ValueError("MACs queries take no device")

    @property
    def unit(self) -> str:
        return UNITS[self.metric]

    @property
    def column(self) -> str:
        return "macs_m" if self.metric == "macs" else f"{self.device}_ms"

    def cost(self, g: Genotype, table=None, skeleton: MacroSkeleton | None = None) -> Cost:
        """Cost of `g`. MACs come from the table when one is given."""
        if self.metric == "latency":
            if table is None:
                raise ValueError("latency costs need a benchmark table")
            return Cost(latency_lookup(table, g, self.device), self.unit)
        if table is not None:
            return Cost(table.value(g, "macs_m"), self.unit)
        return Cost(macs_estimate(g, skeleton or MacroSkeleton()), self.unit)


@dataclass(frozen=True)
class Constraint:
    omega: float
    query: CostQuery = CostQuery()

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"constraint threshold must be positive, got {self.omega}")

    @property
    def threshold(self) -> Cost:
        return Cost(self.omega, self.query.unit)

    def penalty(self, cost: Cost | float) -> float:
        return penalty(cost, self.threshold)

    def feasible(self, cost: Cost | float) -> bool:
        return self.penalty(cost) == 0


def _value(x):
    if isinstance(x, Cost):
        return x.value, x.unit
    return x, None


def penalty(cost, omega):
    """0 if cost <= omega, else omega - cost (negative).

    Either argument may be a :class:`Cost`; if both are, their units must agree.
    """
    c, cu = _value(cost)
    w, wu = _value(omega)
    if cu is not None and wu is not None and cu != wu:
        raise ValueError(f"cost in {cu} cannot be compared against a threshold in {wu}")
    if c <= w:
        return 0.0
    return w - c


@dataclass(frozen=True)
class MacroSkeleton:
    """Macro network the cell is stacked into: stem conv, 3 stages of
    `cells_per_stage` cells, global pool and a linear head."""

    height: int = 32
    width: int = 32
    channels: tuple[int, ...] = (16, 32, 64)
    cells_per_stage: int = 5
    in_channels: int = 3
    num_classes: int = 10

    def __post_init__(self):
        vals = (self.height, self.width, self.cells_per_stage, self.in_channels, self.num_classes, *self.channels)
        if not self.channels or min(vals) <= 0:
            raise ValueError("macro skeleton sizes must all be positive")

    def stages(self):
        """(channels, height, width) per stage; resolution halves between stages."""
        h, w = self.height, self.width
        for c in self.channels:
            yield c, h, w
            h, w = max(1, h // 2), max(1, w // 2)

    def base_macs(self) -> int:
        """Stem 3x3 conv plus the classifier head, independent of the genotype."""
        c0 = self.channels[0]
        stem = 9 * self.in_channels * c0 * self.height * self.width
        head = self.channels[-1] * self.num_classes
        return stem + head


_KERNEL_AREA = {Operation.nor_conv_1x1: 1, Operation.nor_conv_3x3: 9}


def macs_estimate(g: Genotype, skel: MacroSkeleton | None = None) -> float:
    """Analytic MACs in millions. Pool, skip and none edges cost nothing."""
    skel = skel or MacroSkeleton()
    total = skel.base_macs()
    per_cell = sum(_KERNEL_AREA.get(op, 0) for op in g.ops)
    for c, h, w in skel.stages():
        total += skel.cells_per_stage * per_cell * c * c * h * w
    return total / 1e6


def latency_lookup(table, g: Genotype, device: str) -> float:
    if device not in DEVICES:
        raise TableLookupError(f"unknown device {device!r}")
    return table.value(g, f"{device}_ms")


def rejection_sample_population(
    constraint: Constraint,
    cost_fn: Callable[[Genotype], Cost | float],
    size: int,
    rng: np.random.Generator,
    max_attempts: int = 10**6,
):
    """Draw uniform genotypes, keeping those within the constraint.

    Returns (kept genotypes, number of draws). Raises HaltingError once
    `max_attempts` draws have not produced `size` feasible genotypes.
    """
    if size < 1:
        raise ValueError("population size must be at least 1")
    if max_attempts < size:
        raise ValueError("max_attempts must be at least the population size")
    kept = []
    drawn = 0
    while len(kept) < size:
        if drawn >= max_attempts:
            raise HaltingError(len(kept), drawn)
        g = random_genotype(rng)
        drawn += 1
        if constraint.feasible(cost_fn(g)):
            kept.append(g)
    return kept, drawn


@dataclass(frozen=True)
class DeviceProfile:
    """Synthetic latency model: affine in MACs, plus per-op overheads and noise.

    latency = (intercept + slope * macs + sum(op_cost[op] * count(op))) * lognormal(0, noise)
    """

    intercept: float
    slope: float
    op_cost: tuple[float, float, float, float, float]
    noise: float


# Per-op costs cover memory traffic and kernel launch overheads the MACs count
# misses; their device-specific mix makes rankings differ across devices.
DEVICE_PROFILES = {
    "edgegpu": DeviceProfile(1.6, 0.012, (0.0, 0.08, 0.25, 0.30, 0.35), 0.04),
    "raspi4": DeviceProfile(2.5, 0.14, (0.0, 0.30, 0.40, 0.50, 0.90), 0.05),
    "edgetpu": DeviceProfile(0.9, 0.004, (0.0, 0.02, 0.04, 0.06, 0.55), 0.03),
    "pixel3": DeviceProfile(1.1, 0.045, (0.0, 0.10, 0.10, 0.30, 0.25), 0.05),
    "eyeriss": DeviceProfile(0.6, 0.030, (0.0, 0.15, 0.05, 0.20, 0.30), 0.03),
    "fpga": DeviceProfile(1.0, 0.020, (0.0, 0.05, 0.20, 0.45, 0.10), 0.03),
}


def synthetic_latencies(genotypes, device: str, rng: np.random.Generator, macs=None, skel: MacroSkeleton | None = None) -> np.ndarray:
    """Latency in ms for each genotype under the device's synthetic profile."""
    prof = DEVICE_PROFILES[device]
    genes = np.array([g.genes for g in genotypes], dtype=int).reshape(-1, 6)
    if macs is None:
        macs = np.array([macs_estimate(g, skel) for g in genotypes])
    overhead = np.asarray(prof.op_cost)[genes].sum(axis=1)
    base = prof.intercept + prof.slope * macs + overhead
    return base * np.exp(rng.normal(0.0, prof.noise, size=len(base)))
