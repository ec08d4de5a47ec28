"""Tabular benchmark: per-architecture accuracies, MACs and device latencies.

File format is a flat CSV with this exact header::

    arch_str,cifar10_test,cifar100_test,in16_test,macs_m,edgegpu_ms,raspi4_ms,edgetpu_ms,pixel3_ms,eyeriss_ms,fpga_ms

one row per architecture, UTF-8, '.' as the decimal separator.
"""

from __future__ import annotations

import csv
import logging
import math
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import ArchParseError, DuplicateKeyError, SchemaError, TableLookupError
from .genotype import EDGES, SPACE_SIZE, Genotype, Operation, enumerate_space, format_arch_str, parse_arch_str
from .hwcost import DEVICES, MacroSkeleton, macs_estimate, synthetic_latencies

log = logging.getLogger(__name__)

ACCURACY_COLUMNS = ("cifar10_test", "cifar100_test", "in16_test")
COLUMNS = ACCURACY_COLUMNS + ("macs_m",) + tuple(f"{d}_ms" for d in DEVICES)
HEADER = ("arch_str",) + COLUMNS


class BenchTable:
    """Read-only table keyed by canonical architecture string."""

    def __init__(self, arch_strs: Iterable[str], data, columns: Iterable[str] = COLUMNS):
        self.arch_strs = tuple(arch_strs)
        self.columns = tuple(columns)
        data = np.array(data, dtype=float).reshape(len(self.arch_strs), len(self.columns))
        if not np.isfinite(data).all():
            raise SchemaError("benchmark values must be finite")
        if (data < 0).any():
            raise SchemaError("benchmark values must be non-negative")
        data.setflags(write=False)
        self.data = data
        self._row = {}
        for i, s in enumerate(self.arch_strs):
            if s in self._row:
                raise DuplicateKeyError(f"duplicate architecture {s!r} at row {i}")
            self._row[s] = i
        self._col = {c: j for j, c in enumerate(self.columns)}
        self._genotypes = None

    def __len__(self) -> int:
        return len(self.arch_strs)

    def __contains__(self, g) -> bool:
        return str(g) in self._row

    @property
    def complete(self) -> bool:
        return len(self) == SPACE_SIZE

    def row_index(self, g: Genotype | str) -> int:
        key = g if isinstance(g, str) else format_arch_str(g)
        try:
            return self._row[key]
        except KeyError:
            raise TableLookupError(f"architecture {key} not in table") from None

    def column(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self._col[name]]
        except KeyError:
            raise TableLookupError(f"table has no column {name!r}") from None

    def value(self, g: Genotype | str, column: str) -> float:
        col = self.column(column)
        return float(col[self.row_index(g)])

    def row(self, g: Genotype | str) -> dict[str, float]:
        i = self.row_index(g)
        return {c: float(v) for c, v in zip(self.columns, self.data[i])}

    def genotypes(self) -> list[Genotype]:
        if self._genotypes is None:
            self._genotypes = [parse_arch_str(s) for s in self.arch_strs]
        return self._genotypes

    @classmethod
    def from_rows(cls, rows: Mapping[str, Mapping[str, float]], columns: Iterable[str] = COLUMNS) -> BenchTable:
        columns = tuple(columns)
        keys = list(rows)
        data = [[rows[k][c] for c in columns] for k in keys]
        return cls(keys, data, columns)


def load_bench(path) -> BenchTable:
    path = Path(path)
    arch_strs = []
    data = []
    seen = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if tuple(header) != HEADER:
            raise SchemaError(f"{path}: line 1: header {','.join(header)!r} does not match {','.join(HEADER)!r}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(HEADER):
                raise SchemaError(f"{path}: line {lineno}: expected {len(HEADER)} fields, got {len(rec)}")
            arch = rec[0]
            try:
                parse_arch_str(arch)
            except ArchParseError as exc:
                raise SchemaError(f"{path}: line {lineno}, column arch_str: {exc}") from None
            if arch in seen:
                raise DuplicateKeyError(f"{path}: line {lineno}: {arch} already defined on line {seen[arch]}")
            seen[arch] = lineno
            values = []
            for name, field in zip(COLUMNS, rec[1:]):
                try:
                    v = float(field)
                except ValueError:
                    raise SchemaError(f"{path}: line {lineno}, column {name}: {field!r} is not a number") from None
                if not math.isfinite(v) or v < 0:
                    raise SchemaError(f"{path}: line {lineno}, column {name}: {field!r} must be finite and >= 0")
                values.append(v)
            arch_strs.append(arch)
            data.append(values)
    table = BenchTable(arch_strs, np.array(data).reshape(len(arch_strs), len(COLUMNS)))
    if table.complete:
        log.info("loaded %s: %d rows", path, len(table))
    else:
        log.warning("loaded %s: %d rows (partial table, full space has %d)", path, len(table), SPACE_SIZE)
    return table


def save_bench(table: BenchTable, path) -> None:
    if table.columns != COLUMNS:
        raise SchemaError("only tables with the full column set can be written")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for s, row in zip(table.arch_strs, table.data):
            writer.writerow([s] + [repr(float(v)) for v in row])


# (chance level, ceiling) per dataset, in percent
_ACC_RANGE = {"cifar10_test": (10.0, 94.4), "cifar100_test": (1.0, 73.5), "in16_test": (0.83, 47.3)}
_ACC_NOISE = {"cifar10_test": 0.25, "cifar100_test": 0.6, "in16_test": 0.5}
# per-op contribution to the quality score; strictly largest for 3x3 conv
_OP_QUALITY = {
    Operation.none: 0.0,
    Operation.skip_connect: 0.35,
    Operation.nor_conv_1x1: 0.6,
    Operation.nor_conv_3x3: 1.0,
    Operation.avg_pool_3x3: 0.25,
}
_SATURATION = 0.45


def connected(g: Genotype) -> bool:
    """True if a path of non-`none` edges links the cell input to its output."""
    reach = {0}
    for (target, source), op in zip(EDGES, g.ops):
        if op != Operation.none and source in reach:
            reach.add(target)
    return 3 in reach


def synthetic_accuracy(genotypes, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Accuracy per dataset: saturating in a per-op quality score, chance level
    for cells whose output is disconnected from the input."""
    q = np.array([[_OP_QUALITY[op] for op in g.ops] for g in genotypes]).reshape(-1, 6)
    score = q.sum(axis=1)
    alive = np.array([connected(g) for g in genotypes])
    out = {}
    for col, (lo, hi) in _ACC_RANGE.items():
        acc = lo + (hi - lo) * (1.0 - np.exp(-_SATURATION * score))
        acc = acc + rng.normal(0.0, _ACC_NOISE[col], size=len(acc))
        acc = np.where(alive, acc, lo + np.abs(rng.normal(0.0, 0.1, size=len(acc))))
        out[col] = np.clip(acc, 0.0, 100.0)
    return out


def generate_synthetic_bench(seed: int = 0, skeleton: MacroSkeleton | None = None) -> BenchTable:
    """Full 15,625-row table with synthetic accuracies and device latencies."""
    genotypes = list(enumerate_space())
    rng = np.random.default_rng(seed)
    acc = synthetic_accuracy(genotypes, rng)
    cols = dict(acc)
    cols["macs_m"] = np.array([macs_estimate(g, skeleton) for g in genotypes])
    for dev in DEVICES:
        cols[f"{dev}_ms"] = synthetic_latencies(genotypes, dev, rng, macs=cols["macs_m"])
    data = np.column_stack([cols[c] for c in COLUMNS])
    return BenchTable([format_arch_str(g) for g in genotypes], data)
