"""Run results and their line-delimited JSON persistence."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

from .engine import FitnessRecord, GenerationRecord, SampleCounter, SearchConfig, SearchHistory


@dataclass
class RunResult:
    config: dict
    best_arch: str
    best: FitnessRecord
    history: SearchHistory
    duration: float
    seed: int

    @property
    def search_config(self) -> SearchConfig:
        return SearchConfig.from_dict(self.config)

    def same_outcome(self, other: RunResult) -> bool:
        """Equality ignoring wall-clock duration."""
        a, b = self.to_dict(), other.to_dict()
        a.pop("duration")
        b.pop("duration")
        return a == b

    def to_dict(self) -> dict:
        h = self.history
        return {
            "kind": "run_result",
            "seed": self.seed,
            "config": self.config,
            "best_arch": self.best_arch,
            "best": asdict(self.best),
            "history": {
                "generations": [
                    {
                        "generation": r.generation,
                        "best": asdict(r.best),
                        "mean_fitness": r.mean_fitness,
                        "evaluations": r.evaluations,
                    }
                    for r in h.generations
                ],
                "sampling": {"random_draws": h.sampling.random_draws, "offspring": h.sampling.offspring},
                "best": asdict(h.best) if h.best is not None else None,
                "feasible_seen": h.feasible_seen,
            },
            "duration": self.duration,
        }

    @classmethod
    def from_dict(cls, d: dict) -> RunResult:
        if d.get("kind") != "run_result":
            raise ValueError(f"not a run_result record: kind={d.get('kind')!r}")
        h = d["history"]
        history = SearchHistory(
            generations=[
                GenerationRecord(r["generation"], FitnessRecord(**r["best"]), r["mean_fitness"], r["evaluations"])
                for r in h["generations"]
            ],
            sampling=SampleCounter(**h["sampling"]),
            best=FitnessRecord(**h["best"]) if h["best"] is not None else None,
            feasible_seen=h["feasible_seen"],
        )
        return cls(
            config=d["config"],
            best_arch=d["best_arch"],
            best=FitnessRecord(**d["best"]),
            history=history,
            duration=d["duration"],
            seed=d["seed"],
        )


def write_results(results, path) -> None:
    """One JSON object per line, fields in a fixed order."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.to_dict(), allow_nan=False))
            fh.write("\n")


def read_results(path) -> list[RunResult]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(RunResult.from_dict(json.loads(line)))
    return out
