"""Evolutionary architecture search under hardware-cost constraints on the
NAS-Bench-201 cell space, with a training-light similarity estimator."""

from .engine import SearchConfig, SearchContext, make_rmi_context, run_search
from .genotype import Genotype, Operation, format_arch_str, parse_arch_str
from .hwcost import Constraint, CostQuery, penalty

__all__ = [
    "Constraint",
    "CostQuery",
    "Genotype",
    "Operation",
    "SearchConfig",
    "SearchContext",
    "format_arch_str",
    "make_rmi_context",
    "parse_arch_str",
    "penalty",
    "run_search",
]
__version__ = "0.1.0"
