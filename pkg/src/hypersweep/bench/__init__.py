"""Synthetic objectives and the benchmark harness."""

from .harness import BenchmarkResult, SeedOutcome, run_benchmark
from .objectives import BUDGET_PENALTY, budgeted_score, rosenbrock, script_path

__all__ = [
    "BUDGET_PENALTY",
    "BenchmarkResult",
    "SeedOutcome",
    "budgeted_score",
    "rosenbrock",
    "run_benchmark",
    "script_path",
]
