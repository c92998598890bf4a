"""Desk-scale benchmark harness.

Drives the orchestrator as a library but runs every job through the real
subprocess path (script + JSON config + stdout result line), so a
benchmark validates the whole stack.  Total-epoch accounting mirrors the
equal-budget scheme: fixed-epoch proposers spend n_samples * epochs, the
bandit proposers spend their bracket-plan totals.
"""

from __future__ import annotations

import csv
import io
import statistics
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from ..orchestrator import Experiment
from ..resources import Environment, ResourceSlot
from ..space import ExperimentConfig, SearchSpace, parse_experiment_config
from ..tracking import Store
from .objectives import script_path

BANDIT_PROPOSERS = ("hyperband", "bohb")

_DEFAULT_SPACE_DOC = [
    {"name": "x", "range": [-5, 10], "type": "float"},
    {"name": "y", "range": [-5, 10], "type": "float"},
]


@dataclass
class SeedOutcome:
    seed: int
    best_score: float | None
    n_finished: int
    n_failed: int
    total_epochs: float
    trajectory: list[tuple[int, float]] = field(default_factory=list)


@dataclass
class BenchmarkResult:
    proposer: str
    objective: str
    n_samples: int
    epochs_per_sample: float
    outcomes: list[SeedOutcome]

    def best_scores(self) -> list[float]:
        return [o.best_score for o in self.outcomes if o.best_score is not None]

    def median_best(self) -> float:
        return statistics.median(self.best_scores())

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["proposer", "objective", "seed", "n_finished", "n_failed",
             "total_epochs", "best_score"]
        )
        for o in self.outcomes:
            writer.writerow(
                [self.proposer, self.objective, o.seed, o.n_finished, o.n_failed,
                 o.total_epochs, o.best_score]
            )
        return buf.getvalue()

    def trajectories_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["proposer", "objective", "seed", "completion_index", "best_so_far"])
        for o in self.outcomes:
            for i, best in o.trajectory:
                writer.writerow([self.proposer, self.objective, o.seed, i, best])
        return buf.getvalue()


def _experiment_config(
    proposer: str,
    objective: str,
    n_samples: int,
    n_parallel: int,
    proposer_options: dict[str, Any],
    space_doc: list[dict] | None,
) -> ExperimentConfig:
    import json

    doc = {
        "proposer": proposer,
        "script": script_path(objective),
        "resource": "cpu",
        "n_parallel": n_parallel,
        "target": "min",
        "parameter_config": space_doc or _DEFAULT_SPACE_DOC,
        "n_samples": n_samples,
        "proposer_options": proposer_options,
    }
    return parse_experiment_config(json.dumps(doc))


def run_benchmark(
    proposer: str,
    objective: str = "rosenbrock",
    seeds: Sequence[int] = tuple(range(20)),
    n_samples: int = 200,
    n_parallel: int = 4,
    epochs_per_sample: float = 1.0,
    proposer_options: dict[str, Any] | None = None,
    space_doc: list[dict] | None = None,
    workdir: str | Path | None = None,
) -> BenchmarkResult:
    """Run `proposer` against a bundled objective script once per seed."""
    base = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="hyperswp-bench-"))
    base.mkdir(parents=True, exist_ok=True)
    env = Environment(
        resources=tuple(
            ResourceSlot(rid=i, rtype="cpu", locator=f"cpu-{i}")
            for i in range(n_parallel)
        ),
        db_path=str(base / "bench.db"),
        workdir=str(base / "work"),
    )
    options = dict(proposer_options or {})
    outcomes = []
    store = Store(env.db_path)
    try:
        for seed in seeds:
            config = _experiment_config(
                proposer, objective, n_samples, n_parallel, options, space_doc
            )
            summary = Experiment(config, env, store, seed=seed).run()
            if proposer in BANDIT_PROPOSERS:
                total = summary.total_iterations
            else:
                total = summary.n_issued * epochs_per_sample
            outcomes.append(
                SeedOutcome(
                    seed=seed,
                    best_score=summary.best_score,
                    n_finished=summary.n_finished,
                    n_failed=summary.n_failed,
                    total_epochs=total,
                    trajectory=store.export_series(summary.eid),
                )
            )
    finally:
        store.close()
    return BenchmarkResult(
        proposer=proposer,
        objective=objective,
        n_samples=n_samples,
        epochs_per_sample=epochs_per_sample,
        outcomes=outcomes,
    )


def default_space() -> SearchSpace:
    import json

    return parse_experiment_config(
        json.dumps(
            {
                "proposer": "random",
                "script": "unused",
                "parameter_config": _DEFAULT_SPACE_DOC,
                "n_samples": 1,
            }
        )
    ).space
