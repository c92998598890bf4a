"""Sequence proposers: uniform random search and exhaustive grid search."""

from __future__ import annotations

import itertools
from typing import Any

import numpy as np

from ..errors import ConfigError
from ..space import ExperimentConfig, JobConfig, SearchSpace
from . import Draft, Proposer
from .encoding import sample_uniform

DEFAULT_GRID_N = 3
DEFAULT_GRID_CAP = 1_000_000


class RandomProposer(Proposer):
    """Independent uniform draw per dimension, n_samples times."""

    def _next(self) -> Draft | None:
        if self.issued >= self.n_samples:
            return None
        return Draft(sample_uniform(self.space, self.rng))


def _dimension_grid(param, default_n: int = DEFAULT_GRID_N) -> list[Any]:
    if param.kind == "choice":
        return list(param.choices)
    n = param.grid_n if param.grid_n is not None else default_n
    pts = np.linspace(param.low, param.high, n)
    if param.kind == "int":
        ints = [int(round(v)) for v in pts]
        return list(dict.fromkeys(ints))
    return [float(v) for v in pts]


def grid_enumerate(
    space: SearchSpace, default_n: int = DEFAULT_GRID_N, cap: int = DEFAULT_GRID_CAP
) -> list[JobConfig]:
    """Full Cartesian product over per-dimension grids, first parameter slowest.

    Float grids are ``grid_n`` equally spaced points including both endpoints;
    int grids are rounded to the lattice and deduplicated; choice grids are
    the value list itself.
    """
    dims = [_dimension_grid(p, default_n) for p in space]
    total = 1
    for d in dims:
        total *= len(d)
    if total > cap:
        raise ConfigError(
            "grid-too-large", f"grid has {total} points, exceeding the cap of {cap}"
        )
    names = space.names
    return [
        JobConfig(values=dict(zip(names, combo)), job_id=i)
        for i, combo in enumerate(itertools.product(*dims))
    ]


class GridProposer(Proposer):
    """Walks the full grid in order; budget is the grid size, capped by n_samples."""

    def __init__(self, config: ExperimentConfig, seed: int | None = None):
        super().__init__(config, seed)
        cap = int(self.options.get("max_grid_size", DEFAULT_GRID_CAP))
        self._grid = grid_enumerate(self.space, cap=cap)
        self._budget = min(len(self._grid), self.n_samples)

    def _next(self) -> Draft | None:
        if self.issued >= self._budget:
            return None
        return Draft(dict(self._grid[self.issued].values))

    def _exhausted(self) -> bool:
        return self.issued >= self._budget
