"""Tree-structured Parzen estimator proposer.

Completed jobs are split at the gamma-quantile of scores into good/bad
sets; per-dimension densities l(x) (good) and g(x) (bad) are kernel
density estimates on normalized numeric coordinates and smoothed frequency
counts on choice dimensions.  Candidates are drawn from l and ranked by
the density ratio l/g.
"""

from __future__ import annotations

import math
from typing import Any, Mapping, Sequence

import numpy as np

from ..space import ExperimentConfig, SearchSpace
from . import Draft, Proposer
from .encoding import sample_uniform, to_unit, values_from_units

DEFAULT_GAMMA = 0.25
DEFAULT_N_STARTUP = 20
DEFAULT_N_CANDIDATES = 24
BANDWIDTH_FLOOR = 1e-3  # of the normalized range, which is 1


class _NumericDensity:
    """Gaussian KDE over unit-interval coordinates, Scott-style bandwidth."""

    def __init__(self, obs: Sequence[float]):
        self.obs = np.asarray(obs, dtype=float)
        n = len(self.obs)
        self.bw = max(float(self.obs.std()) * n ** (-0.2), BANDWIDTH_FLOOR)

    def logpdf(self, u: float) -> float:
        z = (u - self.obs) / self.bw
        dens = np.exp(-0.5 * z**2).mean() / (self.bw * math.sqrt(2.0 * math.pi))
        return math.log(max(dens, 1e-300))

    def sample(self, rng: np.random.Generator) -> float:
        center = self.obs[int(rng.integers(len(self.obs)))]
        return float(np.clip(center + self.bw * rng.normal(), 0.0, 1.0))


class _CategoricalDensity:
    """Add-one smoothed frequency counts over choice indices."""

    def __init__(self, indices: Sequence[int], n_categories: int):
        counts = np.bincount(list(indices), minlength=n_categories).astype(float)
        self.probs = (counts + 1.0) / (counts.sum() + n_categories)
        self._cum = np.cumsum(self.probs)

    def logpdf(self, idx: float) -> float:
        return math.log(self.probs[int(idx)])

    def sample(self, rng: np.random.Generator) -> float:
        return float(np.searchsorted(self._cum, rng.random()))


def split_good_bad(
    pairs: Sequence[tuple[Mapping[str, Any], float]], gamma: float
) -> tuple[list[Mapping[str, Any]], list[Mapping[str, Any]]]:
    """Lowest ceil(gamma*n) scores are good; both sides stay non-empty."""
    n = len(pairs)
    if n < 2:
        raise ValueError("need at least two completed jobs to split")
    order = sorted(range(n), key=lambda i: pairs[i][1])
    n_good = max(1, min(math.ceil(gamma * n), n - 1))
    good = [pairs[i][0] for i in order[:n_good]]
    bad = [pairs[i][0] for i in order[n_good:]]
    return good, bad


class TpeModel:
    """Per-dimension good/bad densities over a history of (values, score)."""

    def __init__(
        self,
        space: SearchSpace,
        pairs: Sequence[tuple[Mapping[str, Any], float]],
        gamma: float = DEFAULT_GAMMA,
    ):
        self.space = space
        good, bad = split_good_bad(pairs, gamma)
        self.n_good, self.n_bad = len(good), len(bad)
        self.good = {p.name: self._density(p, good) for p in space}
        self.bad = {p.name: self._density(p, bad) for p in space}

    @staticmethod
    def _density(param, rows: list[Mapping[str, Any]]):
        if param.kind == "choice":
            idx = [
                next(i for i, c in enumerate(param.choices) if r[param.name] == c)
                for r in rows
            ]
            return _CategoricalDensity(idx, len(param.choices))
        return _NumericDensity([to_unit(param, r[param.name]) for r in rows])

    def propose(
        self, rng: np.random.Generator, n_candidates: int = DEFAULT_N_CANDIDATES
    ) -> dict[str, Any]:
        """Draw candidates from l(x) and return the one maximizing l/g."""
        best_units, best_ratio = None, -math.inf
        for _ in range(n_candidates):
            units = {name: dens.sample(rng) for name, dens in self.good.items()}
            ratio = sum(
                self.good[name].logpdf(u) - self.bad[name].logpdf(u)
                for name, u in units.items()
            )
            if ratio > best_ratio:
                best_units, best_ratio = units, ratio
        return values_from_units(self.space, best_units)


class TpeProposer(Proposer):
    """Random until n_startup completed jobs, then density-ratio proposals."""

    def __init__(self, config: ExperimentConfig, seed: int | None = None):
        super().__init__(config, seed)
        self.gamma = float(self.options.get("gamma", DEFAULT_GAMMA))
        self.n_startup = int(self.options.get("n_startup", DEFAULT_N_STARTUP))
        self.n_candidates = int(self.options.get("n_candidates", DEFAULT_N_CANDIDATES))

    def _next(self) -> Draft | None:
        if self.issued >= self.n_samples:
            return None
        pairs = [(cfg.values, score) for cfg, score in self.history]
        if len(pairs) < max(self.n_startup, 2):
            return Draft(sample_uniform(self.space, self.rng))
        model = TpeModel(self.space, pairs, gamma=self.gamma)
        return Draft(model.propose(self.rng, self.n_candidates))
