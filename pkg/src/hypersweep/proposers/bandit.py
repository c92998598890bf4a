"""Budget-allocating proposers: HyperBand and BOHB.

Rounds inside a bracket are synchronization barriers: the proposer answers
WAIT until every job of the current round has a terminal result, then
promotes the top 1/eta fraction (ties broken by lower job_id) to eta times
the budget.  Promoted configs are re-issued under a fresh job_id with the
previous round's job_id in aux["resume_from"] so scripts can restore
checkpoints; scripts that ignore it simply retrain from scratch.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable

from ..errors import ConfigError
from ..space import ExperimentConfig, JobConfig, JobResult
from . import WAIT, Draft, Proposal, Proposer
from .encoding import sample_uniform
from .tpe import DEFAULT_GAMMA, DEFAULT_N_CANDIDATES, TpeModel

DEFAULT_ETA = 3
DEFAULT_MIN_BUDGET = 1
DEFAULT_RHO = 1.0 / 3.0


@dataclass(frozen=True)
class Round:
    n_configs: int
    budget: int


@dataclass(frozen=True)
class Bracket:
    s: int
    rounds: tuple[Round, ...]

    def total_budget(self) -> int:
        return sum(r.n_configs * r.budget for r in self.rounds)


@dataclass(frozen=True)
class BracketPlan:
    max_budget: int
    eta: int
    min_budget: int
    s_max: int
    brackets: tuple[Bracket, ...]

    def total_configs(self) -> int:
        return sum(b.rounds[0].n_configs for b in self.brackets)


def hyperband_plan(
    max_budget: int, eta: int = DEFAULT_ETA, min_budget: int = DEFAULT_MIN_BUDGET
) -> BracketPlan:
    """Deterministic bracket table for successive halving with rate eta.

    Bracket s starts with ceil((s_max+1)/(s+1) * eta^s) configs at budget
    max_budget * eta^(-s); budgets grow by eta per round while survivor
    counts shrink by iterated floor division.  Budgets are rounded to whole
    epochs (exact whenever max_budget is min_budget times a power of eta).
    """
    if max_budget < 1:
        raise ConfigError("bad-value", f"max_budget must be >= 1, got {max_budget}")
    if eta < 2:
        raise ConfigError("bad-value", f"eta must be >= 2, got {eta}")
    if not 1 <= min_budget <= max_budget:
        raise ConfigError(
            "bad-value", f"min_budget must be in [1, max_budget], got {min_budget}"
        )
    max_budget, eta, min_budget = int(max_budget), int(eta), int(min_budget)
    s_max = 0
    while min_budget * eta ** (s_max + 1) <= max_budget:
        s_max += 1
    brackets = []
    for s in range(s_max, -1, -1):
        n = -(-((s_max + 1) * eta**s) // (s + 1))  # ceil division
        rounds = []
        for i in range(s + 1):
            budget = max(min_budget, round(max_budget / eta ** (s - i)))
            rounds.append(Round(n_configs=n, budget=budget))
            n //= eta
        brackets.append(Bracket(s=s, rounds=tuple(rounds)))
    return BracketPlan(
        max_budget=max_budget,
        eta=eta,
        min_budget=min_budget,
        s_max=s_max,
        brackets=tuple(brackets),
    )


def select_promotions(entries: Iterable[tuple[int, float]], k: int) -> list[int]:
    """job_ids of the k lowest scores; ties broken by lower job_id."""
    ranked = sorted(entries, key=lambda e: (e[1], e[0]))
    return [jid for jid, _ in ranked[: max(0, k)]]


@dataclass
class _RoundSlot:
    values: dict[str, Any]
    score: float | None = None
    failed: bool = False

    @property
    def resolved(self) -> bool:
        return self.failed or self.score is not None


class SuccessiveHalvingProposer(Proposer):
    """Shared bracket walker; subclasses decide how new round-0 configs are drawn."""

    def __init__(self, config: ExperimentConfig, seed: int | None = None):
        super().__init__(config, seed)
        self.eta = int(self.options.get("eta", DEFAULT_ETA))
        self.plan = hyperband_plan(
            int(self.options["max_budget"]),
            eta=self.eta,
            min_budget=int(self.options.get("min_budget", DEFAULT_MIN_BUDGET)),
        )
        self.budget_issued: dict[int, int] = {}
        self.n_configs_started = 0
        self._bracket_i = -1
        self._rounds: list[Round] = []
        self._round_i = 0
        self._queue: deque[tuple[dict[str, Any] | None, int | None]] = deque()
        self._slots: dict[int, _RoundSlot] = {}
        self._all_done = not self._enter_next_bracket()

    # -- proposer contract ----------------------------------------------------

    def _next(self) -> Draft | Proposal | None:
        while True:
            if self._all_done:
                return None
            if self._queue:
                values, resume_from = self._queue.popleft()
                if values is None:
                    values = self._new_values()
                aux = {} if resume_from is None else {"resume_from": resume_from}
                return Draft(
                    dict(values),
                    n_iterations=self._rounds[self._round_i].budget,
                    aux=aux,
                )
            if any(not slot.resolved for slot in self._slots.values()):
                return WAIT
            if not self._advance():
                self._all_done = True
                return None

    def _exhausted(self) -> bool:
        return self._all_done

    def _on_issued(self, cfg: JobConfig) -> None:
        self._slots[cfg.job_id] = _RoundSlot(values=dict(cfg.values))
        self.budget_issued[self._bracket_i] = self.budget_issued.get(
            self._bracket_i, 0
        ) + int(cfg.n_iterations)

    def _on_result(self, cfg: JobConfig, result: JobResult) -> None:
        slot = self._slots.get(cfg.job_id)
        if slot is None:
            return
        if result.status == "finished":
            slot.score = result.score
        else:
            slot.failed = True

    # -- bracket walking --------------------------------------------------------

    def _advance(self) -> bool:
        """Current round is fully resolved; promote or move to the next bracket."""
        scored = [
            (jid, slot.score) for jid, slot in self._slots.items() if slot.score is not None
        ]
        if self._round_i + 1 < len(self._rounds):
            self._round_i += 1
            k = self._rounds[self._round_i].n_configs
            promoted = select_promotions(scored, k)
            if promoted:
                self._queue = deque(
                    (dict(self._slots[jid].values), jid) for jid in promoted
                )
                self._slots = {}
                return True
            # every config of the round failed; nothing to carry forward
        return self._enter_next_bracket()

    def _enter_next_bracket(self) -> bool:
        while True:
            self._bracket_i += 1
            if self._bracket_i >= len(self.plan.brackets):
                return False
            planned = self.plan.brackets[self._bracket_i]
            n0 = min(
                planned.rounds[0].n_configs, self.n_samples - self.n_configs_started
            )
            if n0 < 1:
                continue  # n_samples cap hit: truncate remaining brackets
            rounds = []
            n = n0
            for planned_round in planned.rounds:
                if n < 1:
                    break
                rounds.append(Round(n_configs=n, budget=planned_round.budget))
                n //= self.eta
            self._rounds = rounds
            self._round_i = 0
            self._slots = {}
            self._queue = deque((None, None) for _ in range(n0))
            self.n_configs_started += n0
            return True

    def _new_values(self) -> dict[str, Any]:
        raise NotImplementedError


class HyperBandProposer(SuccessiveHalvingProposer):
    """HyperBand: round-0 configs are uniform random."""

    def _new_values(self) -> dict[str, Any]:
        return sample_uniform(self.space, self.rng)


class BohbProposer(SuccessiveHalvingProposer):
    """HyperBand scheduling with TPE-modeled round-0 configs.

    The model is fit on the single largest budget level holding at least
    min_points (default d+2) completed results; with probability rho, or
    when no level qualifies, the draw falls back to uniform random.
    """

    def __init__(self, config: ExperimentConfig, seed: int | None = None):
        super().__init__(config, seed)
        self.rho = float(self.options.get("rho", DEFAULT_RHO))
        self.min_points = int(
            self.options.get("min_points", len(self.space) + 2)
        )
        self.gamma = float(self.options.get("gamma", DEFAULT_GAMMA))
        self.n_candidates = int(self.options.get("n_candidates", DEFAULT_N_CANDIDATES))
        self._completed: list[tuple[dict[str, Any], float, int]] = []

    def _on_result(self, cfg: JobConfig, result: JobResult) -> None:
        super()._on_result(cfg, result)
        if result.status == "finished":
            self._completed.append(
                (dict(cfg.values), result.score, int(cfg.n_iterations))
            )

    def model_level(self) -> tuple[int, list[tuple[dict[str, Any], float]]] | None:
        """Largest budget level with >= min_points completed results, if any."""
        by_budget: dict[int, list[tuple[dict[str, Any], float]]] = {}
        for values, score, budget in self._completed:
            by_budget.setdefault(budget, []).append((values, score))
        qualifying = [
            b for b, pairs in by_budget.items() if len(pairs) >= max(self.min_points, 2)
        ]
        if not qualifying:
            return None
        level = max(qualifying)
        return level, by_budget[level]

    def _new_values(self) -> dict[str, Any]:
        if self.rho > 0 and self.rng.random() < self.rho:
            return sample_uniform(self.space, self.rng)
        level = self.model_level()
        if level is None:
            return sample_uniform(self.space, self.rng)
        model = TpeModel(self.space, level[1], gamma=self.gamma)
        return model.propose(self.rng, self.n_candidates)
