"""Proposer contract and registry.

Every search algorithm implements the same two-call interface: ``get_param()``
hands out the next job configuration (or asks the caller to wait / signals
completion) and ``update()`` feeds a finished job's result back in.  The
orchestrator serializes all calls on one owner, so proposers need no
internal locking.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..errors import ProposerError
from ..space import ExperimentConfig, JobConfig, JobResult, SearchSpace


@dataclass(frozen=True)
class Proposal:
    """Outcome of one get_param() call: a config, a wait request, or done."""

    kind: str  # "config" | "wait" | "done"
    config: JobConfig | None = None

    @property
    def is_config(self) -> bool:
        return self.kind == "config"


WAIT = Proposal("wait")
DONE = Proposal("done")


@dataclass
class Draft:
    """Subclass-internal precursor of a JobConfig; the base class assigns job_id."""

    values: dict[str, Any]
    n_iterations: float | None = None
    aux: dict[str, Any] = field(default_factory=dict)


class Proposer(ABC):
    """Shared bookkeeping for all proposers.

    Subclasses implement ``_next()`` returning a ``Draft``, ``WAIT``, or
    ``None`` (budget exhausted).  job_ids are assigned here, consecutively
    from 0, so deterministic replays stay aligned.
    """

    #: RNG family used for all stochastic proposers; recorded seeds replay
    #: only against the same family/version.
    RNG_FAMILY = "numpy-pcg64"

    def __init__(self, config: ExperimentConfig, seed: int | None = None):
        self.space: SearchSpace = config.space
        self.n_samples: int = config.n_samples
        self.options = dict(config.proposer_options)
        self.rng = np.random.default_rng(seed)
        self.history: list[tuple[JobConfig, float]] = []
        self.n_failed = 0
        self._issued: dict[int, JobConfig] = {}
        self._resolved: set[int] = set()
        self._next_job_id = 0
        self._done = False

    # -- contract ----------------------------------------------------------

    def get_param(self) -> Proposal:
        if self._done:
            return DONE
        nxt = self._next()
        if nxt is None:
            self._done = True
            return DONE
        if isinstance(nxt, Proposal):
            if nxt.kind != "wait":
                raise ProposerError("_next() may only return Draft, WAIT or None")
            return WAIT
        cfg = JobConfig(
            values=nxt.values,
            job_id=self._next_job_id,
            n_iterations=nxt.n_iterations,
            aux=nxt.aux,
        )
        self._next_job_id += 1
        self._issued[cfg.job_id] = cfg
        self._on_issued(cfg)
        return Proposal("config", cfg)

    def update(self, result: JobResult) -> None:
        jid = result.job_id
        if jid not in self._issued:
            raise ProposerError(f"update for job_id {jid} that was never issued")
        if jid in self._resolved:
            raise ProposerError(f"duplicate update for job_id {jid}")
        self._resolved.add(jid)
        cfg = self._issued[jid]
        if result.status == "finished":
            self.history.append((cfg, result.score))
        else:
            self.n_failed += 1
        self._on_result(cfg, result)

    def finished(self) -> bool:
        """True iff this proposer will never emit another config."""
        return self._done or self._exhausted()

    # -- bookkeeping accessors ----------------------------------------------

    @property
    def issued(self) -> int:
        return self._next_job_id

    @property
    def pending(self) -> int:
        return self._next_job_id - len(self._resolved)

    def config_for(self, job_id: int) -> JobConfig:
        return self._issued[job_id]

    # -- subclass hooks ------------------------------------------------------

    @abstractmethod
    def _next(self) -> Draft | Proposal | None: ...

    def _exhausted(self) -> bool:
        return self.issued >= self.n_samples

    def _on_issued(self, cfg: JobConfig) -> None:
        pass

    def _on_result(self, cfg: JobConfig, result: JobResult) -> None:
        pass


def create_proposer(config: ExperimentConfig, seed: int | None = None) -> Proposer:
    """Instantiate the proposer named in ``config``.

    New algorithms plug in by extending :class:`Proposer` and adding an entry
    here (plus an options whitelist in :mod:`hypersweep.space`).
    """
    from .bandit import BohbProposer, HyperBandProposer
    from .gp import GpEiProposer
    from .sequence import GridProposer, RandomProposer
    from .tpe import TpeProposer

    classes = {
        "random": RandomProposer,
        "grid": GridProposer,
        "gp_ei": GpEiProposer,
        "tpe": TpeProposer,
        "hyperband": HyperBandProposer,
        "bohb": BohbProposer,
    }
    if seed is None:
        seed = config.proposer_options.get("random_seed")
    return classes[config.proposer](config, seed)


__all__ = [
    "DONE",
    "WAIT",
    "Draft",
    "Proposal",
    "Proposer",
    "create_proposer",
]
