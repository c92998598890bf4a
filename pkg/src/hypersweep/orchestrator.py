"""The experiment main loop.

Wires proposer, resource pool, job runner, and tracking store together:
acquire a free slot first, then ask the proposer for values, launch, and
feed every completion back into the proposer and the store.  Completions
arrive on worker threads but are funneled through a single queue consumed
here, so proposer state never needs locking.  On Done the loop drains
in-flight jobs before finishing.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ProposerError, ResourceError, StoreError
from .proposers import Proposer, create_proposer
from .resources import Environment, JobRunner, ResourcePool
from .space import ExperimentConfig, JobResult, job_config_save, parse_experiment_config
from .tracking import Store

logger = logging.getLogger(__name__)

_STOP_POLL_S = 0.2


@dataclass
class ExperimentSummary:
    eid: int
    status: str
    n_issued: int = 0
    n_finished: int = 0
    n_failed: int = 0
    n_killed: int = 0
    n_interrupted: int = 0
    best_job_id: int | None = None
    best_score: float | None = None
    best_values: dict[str, Any] = field(default_factory=dict)
    wall_time: float = 0.0
    total_iterations: float = 0.0
    max_parallel: int = 0


class Experiment:
    """One live experiment run; owns the proposer and serializes its calls."""

    def __init__(
        self,
        config: ExperimentConfig,
        env: Environment,
        store: Store,
        seed: int | None = None,
    ):
        self.config = config
        self.env = env
        self.store = store
        self.seed = seed if seed is not None else config.proposer_options.get("random_seed")
        self._stop_mode: str | None = None
        self._stop_lock = threading.Lock()
        self._best_key: float | None = None
        self.eid: int | None = None
        self.proposer: Proposer | None = None

    # -- control -------------------------------------------------------------

    def stop(self, kill: bool = False) -> None:
        with self._stop_lock:
            self._stop_mode = "kill" if kill else "drain"

    def _stop_requested(self) -> str | None:
        with self._stop_lock:
            if self._stop_mode:
                return self._stop_mode
        control = self.store.get_control(self.eid) if self.eid is not None else None
        if control in ("stop-drain", "stop-kill"):
            return "kill" if control == "stop-kill" else "drain"
        return None

    # -- run ------------------------------------------------------------------

    def run(self) -> ExperimentSummary:
        config = self.config
        stored_config = self._config_with_seed()
        self.eid = self.store.create_experiment(stored_config, username=self.env.username)
        eid = self.eid
        pool = self.env.build_pool(
            on_transition=lambda s: self.store.record_resource(
                s.rid, s.rtype, s.locator, s.status
            )
        )
        for slot in pool.slots():
            self.store.record_resource(slot.rid, slot.rtype, slot.locator, slot.status)
        if pool.count(config.resource_type) == 0:
            self.store.finish_experiment(eid, "failed")
            raise ResourceError(
                f"no resources of type {config.resource_type!r} in the environment"
            )
        workdir = Path(config.workdir or self.env.workdir)
        runner = JobRunner(
            pool,
            workdir,
            eid,
            space=config.space,
            remote_shell=self.env.remote_shell,
            remote_copy=self.env.remote_copy,
        )
        self.proposer = create_proposer(config, self.seed)
        completions: queue.Queue[JobResult] = queue.Queue()
        in_flight: dict[int, Any] = {}
        summary = ExperimentSummary(eid=eid, status="running")
        self.store.start_experiment(eid)
        t0 = time.monotonic()
        logger.info(
            "experiment %d: proposer=%s script=%s n_samples=%d n_parallel=%d seed=%s",
            eid, config.proposer, config.script, config.n_samples,
            config.n_parallel, self.seed,
        )
        try:
            self._loop(pool, runner, completions, in_flight, summary)
            stop = self._stop_requested()
            if stop == "kill":
                runner.kill_all()
            while in_flight:
                self._consume(completions, in_flight, summary, block=True)
            summary.status = "stopped" if stop else "finished"
        except Exception:
            summary.status = "failed"
            runner.kill_all()
            raise
        finally:
            summary.wall_time = time.monotonic() - t0
            summary.max_parallel = runner.max_concurrent
            try:
                self.store.finish_experiment(eid, summary.status)
            except StoreError:
                logger.exception("experiment %d: could not record final status", eid)
        logger.info(
            "experiment %d: %s best=%s (job %s) finished=%d failed=%d killed=%d",
            eid, summary.status, summary.best_score, summary.best_job_id,
            summary.n_finished, summary.n_failed, summary.n_killed,
        )
        return summary

    def _loop(self, pool, runner, completions, in_flight, summary) -> None:
        config = self.config
        proposer = self.proposer
        while True:
            if self._stop_requested():
                logger.info("experiment %d: stop requested", self.eid)
                return
            if proposer.finished():
                return
            if len(in_flight) >= config.n_parallel:
                self._consume(completions, in_flight, summary, block=True)
                continue
            slot = pool.get_available(config.resource_type)
            if slot is None:
                if not in_flight:
                    raise ResourceError(
                        f"no free {config.resource_type!r} slot and no jobs in flight"
                    )
                self._consume(completions, in_flight, summary, block=True)
                continue
            proposal = proposer.get_param()
            if proposal.kind == "done":
                pool.release(slot.rid)
                return
            if proposal.kind == "wait":
                pool.release(slot.rid)
                if not in_flight:
                    raise ProposerError("proposer asked to wait with no jobs in flight")
                self._consume(completions, in_flight, summary, block=True)
                continue
            cfg = proposal.config
            self.store.record_job_start(
                self.eid, cfg.job_id, job_config_save(cfg, config.space), slot.rid
            )
            runner.run(cfg, slot, config.script, completions.put)
            in_flight[cfg.job_id] = cfg
            summary.n_issued += 1
            if cfg.n_iterations:
                summary.total_iterations += cfg.n_iterations
            logger.info(
                "experiment %d: launched job %d on slot %d%s",
                self.eid, cfg.job_id, slot.rid,
                f" budget={cfg.n_iterations}" if cfg.n_iterations else "",
            )
            while self._consume(completions, in_flight, summary, block=False):
                pass

    def _consume(self, completions, in_flight, summary, block: bool) -> bool:
        try:
            if block:
                result = None
                while result is None:
                    try:
                        result = completions.get(timeout=_STOP_POLL_S)
                    except queue.Empty:
                        if self._stop_requested() == "kill":
                            return False
            else:
                result = completions.get_nowait()
        except queue.Empty:
            return False
        cfg = in_flight.pop(result.job_id)
        normalized = self._normalize(result)
        self.proposer.update(normalized)
        self.store.record_job_end(
            self.eid, result.job_id, result.status, result.score, result.aux_string
        )
        if result.status == "finished":
            summary.n_finished += 1
            key = normalized.score
            if self._best_key is None or key < self._best_key:
                self._best_key = key
                summary.best_score = result.score
                summary.best_job_id = result.job_id
                summary.best_values = dict(cfg.values)
        elif result.status == "killed":
            summary.n_killed += 1
        else:
            summary.n_failed += 1
        logger.info(
            "experiment %d: job %d %s score=%s (%.2fs)",
            self.eid, result.job_id, result.status, result.score, result.wall_time,
        )
        return True

    def _normalize(self, result: JobResult) -> JobResult:
        """Negate scores for target=max so proposers always minimize."""
        if self.config.target == "max" and result.status == "finished":
            return JobResult(
                job_id=result.job_id,
                status=result.status,
                score=-result.score,
                aux_string=result.aux_string,
                wall_time=result.wall_time,
            )
        return result

    def _config_with_seed(self) -> str:
        doc = json.loads(self.config.to_json())
        if self.seed is not None:
            doc.setdefault("proposer_options", {})["random_seed"] = int(self.seed)
        return json.dumps(doc, indent=2)


def run_experiment(
    config_path: str | Path,
    env_path: str | Path,
    seed: int | None = None,
    store: Store | None = None,
) -> ExperimentSummary:
    """Load config and environment files, then run the experiment to completion."""
    from .resources import load_environment

    config = parse_experiment_config(Path(config_path).read_text(encoding="utf-8"))
    env = load_environment(env_path)
    own_store = store is None
    store = store or Store(env.db_path)
    try:
        return Experiment(config, env, store, seed=seed).run()
    finally:
        if own_store:
            store.close()


def stop_experiment(store: Store, eid: int, kill: bool = False) -> None:
    """Request a running experiment to stop (drain in-flight jobs, or kill them)."""
    rec = store.experiment(eid)
    if rec.status != "running":
        raise StoreError(f"experiment {eid} is not running (status: {rec.status})")
    store.set_control(eid, "stop-kill" if kill else "stop-drain")


def summarize(store: Store, eid: int) -> ExperimentSummary:
    """Recompute a summary purely from the tracking store."""
    rec = store.experiment(eid)
    config = parse_experiment_config(rec.exp_config)
    summary = ExperimentSummary(eid=eid, status=rec.status)
    sign = -1.0 if config.target == "max" else 1.0
    best_key = None
    for job in store.jobs(eid):
        summary.n_issued += 1
        doc = json.loads(job.job_config)
        n_iter = doc.get("n_iterations")
        if n_iter:
            summary.total_iterations += n_iter
        if job.status == "finished":
            summary.n_finished += 1
            key = sign * job.score
            if best_key is None or key < best_key:
                best_key = key
                summary.best_score = job.score
                summary.best_job_id = job.jid
                summary.best_values = {
                    k: v for k, v in doc.items() if k in config.space.names
                }
        elif job.status == "failed":
            summary.n_failed += 1
        elif job.status == "killed":
            summary.n_killed += 1
        elif job.status == "running":
            # post-hoc view: a non-terminal row means the job was interrupted
            summary.n_interrupted += 1
    if rec.start_time is not None and rec.end_time is not None:
        summary.wall_time = (rec.end_time - rec.start_time) / 1000.0
    return summary
