"""Resource pool and job execution.

The pool tracks typed slots (cpu, gpu, node, passive) with atomic
allocation.  The runner serializes the job config to a per-job workspace,
launches the user script as a subprocess (GPU slots get
CUDA_VISIBLE_DEVICES, node slots run through a remote shell, passive slots
wait for an externally supplied result file), parses the stdout protocol
and fires the completion callback exactly once per job.
"""

from __future__ import annotations

import json
import logging
import math
import os
import subprocess
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from .errors import EnvFileError, ProtocolError, ResourceError
from .protocol import parse_result_line
from .space import RESOURCE_TYPES, JobConfig, JobResult, SearchSpace, job_config_save

logger = logging.getLogger(__name__)

PASSIVE_RESULT_FILENAME = "result.txt"
_PASSIVE_POLL_S = 0.05


@dataclass
class ResourceSlot:
    rid: int
    rtype: str
    locator: str
    status: str = "free"  # free | busy | disabled


class ResourcePool:
    """Thread-safe slot table; allocation marks a slot busy atomically."""

    def __init__(
        self,
        slots: Sequence[ResourceSlot],
        on_transition: Callable[[ResourceSlot], None] | None = None,
    ):
        self._slots = {s.rid: s for s in slots}
        if len(self._slots) != len(slots):
            raise ResourceError("duplicate resource ids in pool")
        self._lock = threading.Lock()
        self._on_transition = on_transition

    def get_available(self, rtype: str) -> ResourceSlot | None:
        if rtype not in RESOURCE_TYPES:
            raise ResourceError(f"unknown resource type {rtype!r}")
        with self._lock:
            for slot in self._slots.values():
                if slot.rtype == rtype and slot.status == "free":
                    slot.status = "busy"
                    self._notify(slot)
                    return slot
            return None

    def release(self, rid: int) -> None:
        with self._lock:
            slot = self._slots[rid]
            if slot.status != "busy":
                raise ResourceError(f"release of non-busy slot {rid}")
            slot.status = "free"
            self._notify(slot)

    def disable(self, rid: int) -> None:
        with self._lock:
            slot = self._slots[rid]
            slot.status = "disabled"
            self._notify(slot)

    def count(self, rtype: str | None = None, status: str | None = None) -> int:
        with self._lock:
            return sum(
                1
                for s in self._slots.values()
                if (rtype is None or s.rtype == rtype)
                and (status is None or s.status == status)
            )

    def slots(self) -> list[ResourceSlot]:
        with self._lock:
            return [ResourceSlot(s.rid, s.rtype, s.locator, s.status) for s in self._slots.values()]

    def _notify(self, slot: ResourceSlot) -> None:
        if self._on_transition is not None:
            self._on_transition(slot)


@dataclass
class RunningJob:
    job_id: int
    rid: int
    script: str
    config_path: Path
    stdout_path: Path
    stderr_path: Path
    start_time: float
    timeout: float | None = None
    proc: subprocess.Popen | None = None
    kill_requested: bool = False
    result: JobResult | None = None
    thread: threading.Thread | None = None


class JobRunner:
    """Launches jobs on allocated slots and reports terminal results.

    The slot is released before the completion callback fires, so a caller
    blocking on completions can immediately reuse it.
    """

    def __init__(
        self,
        pool: ResourcePool,
        workdir: Path | str,
        eid: int,
        space: SearchSpace | None = None,
        timeout: float | None = None,
        remote_shell: Sequence[str] = ("ssh",),
        remote_copy: Sequence[str] = ("scp",),
    ):
        self.pool = pool
        self.workdir = Path(workdir)
        self.eid = eid
        self.space = space
        self.timeout = timeout
        self.remote_shell = list(remote_shell)
        self.remote_copy = list(remote_copy)
        self._jobs: dict[int, RunningJob] = {}
        self._lock = threading.Lock()
        self._active = 0
        self.max_concurrent = 0

    def run(
        self,
        job: JobConfig,
        slot: ResourceSlot,
        script: str,
        on_complete: Callable[[JobResult], None],
    ) -> RunningJob:
        jobdir = self.workdir / f"e{self.eid}" / f"j{job.job_id:05d}"
        jobdir.mkdir(parents=True, exist_ok=True)
        config_path = jobdir / "config.json"
        config_path.write_text(job_config_save(job, self.space), encoding="utf-8")
        rj = RunningJob(
            job_id=job.job_id,
            rid=slot.rid,
            script=script,
            config_path=config_path,
            stdout_path=jobdir / "stdout.log",
            stderr_path=jobdir / "stderr.log",
            start_time=time.monotonic(),
            timeout=self.timeout,
        )
        with self._lock:
            self._jobs[job.job_id] = rj
            self._active += 1
            self.max_concurrent = max(self.max_concurrent, self._active)
        rj.thread = threading.Thread(
            target=self._execute,
            args=(rj, slot, on_complete),
            name=f"job-{self.eid}-{job.job_id}",
            daemon=True,
        )
        rj.thread.start()
        return rj

    def kill(self, job_id: int) -> None:
        with self._lock:
            rj = self._jobs.get(job_id)
        if rj is None:
            return
        rj.kill_requested = True
        if rj.proc is not None and rj.proc.poll() is None:
            rj.proc.kill()

    def kill_all(self) -> None:
        with self._lock:
            jids = list(self._jobs)
        for jid in jids:
            self.kill(jid)

    def wait_all(self, timeout: float | None = None) -> None:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._lock:
            threads = [rj.thread for rj in self._jobs.values() if rj.thread]
        for t in threads:
            remaining = None if deadline is None else max(0.0, deadline - time.monotonic())
            t.join(remaining)

    # -- execution ----------------------------------------------------------------

    def _execute(self, rj: RunningJob, slot: ResourceSlot, on_complete) -> None:
        try:
            if slot.rtype == "passive":
                status, score, aux = self._await_passive(rj)
            else:
                status, score, aux = self._run_process(rj, slot)
        except Exception:  # crash isolation: a job failure never kills the loop
            logger.exception("job %s raised during execution", rj.job_id)
            status, score, aux = "failed", None, None
        wall = time.monotonic() - rj.start_time
        result = JobResult(
            job_id=rj.job_id,
            status=status,
            score=score if status == "finished" else None,
            aux_string=aux,
            wall_time=wall,
        )
        rj.result = result
        with self._lock:
            self._active -= 1
            self._jobs.pop(rj.job_id, None)
        self.pool.release(rj.rid)
        on_complete(result)

    def _command_and_env(self, rj: RunningJob, slot: ResourceSlot):
        env = os.environ.copy()
        if slot.rtype == "gpu":
            env["CUDA_VISIBLE_DEVICES"] = slot.locator
            return [rj.script, str(rj.config_path)], env
        if slot.rtype == "node":
            remote_path = f"/tmp/hypersweep_e{self.eid}_j{rj.job_id}.json"
            copy_cmd = self.remote_copy + [
                str(rj.config_path),
                f"{slot.locator}:{remote_path}",
            ]
            subprocess.run(copy_cmd, check=True, capture_output=True, timeout=60)
            return self.remote_shell + [slot.locator, f"{rj.script} {remote_path}"], env
        return [rj.script, str(rj.config_path)], env

    def _run_process(self, rj: RunningJob, slot: ResourceSlot):
        try:
            cmd, env = self._command_and_env(rj, slot)
        except (OSError, subprocess.SubprocessError) as exc:
            logger.warning("job %s: remote staging failed: %s", rj.job_id, exc)
            return "failed", None, None
        try:
            with open(rj.stdout_path, "wb") as out, open(rj.stderr_path, "wb") as err:
                rj.proc = subprocess.Popen(cmd, stdout=out, stderr=err, env=env)
        except OSError as exc:
            logger.warning("job %s: launch failed: %s", rj.job_id, exc)
            return "failed", None, None
        try:
            returncode = rj.proc.wait(timeout=rj.timeout)
        except subprocess.TimeoutExpired:
            rj.proc.kill()
            rj.proc.wait()
            return "killed", None, None
        if rj.kill_requested:
            return "killed", None, None
        if returncode != 0:
            return "failed", None, None
        return self._parse_output(rj.stdout_path.read_text(encoding="utf-8", errors="replace"), rj)

    def _await_passive(self, rj: RunningJob):
        """Poll the job dir for an externally supplied result file."""
        result_path = rj.config_path.parent / PASSIVE_RESULT_FILENAME
        logger.info(
            "job %s: passive slot; submit a result line to %s", rj.job_id, result_path
        )
        deadline = None if rj.timeout is None else rj.start_time + rj.timeout
        seen = False
        while True:
            if rj.kill_requested:
                return "killed", None, None
            if deadline is not None and time.monotonic() > deadline:
                return "killed", None, None
            if result_path.exists():
                if seen:  # one extra tick so the writer can finish
                    return self._parse_output(
                        result_path.read_text(encoding="utf-8", errors="replace"), rj
                    )
                seen = True
            time.sleep(_PASSIVE_POLL_S)

    @staticmethod
    def _parse_output(text: str, rj: RunningJob):
        try:
            score, aux = parse_result_line(text)
        except ProtocolError:
            logger.warning("job %s: no parseable result line", rj.job_id)
            return "failed", None, None
        if not math.isfinite(score):
            return "failed", None, aux
        return "finished", score, aux


@dataclass(frozen=True)
class Environment:
    """Parsed environment file: the resource pool plus store/workdir locations."""

    resources: tuple[ResourceSlot, ...]
    db_path: str = "hypersweep.db"
    workdir: str = ".hypersweep"
    username: str | None = None
    remote_shell: tuple[str, ...] = ("ssh",)
    remote_copy: tuple[str, ...] = ("scp",)

    def build_pool(self, on_transition=None) -> ResourcePool:
        return ResourcePool(
            [ResourceSlot(s.rid, s.rtype, s.locator) for s in self.resources],
            on_transition=on_transition,
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "resources": [
                    {"type": s.rtype, "locator": s.locator} for s in self.resources
                ],
                "db": self.db_path,
                "workdir": self.workdir,
                **({"username": self.username} if self.username else {}),
                "remote_shell": list(self.remote_shell),
                "remote_copy": list(self.remote_copy),
            },
            indent=2,
        )


def parse_environment(text: str) -> Environment:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise EnvFileError(f"environment file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise EnvFileError("environment file must be a JSON object")
    raw = doc.get("resources")
    if not isinstance(raw, list) or not raw:
        raise EnvFileError("environment file needs a non-empty 'resources' list")
    slots = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict) or "type" not in entry:
            raise EnvFileError(f"resource entry {i} must be an object with a 'type'")
        rtype = entry["type"]
        if rtype not in RESOURCE_TYPES:
            raise EnvFileError(
                f"resource entry {i}: unknown type {rtype!r}; valid: {RESOURCE_TYPES}"
            )
        slots.append(
            ResourceSlot(rid=i, rtype=rtype, locator=str(entry.get("locator", i)))
        )
    return Environment(
        resources=tuple(slots),
        db_path=str(doc.get("db", "hypersweep.db")),
        workdir=str(doc.get("workdir", ".hypersweep")),
        username=doc.get("username"),
        remote_shell=tuple(doc.get("remote_shell", ("ssh",))),
        remote_copy=tuple(doc.get("remote_copy", ("scp",))),
    )


def load_environment(path: str | Path) -> Environment:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise EnvFileError(f"cannot read environment file {path}: {exc}") from exc
    return parse_environment(text)
