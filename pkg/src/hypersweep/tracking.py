"""Persistent experiment history over a single-file SQLite database.

Four tables mirror the run's moving parts: experiment (identity, timing,
config, status), user, resource, and job (per-job config, score, status,
timing).  Every transition is written through and committed immediately:
training time dwarfs the per-job write cost, and a killed process must
lose nothing that was recorded.
"""

from __future__ import annotations

import csv
import getpass
import io
import json
import sqlite3
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import StoreError
from .space import parse_experiment_config

SCHEMA_VERSION = 1

_SCHEMA = """
CREATE TABLE IF NOT EXISTS meta (
    key TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS user (
    uid INTEGER PRIMARY KEY AUTOINCREMENT,
    username TEXT NOT NULL UNIQUE
);
CREATE TABLE IF NOT EXISTS experiment (
    eid INTEGER PRIMARY KEY AUTOINCREMENT,
    uid INTEGER NOT NULL REFERENCES user(uid),
    start_time INTEGER,
    end_time INTEGER,
    status TEXT NOT NULL,
    exp_config TEXT NOT NULL,
    control TEXT
);
CREATE TABLE IF NOT EXISTS resource (
    rid INTEGER PRIMARY KEY,
    rtype TEXT NOT NULL,
    locator TEXT NOT NULL,
    status TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS job (
    eid INTEGER NOT NULL REFERENCES experiment(eid),
    jid INTEGER NOT NULL,
    job_config TEXT NOT NULL,
    score REAL,
    status TEXT NOT NULL,
    start_time INTEGER,
    end_time INTEGER,
    rid INTEGER REFERENCES resource(rid),
    aux TEXT,
    PRIMARY KEY (eid, jid)
);
"""

TERMINAL_JOB_STATUSES = ("finished", "failed", "killed")


def _now_ms() -> int:
    return int(time.time() * 1000)


@dataclass(frozen=True)
class ExperimentRecord:
    eid: int
    uid: int
    username: str
    start_time: int | None
    end_time: int | None
    status: str
    exp_config: str
    control: str | None


@dataclass(frozen=True)
class JobRecord:
    eid: int
    jid: int
    job_config: str
    score: float | None
    status: str
    start_time: int | None
    end_time: int | None
    rid: int | None
    aux: str | None


class Store:
    """Single-writer store; reads may happen concurrently from other connections."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        try:
            self._conn = sqlite3.connect(self.path, check_same_thread=False)
        except sqlite3.OperationalError as exc:
            raise StoreError(f"cannot open store at {self.path}: {exc}") from exc
        self._lock = threading.RLock()
        self._conn.execute("PRAGMA foreign_keys = ON")
        self._conn.execute("PRAGMA busy_timeout = 5000")
        try:
            self._conn.execute("PRAGMA journal_mode = WAL")
            self._conn.execute("PRAGMA synchronous = FULL")
        except sqlite3.DatabaseError as exc:
            raise StoreError(f"store at {self.path} is unusable: {exc}") from exc
        self._init_schema()

    def _init_schema(self) -> None:
        with self._lock, self._conn:
            try:
                self._conn.executescript(_SCHEMA)
            except sqlite3.DatabaseError as exc:
                raise StoreError(f"cannot initialize schema: {exc}") from exc
            self._conn.execute(
                "INSERT OR IGNORE INTO meta (key, value) VALUES ('schema_version', ?)",
                (str(SCHEMA_VERSION),),
            )
            row = self._conn.execute(
                "SELECT value FROM meta WHERE key = 'schema_version'"
            ).fetchone()
            if int(row[0]) != SCHEMA_VERSION:
                raise StoreError(
                    f"schema version mismatch: store has {row[0]}, "
                    f"this build expects {SCHEMA_VERSION}"
                )

    def close(self) -> None:
        self._conn.close()

    # -- users -------------------------------------------------------------------

    def ensure_user(self, username: str | None = None) -> int:
        username = username or getpass.getuser()
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT OR IGNORE INTO user (username) VALUES (?)", (username,)
            )
            return self._conn.execute(
                "SELECT uid FROM user WHERE username = ?", (username,)
            ).fetchone()[0]

    # -- experiments ----------------------------------------------------------------

    def create_experiment(self, exp_config: str, username: str | None = None) -> int:
        uid = self.ensure_user(username)
        with self._lock, self._conn:
            cur = self._conn.execute(
                "INSERT INTO experiment (uid, status, exp_config) VALUES (?, 'created', ?)",
                (uid, exp_config),
            )
            return cur.lastrowid

    def start_experiment(self, eid: int) -> None:
        self._require_experiment(eid)
        with self._lock, self._conn:
            self._conn.execute(
                "UPDATE experiment SET status = 'running', start_time = ? WHERE eid = ?",
                (_now_ms(), eid),
            )

    def finish_experiment(self, eid: int, status: str) -> None:
        self._require_experiment(eid)
        with self._lock, self._conn:
            self._conn.execute(
                "UPDATE experiment SET status = ?, end_time = ? WHERE eid = ?",
                (status, _now_ms(), eid),
            )

    def set_control(self, eid: int, control: str | None) -> None:
        self._require_experiment(eid)
        with self._lock, self._conn:
            self._conn.execute(
                "UPDATE experiment SET control = ? WHERE eid = ?", (control, eid)
            )

    def get_control(self, eid: int) -> str | None:
        row = self._conn.execute(
            "SELECT control FROM experiment WHERE eid = ?", (eid,)
        ).fetchone()
        return row[0] if row else None

    def experiment(self, eid: int) -> ExperimentRecord:
        row = self._conn.execute(
            "SELECT e.eid, e.uid, u.username, e.start_time, e.end_time, e.status,"
            " e.exp_config, e.control FROM experiment e JOIN user u ON u.uid = e.uid"
            " WHERE e.eid = ?",
            (eid,),
        ).fetchone()
        if row is None:
            raise StoreError(f"unknown experiment {eid}")
        return ExperimentRecord(*row)

    def experiments(self) -> list[ExperimentRecord]:
        rows = self._conn.execute(
            "SELECT e.eid, e.uid, u.username, e.start_time, e.end_time, e.status,"
            " e.exp_config, e.control FROM experiment e JOIN user u ON u.uid = e.uid"
            " ORDER BY e.eid"
        ).fetchall()
        return [ExperimentRecord(*r) for r in rows]

    def _require_experiment(self, eid: int) -> None:
        if self._conn.execute(
            "SELECT 1 FROM experiment WHERE eid = ?", (eid,)
        ).fetchone() is None:
            raise StoreError(f"unknown experiment {eid}")

    # -- resources --------------------------------------------------------------------

    def record_resource(self, rid: int, rtype: str, locator: str, status: str) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT INTO resource (rid, rtype, locator, status) VALUES (?, ?, ?, ?)"
                " ON CONFLICT(rid) DO UPDATE SET rtype = ?, locator = ?, status = ?",
                (rid, rtype, locator, status, rtype, locator, status),
            )

    # -- jobs -------------------------------------------------------------------------

    def record_job_start(
        self, eid: int, jid: int, job_config: str, rid: int | None
    ) -> None:
        try:
            with self._lock, self._conn:
                self._conn.execute(
                    "INSERT INTO job (eid, jid, job_config, status, start_time, rid)"
                    " VALUES (?, ?, ?, 'running', ?, ?)",
                    (eid, jid, job_config, _now_ms(), rid),
                )
        except sqlite3.IntegrityError as exc:
            raise StoreError(
                f"job start rejected for experiment {eid} job {jid}: {exc}"
            ) from exc

    def record_job_end(
        self,
        eid: int,
        jid: int,
        status: str,
        score: float | None = None,
        aux: str | None = None,
    ) -> None:
        if status not in TERMINAL_JOB_STATUSES:
            raise StoreError(f"not a terminal job status: {status!r}")
        with self._lock, self._conn:
            row = self._conn.execute(
                "SELECT status FROM job WHERE eid = ? AND jid = ?", (eid, jid)
            ).fetchone()
            if row is None:
                raise StoreError(f"unknown job ({eid}, {jid})")
            if row[0] in TERMINAL_JOB_STATUSES:
                raise StoreError(
                    f"duplicate terminal transition for job ({eid}, {jid}):"
                    f" already {row[0]}"
                )
            self._conn.execute(
                "UPDATE job SET status = ?, score = ?, end_time = ?, aux = ?"
                " WHERE eid = ? AND jid = ?",
                (status, score, _now_ms(), aux, eid, jid),
            )

    def jobs(self, eid: int) -> list[JobRecord]:
        rows = self._conn.execute(
            "SELECT eid, jid, job_config, score, status, start_time, end_time, rid, aux"
            " FROM job WHERE eid = ? ORDER BY jid",
            (eid,),
        ).fetchall()
        return [JobRecord(*r) for r in rows]

    # -- history export ------------------------------------------------------------------

    def export_history(self, eid: int, fmt: str) -> str:
        """CSV (one row per job) or JSON (best-so-far series) history export."""
        if fmt == "csv":
            return self.export_csv(eid)
        if fmt == "json":
            return json.dumps(self.export_series_doc(eid), indent=2)
        raise StoreError(f"unknown export format {fmt!r}; use 'csv' or 'json'")

    def _space_and_target(self, eid: int):
        rec = self.experiment(eid)
        cfg = parse_experiment_config(rec.exp_config)
        return cfg.space, cfg.target

    def export_csv(self, eid: int) -> str:
        space, _ = self._space_and_target(eid)
        jobs = self.jobs(eid)
        param_names = list(space.names)
        extra: set[str] = set()
        docs: dict[int, dict[str, Any]] = {}
        for job in jobs:
            doc = json.loads(job.job_config)
            docs[job.jid] = doc
            extra.update(
                k
                for k in doc
                if k not in param_names and k not in ("job_id", "n_iterations")
            )
        columns = (
            ["jid"]
            + param_names
            + ["n_iterations"]
            + sorted(extra)
            + ["score", "status", "start_time", "end_time"]
        )
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for job in jobs:
            doc = docs[job.jid]
            row: list[Any] = [job.jid]
            row += [doc.get(name, "") for name in param_names]
            row.append(doc.get("n_iterations", ""))
            row += [doc.get(k, "") for k in sorted(extra)]
            row += [
                job.score if job.score is not None else "",
                job.status,
                job.start_time if job.start_time is not None else "",
                job.end_time if job.end_time is not None else "",
            ]
            writer.writerow(row)
        return buf.getvalue()

    def export_series(self, eid: int) -> list[tuple[int, float]]:
        """(completion index, best-so-far score) over finished jobs by end time."""
        _, target = self._space_and_target(eid)
        finished = [
            j for j in self.jobs(eid) if j.status == "finished" and j.score is not None
        ]
        finished.sort(key=lambda j: (j.end_time if j.end_time is not None else 0, j.jid))
        series: list[tuple[int, float]] = []
        best: float | None = None
        for i, job in enumerate(finished, start=1):
            if best is None:
                best = job.score
            elif target == "max":
                best = max(best, job.score)
            else:
                best = min(best, job.score)
            series.append((i, best))
        return series

    def export_series_doc(self, eid: int) -> dict[str, Any]:
        _, target = self._space_and_target(eid)
        return {
            "eid": eid,
            "target": target,
            "best_so_far": [[i, s] for i, s in self.export_series(eid)],
        }


def open_store(path: str | Path) -> Store:
    """Open (creating and stamping if absent) the tracking database."""
    return Store(path)
