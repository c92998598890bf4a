import csv
import io
import json
import signal
import sqlite3
import subprocess
import sys
import time

import pytest

from conftest import make_space_config
from hypersweep.errors import StoreError
from hypersweep.orchestrator import summarize
from hypersweep.tracking import SCHEMA_VERSION, Store, open_store

CONFIG_TEXT = make_space_config(
    [
        {"name": "x", "range": [-5, 10], "type": "float"},
        {"name": "y", "range": [-5, 10], "type": "float"},
    ]
)


def seeded_store(tmp_path):
    store = open_store(tmp_path / "t.db")
    eid = store.create_experiment(CONFIG_TEXT, username="tester")
    store.start_experiment(eid)
    return store, eid


def job_doc(x, y, jid, **extra):
    doc = {"x": x, "y": y, "job_id": jid}
    doc.update(extra)
    return json.dumps(doc)


class TestOpenStore:
    def test_fresh_store_has_version_and_empty_tables(self, tmp_path):
        store = open_store(tmp_path / "a.db")
        assert store.experiments() == []
        row = store._conn.execute(
            "SELECT value FROM meta WHERE key='schema_version'"
        ).fetchone()
        assert row == (str(SCHEMA_VERSION),)
        store.close()

    def test_reopen_preserves_counts(self, tmp_path):
        store, eid = seeded_store(tmp_path)
        store.record_job_start(eid, 0, job_doc(1.0, 1.0, 0), rid=None)
        store.record_job_end(eid, 0, "finished", score=0.0)
        store.close()
        again = open_store(tmp_path / "t.db")
        assert len(again.jobs(eid)) == 1
        assert again.experiment(eid).status == "running"
        again.close()

    def test_future_schema_version_rejected(self, tmp_path):
        path = tmp_path / "future.db"
        store = open_store(path)
        store._conn.execute(
            "UPDATE meta SET value='999' WHERE key='schema_version'"
        )
        store._conn.commit()
        store.close()
        with pytest.raises(StoreError, match="version"):
            open_store(path)

    def test_unusable_path_rejected(self, tmp_path):
        garbage = tmp_path / "not-a-db"
        garbage.write_bytes(b"definitely not sqlite" * 100)
        with pytest.raises(StoreError):
            open_store(garbage)

    def test_unknown_experiment(self, tmp_path):
        store = open_store(tmp_path / "u.db")
        with pytest.raises(StoreError, match="unknown experiment"):
            store.experiment(41)


class TestRecordTransitions:
    def test_finished_score_feeds_summary(self, tmp_path):
        store, eid = seeded_store(tmp_path)
        store.record_job_start(eid, 0, job_doc(1.0, 1.0, 0), rid=None)
        store.record_job_end(eid, 0, "finished", score=0.125)
        summary = summarize(store, eid)
        assert summary.best_score == 0.125
        assert summary.best_job_id == 0

    def test_duplicate_terminal_transition_rejected(self, tmp_path):
        store, eid = seeded_store(tmp_path)
        store.record_job_start(eid, 0, job_doc(1.0, 1.0, 0), rid=None)
        store.record_job_end(eid, 0, "finished", score=0.1)
        with pytest.raises(StoreError, match="duplicate terminal"):
            store.record_job_end(eid, 0, "finished", score=0.2)

    def test_unknown_eid_foreign_key_violation(self, tmp_path):
        store, _ = seeded_store(tmp_path)
        with pytest.raises(StoreError):
            store.record_job_start(999, 0, job_doc(0, 0, 0), rid=None)

    def test_duplicate_job_start_rejected(self, tmp_path):
        store, eid = seeded_store(tmp_path)
        store.record_job_start(eid, 0, job_doc(0, 0, 0), rid=None)
        with pytest.raises(StoreError):
            store.record_job_start(eid, 0, job_doc(0, 0, 0), rid=None)

    def test_resource_upsert(self, tmp_path):
        store, _ = seeded_store(tmp_path)
        store.record_resource(0, "gpu", "0", "free")
        store.record_resource(0, "gpu", "0", "busy")
        row = store._conn.execute("SELECT status FROM resource WHERE rid=0").fetchone()
        assert row == ("busy",)

    def test_control_flag_roundtrip(self, tmp_path):
        store, eid = seeded_store(tmp_path)
        assert store.get_control(eid) is None
        store.set_control(eid, "stop-drain")
        assert store.get_control(eid) == "stop-drain"


class ThreeJobFixture:
    @staticmethod
    def build(tmp_path):
        store, eid = seeded_store(tmp_path)
        scores = [5.0, 2.0, 3.0]
        for jid, score in enumerate(scores):
            store.record_job_start(eid, jid, job_doc(float(jid), 0.0, jid), rid=None)
            time.sleep(0.002)  # end_time ordering matches jid order
            store.record_job_end(eid, jid, "finished", score=score)
        return store, eid


class TestExportHistory:
    def test_csv_rows_and_series(self, tmp_path):
        store, eid = ThreeJobFixture.build(tmp_path)
        text = store.export_history(eid, "csv")
        rows = list(csv.reader(io.StringIO(text)))
        assert rows[0][:4] == ["jid", "x", "y", "n_iterations"]
        assert len(rows) == 4  # header + 3 jobs
        series = store.export_series(eid)
        assert series == [(1, 5.0), (2, 2.0), (3, 2.0)]
        assert all(b >= a2 for (_, a2), (_, b) in zip(series[1:], series))  # nonincreasing

    def test_json_series_document(self, tmp_path):
        store, eid = ThreeJobFixture.build(tmp_path)
        doc = json.loads(store.export_history(eid, "json"))
        assert doc["eid"] == eid
        assert doc["target"] == "min"
        assert doc["best_so_far"] == [[1, 5.0], [2, 2.0], [3, 2.0]]

    def test_heterogeneous_aux_keys_union_columns(self, tmp_path):
        store, eid = seeded_store(tmp_path)
        store.record_job_start(eid, 0, job_doc(0.0, 0.0, 0, stage="warm"), rid=None)
        store.record_job_end(eid, 0, "finished", score=1.0)
        store.record_job_start(
            eid, 1, job_doc(1.0, 1.0, 1, n_iterations=3, resume_from=0), rid=None
        )
        store.record_job_end(eid, 1, "finished", score=2.0)
        rows = list(csv.reader(io.StringIO(store.export_csv(eid))))
        header = rows[0]
        assert header[:4] == ["jid", "x", "y", "n_iterations"]
        assert "stage" in header and "resume_from" in header
        by_name = [dict(zip(header, r)) for r in rows[1:]]
        assert by_name[0]["stage"] == "warm" and by_name[0]["resume_from"] == ""
        assert by_name[1]["resume_from"] == "0" and by_name[1]["stage"] == ""
        assert by_name[1]["n_iterations"] == "3"

    def test_export_reimport_matches_summarize_oracle(self, tmp_path):
        store, eid = ThreeJobFixture.build(tmp_path)
        rows = list(csv.DictReader(io.StringIO(store.export_csv(eid))))
        csv_best = min(float(r["score"]) for r in rows if r["status"] == "finished")
        assert csv_best == summarize(store, eid).best_score

    def test_unknown_format_rejected(self, tmp_path):
        store, eid = ThreeJobFixture.build(tmp_path)
        with pytest.raises(StoreError, match="format"):
            store.export_history(eid, "parquet")

    def test_unknown_eid_rejected(self, tmp_path):
        store, _ = seeded_store(tmp_path)
        with pytest.raises(StoreError, match="unknown experiment"):
            store.export_history(1234, "csv")

    def test_max_target_series_is_running_max(self, tmp_path):
        store = open_store(tmp_path / "m.db")
        eid = store.create_experiment(
            make_space_config(
                [{"name": "x", "range": [0, 1], "type": "float"}], target="max"
            ),
            username="tester",
        )
        store.start_experiment(eid)
        for jid, score in enumerate([0.2, 0.9, 0.5]):
            store.record_job_start(eid, jid, json.dumps({"x": 0.5, "job_id": jid}), rid=None)
            time.sleep(0.002)
            store.record_job_end(eid, jid, "finished", score=score)
        assert store.export_series(eid) == [(1, 0.2), (2, 0.9), (3, 0.9)]


_CRASH_CHILD = """
import json, sys, time
from hypersweep.tracking import open_store

store = open_store(sys.argv[1])
config = %r
eid = store.create_experiment(config, username="crash")
store.start_experiment(eid)
for jid in range(3):
    store.record_job_start(eid, jid, json.dumps({"x": 0.5, "y": 0.5, "job_id": jid}), rid=None)
    store.record_job_end(eid, jid, "finished", score=float(jid))
    print(f"finished {jid}", flush=True)
store.record_job_start(eid, 3, json.dumps({"x": 0.1, "y": 0.1, "job_id": 3}), rid=None)
print("running 3", flush=True)
time.sleep(600)
""" % CONFIG_TEXT


class TestCrashRecovery:
    def test_kill_minus_nine_loses_nothing_recorded(self, tmp_path):
        db = tmp_path / "crash.db"
        proc = subprocess.Popen(
            [sys.executable, "-c", _CRASH_CHILD, str(db)],
            stdout=subprocess.PIPE,
            text=True,
        )
        seen = []
        try:
            for line in proc.stdout:
                seen.append(line.strip())
                if line.startswith("running 3"):
                    break
            proc.send_signal(signal.SIGKILL)
            proc.wait(timeout=10)
        finally:
            if proc.poll() is None:
                proc.kill()
        assert "finished 2" in seen

        store = open_store(db)
        eid = store.experiments()[0].eid
        jobs = store.jobs(eid)
        finished = {j.jid: j.score for j in jobs if j.status == "finished"}
        assert finished == {0: 0.0, 1: 1.0, 2: 2.0}  # all printed completions present
        running = [j.jid for j in jobs if j.status == "running"]
        assert running == [3]  # interrupted job is visible
        for j in jobs:  # zero corrupted rows
            doc = json.loads(j.job_config)
            assert doc["job_id"] == j.jid
        summary = summarize(store, eid)
        assert summary.n_finished == 3
        assert summary.n_interrupted == 1
        assert summary.best_score == 0.0
        store.close()

    def test_sqlite_file_is_consistent_after_kill(self, tmp_path):
        db = tmp_path / "crash2.db"
        proc = subprocess.Popen(
            [sys.executable, "-c", _CRASH_CHILD, str(db)],
            stdout=subprocess.PIPE,
            text=True,
        )
        for line in proc.stdout:
            if line.startswith("running"):
                break
        proc.send_signal(signal.SIGKILL)
        proc.wait(timeout=10)
        conn = sqlite3.connect(db)
        assert conn.execute("PRAGMA integrity_check").fetchone() == ("ok",)
        conn.close()
