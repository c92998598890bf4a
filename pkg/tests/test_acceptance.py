"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines live.
Thresholds are pinned here; oracle values frozen in comments next to the
code that computed them.
"""

import json
import math
import signal
import subprocess
import sys
import textwrap
import time

import numpy as np
import pytest
from scipy import stats

from conftest import XY_PARAMS, cpu_environment, make_config, make_space_config
from hypersweep.bench import rosenbrock, run_benchmark, script_path
from hypersweep.orchestrator import Experiment, summarize
from hypersweep.proposers import create_proposer
from hypersweep.proposers.bandit import hyperband_plan, select_promotions
from hypersweep.proposers.gp import GpSurrogate, expected_improvement
from hypersweep.proposers.tpe import split_good_bad
from hypersweep.protocol import format_result_line, parse_result_line
from hypersweep.space import (
    JobConfig,
    JobResult,
    job_config_load,
    job_config_save,
    parse_experiment_config,
)
from hypersweep.tracking import open_store


def check(criterion, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"\n[acceptance] criterion {criterion:2d}: {status} {detail}", flush=True)
    assert ok, f"criterion {criterion} failed: {detail}"


def rosenbrock_experiment(n_samples, n_parallel, **overrides):
    overrides.setdefault("script", script_path("rosenbrock"))
    return make_config(XY_PARAMS, n_samples=n_samples, n_parallel=n_parallel, **overrides)


class TestCriterion1PaperFormats:
    def test_formats(self):
        problems = []
        # Literal flat job-config document.
        literal = '{"x": -5.0, "y": 5.0, "job_id": 0}'
        cfg = parse_experiment_config(
            make_space_config(XY_PARAMS, n_parallel=2, n_samples=100)
        )
        job = job_config_load(literal, cfg.space)
        if job.values != {"x": -5.0, "y": 5.0} or job.job_id != 0:
            problems.append("job-config literal parse")
        if json.loads(job_config_save(job, cfg.space)) != json.loads(literal):
            problems.append("job-config round-trip")
        # Reference-shaped experiment config.
        reference = json.dumps(
            {
                "proposer": "random",
                "script": "mnist.py",
                "resource": "gpu",
                "n_parallel": 2,
                "target": "min",
                "parameter_config": [
                    {"name": "conv1", "range": [20, 50], "type": "int"},
                    {"name": "dropout", "range": [0.5, 0.9], "type": "float"},
                ],
                "n_samples": 100,
            }
        )
        parsed = parse_experiment_config(reference)
        if (parsed.proposer, parsed.n_samples, len(parsed.space)) != ("random", 100, 2):
            problems.append("experiment config parse")
        if json.loads(parse_experiment_config(parsed.to_json()).to_json()) != json.loads(
            parsed.to_json()
        ):
            problems.append("experiment config round-trip")
        # Byte-exact result-line grammar.
        if format_result_line(0.98) != "#AUP_RESULT:0.98":
            problems.append("result line plain")
        if format_result_line(0.125, "epoch=10") != "#AUP_RESULT:0.125,epoch=10":
            problems.append("result line aux")
        if parse_result_line("#AUP_RESULT:0.125,epoch=10\n") != (0.125, "epoch=10"):
            problems.append("result line parse")
        check(1, not problems, f"paper formats {problems or 'all verified'}")


class TestCriterion2Algorithm1EndToEnd:
    def test_random_rosenbrock_across_parallelism(self, tmp_path):
        multisets = {}
        bounds_ok = True
        rows_ok = True
        for n_parallel in (1, 2, 4):
            base = tmp_path / f"p{n_parallel}"
            base.mkdir()
            env = cpu_environment(base, n=n_parallel)
            store = open_store(env.db_path)
            summary = Experiment(
                rosenbrock_experiment(100, n_parallel), env, store, seed=7
            ).run()
            jobs = store.jobs(summary.eid)
            rows_ok &= len(jobs) == 100 and all(j.status == "finished" for j in jobs)
            bounds_ok &= summary.max_parallel <= n_parallel
            multisets[n_parallel] = sorted(
                (json.dumps(json.loads(j.job_config), sort_keys=True), j.score)
                for j in jobs
            )
            store.close()
        same = multisets[1] == multisets[2] == multisets[4]
        check(
            2,
            rows_ok and bounds_ok and same,
            f"100 rows per run: {rows_ok}, parallel bound: {bounds_ok}, "
            f"same multiset: {same}",
        )


class TestCriterion3GridCount:
    def test_grid_162_jobs(self, tmp_path):
        params = [
            {"name": "x", "range": [-5, 10], "type": "float", "grid_n": 3},
            {"name": "y", "range": [-5, 10], "type": "float", "grid_n": 3},
            {"name": "conv1", "range": [20, 50], "type": "int", "grid_n": 3},
            {"name": "fc1", "range": [128, 1024], "type": "int", "grid_n": 3},
            {"name": "lr", "range": [0.001, 0.01], "type": "choice"},
        ]
        config = make_config(
            params,
            proposer="grid",
            script=script_path("rosenbrock"),
            n_samples=1000,
            n_parallel=2,
        )
        env = cpu_environment(tmp_path, n=2)
        store = open_store(env.db_path)
        summary = Experiment(config, env, store, seed=0).run()
        jobs = store.jobs(summary.eid)
        distinct = {
            json.dumps(
                {k: v for k, v in json.loads(j.job_config).items() if k != "job_id"},
                sort_keys=True,
            )
            for j in jobs
        }
        store.close()
        check(
            3,
            len(jobs) == 162 and len(distinct) == 162,
            f"{len(jobs)} jobs, {len(distinct)} distinct configs (expected 162)",
        )


class TestCriterion4HyperBandPlan:
    def test_plan_table_and_issued_budgets(self, tmp_path):
        plan = hyperband_plan(81, 3)
        s_max = 4
        oracle_n0 = [math.ceil((s_max + 1) / (s + 1) * 3**s) for s in range(s_max, -1, -1)]
        oracle_budget0 = [round(81 / 3**s) for s in range(s_max, -1, -1)]
        table_ok = (
            plan.s_max == s_max
            and [b.rounds[0].n_configs for b in plan.brackets] == oracle_n0
            and [b.rounds[0].budget for b in plan.brackets] == oracle_budget0
        )
        config = make_config(
            XY_PARAMS,
            proposer="hyperband",
            script=script_path("budgeted"),
            n_samples=500,
            n_parallel=2,
            proposer_options={"max_budget": 81, "eta": 3},
        )
        env = cpu_environment(tmp_path, n=2)
        store = open_store(env.db_path)
        experiment = Experiment(config, env, store, seed=3)
        summary = experiment.run()
        per_bracket = experiment.proposer.budget_issued
        plan_totals = {i: b.total_budget() for i, b in enumerate(plan.brackets)}
        issued_ok = per_bracket == plan_totals
        total_ok = summary.total_iterations == sum(plan_totals.values())
        store.close()
        check(
            4,
            table_ok and issued_ok and total_ok,
            f"table oracle: {table_ok}, per-bracket issued == plan: {issued_ok}, "
            f"grand total {summary.total_iterations} == {sum(plan_totals.values())}",
        )


class TestCriterion5PromotionOracle:
    def test_promotions_match_brute_force(self):
        rng = np.random.default_rng(2024)
        mismatches = 0
        for _ in range(200):
            n = int(rng.integers(1, 40))
            k = int(rng.integers(0, n + 1))
            jids = [int(j) for j in rng.permutation(5000)[:n]]
            entries = [(j, float(rng.integers(0, 6))) for j in jids]
            brute = [j for j, _ in sorted(entries, key=lambda e: (e[1], e[0]))][:k]
            if select_promotions(entries, k) != brute:
                mismatches += 1
        # and through the live proposers
        for proposer_name in ("hyperband", "bohb"):
            cfg = make_config(
                XY_PARAMS,
                proposer=proposer_name,
                n_samples=500,
                proposer_options={"max_budget": 9, "eta": 3},
            )
            p = create_proposer(cfg, seed=1)
            round0 = [p.get_param().config for _ in range(9)]
            scores = [float(s) for s in np.random.default_rng(5).integers(0, 4, size=9)]
            for c, s in zip(round0, scores):
                p.update(JobResult(job_id=c.job_id, status="finished", score=s))
            promoted = [p.get_param().config.aux["resume_from"] for _ in range(3)]
            brute = [
                j for j, _ in sorted(
                    ((c.job_id, s) for c, s in zip(round0, scores)),
                    key=lambda e: (e[1], e[0]),
                )
            ][:3]
            if promoted != brute:
                mismatches += 1
        check(5, mismatches == 0, f"{mismatches} mismatches over 200 assignments + live walks")


class TestCriterion6GpMath:
    def test_gp_math(self):
        problems = []
        # Interpolation at the noise floor.
        rng = np.random.default_rng(0)
        for _ in range(5):
            x = rng.uniform(size=(6, 2))
            y = np.sin(3 * x[:, 0]) + x[:, 1]
            s = GpSurrogate(x, y).set_hyperparams(1.0, [0.3, 0.3], 1e-8)
            mu, _ = s.predict(x)
            if np.max(np.abs(mu - s.y)) > 1e-4:
                problems.append(f"interpolation residual {np.max(np.abs(mu - s.y)):.2e}")
        # EI closed-form spot values.
        phi0 = 1.0 / math.sqrt(2 * math.pi)
        ei = expected_improvement(np.array([0.0]), np.array([1.0]), 0.0)[0]
        if abs(ei - phi0) > 1e-12:
            problems.append(f"EI(mu=f-, sigma=1) = {ei} != phi(0)")
        ei0 = expected_improvement(np.array([0.0]), np.array([0.0]), 0.0)[0]
        if ei0 != 0.0:
            problems.append(f"EI at incumbent with sigma=0 is {ei0}")
        # Log-marginal-likelihood gradient vs central differences.
        worst = 0.0
        for _ in range(50):
            x = rng.uniform(size=(3, 2))
            y = rng.normal(size=3)
            s = GpSurrogate(x, y)
            theta = np.concatenate(
                [
                    rng.uniform(math.log(1e-1), math.log(10), size=1),
                    rng.uniform(math.log(0.1), math.log(2), size=2),
                    rng.uniform(math.log(1e-4), math.log(0.5), size=1),
                ]
            )
            grad = s.log_marginal_grad(theta)
            h = 1e-5
            for j in range(len(theta)):
                tp, tm = theta.copy(), theta.copy()
                tp[j] += h
                tm[j] -= h
                fd = (s.log_marginal(tp) - s.log_marginal(tm)) / (2 * h)
                rel = abs(grad[j] - fd) / max(1.0, abs(fd))
                worst = max(worst, rel)
        if worst > 1e-4:
            problems.append(f"LML gradient relative error {worst:.2e}")
        check(6, not problems, f"{problems or f'gradient worst rel err {worst:.1e}'}")


class TestCriterion7TpeBehavior:
    def test_tpe_behavior(self):
        problems = []
        # Startup fallback distribution: 5000 draws vs uniform.
        cfg = make_config(
            [{"name": "x", "range": [0, 1], "type": "float"}],
            proposer="tpe",
            n_samples=5000,
            proposer_options={"n_startup": 10**9},
        )
        p = create_proposer(cfg, seed=31)
        draws = []
        for _ in range(5000):
            c = p.get_param().config
            draws.append(c.values["x"])
            p.update(JobResult(job_id=c.job_id, status="finished", score=0.0))
        _, pvalue = stats.kstest(draws, "uniform")
        if pvalue <= 0.01:
            problems.append(f"startup KS p={pvalue:.4f}")
        # Gamma-split sizes on 100 random histories.
        rng = np.random.default_rng(17)
        for _ in range(100):
            n = int(rng.integers(2, 150))
            gamma = float(rng.uniform(0.05, 0.9))
            pairs = [({"x": float(rng.uniform())}, float(rng.normal())) for _ in range(n)]
            good, bad = split_good_bad(pairs, gamma)
            if len(good) != max(1, min(math.ceil(gamma * n), n - 1)):
                problems.append(f"split size n={n} gamma={gamma:.2f}")
                break
        # Model proposals in bounds on a mixed space.
        mixed = make_config(
            [
                {"name": "x", "range": [-5, 10], "type": "float"},
                {"name": "k", "range": [2, 7], "type": "int"},
                {"name": "opt", "range": ["adam", "sgd"], "type": "choice"},
            ],
            proposer="tpe",
            n_samples=60,
            proposer_options={"n_startup": 5},
        )
        p2 = create_proposer(mixed, seed=9)
        for _ in range(60):
            c = p2.get_param().config
            v = c.values
            if not (-5 <= v["x"] <= 10 and v["k"] in range(2, 8) and v["opt"] in ("adam", "sgd")):
                problems.append(f"out-of-bounds proposal {v}")
                break
            p2.update(
                JobResult(job_id=c.job_id, status="finished", score=v["x"] ** 2 + v["k"])
            )
        check(7, not problems, f"{problems or f'KS p={pvalue:.3f}, splits ok, bounds ok'}")


class TestCriterion8SearchSanity:
    # Frozen from the independent straight-loop oracle (20 seeds x 200
    # uniform draws on [-5,10]^2, running min of rosenbrock, median of
    # per-seed bests): 2.250966608833484.
    ORACLE_MEDIAN = 2.250966608833484

    def test_random_search_matches_oracle_threshold(self, tmp_path):
        result = run_benchmark(
            "random",
            "rosenbrock",
            seeds=range(20),
            n_samples=200,
            n_parallel=4,
            workdir=tmp_path,
        )
        finished_ok = all(o.n_finished == 200 for o in result.outcomes)
        median = result.median_best()
        threshold = self.ORACLE_MEDIAN * 1.10
        check(
            8,
            finished_ok and median <= threshold,
            f"median best {median:.4f} <= {threshold:.4f} (oracle {self.ORACLE_MEDIAN:.4f}), "
            f"all 20x200 finished: {finished_ok}",
        )


_CRASH_CHILD = """
import sys
from hypersweep.bench import script_path
from hypersweep.orchestrator import Experiment
from hypersweep.resources import Environment, ResourceSlot
from hypersweep.space import parse_experiment_config
from hypersweep.tracking import open_store

base = sys.argv[1]
config = parse_experiment_config('''%s''')
env = Environment(
    resources=(
        ResourceSlot(0, "cpu", "cpu-0"),
        ResourceSlot(1, "cpu", "cpu-1"),
    ),
    db_path=base + "/crash.db",
    workdir=base + "/work",
)
store = open_store(env.db_path)
print("child starting", flush=True)
Experiment(config, env, store, seed=0).run()
"""


class TestCriterion9CrashDurability:
    def test_kill_mid_experiment(self, tmp_path):
        config_text = make_space_config(
            [{"name": "duration", "range": [0.2, 0.2], "type": "float"}],
            script=script_path("sleepy"),
            n_samples=60,
            n_parallel=2,
        )
        child_code = _CRASH_CHILD % config_text
        script = tmp_path / "child.py"
        script.write_text(textwrap.dedent(child_code))
        proc = subprocess.Popen(
            [sys.executable, str(script), str(tmp_path)],
            stdout=subprocess.DEVNULL,
            stderr=subprocess.DEVNULL,
        )
        db = tmp_path / "crash.db"
        snapshot = {}
        deadline = time.monotonic() + 25
        try:
            while time.monotonic() < deadline:
                if db.exists():
                    probe = open_store(db)
                    experiments = probe.experiments()
                    if experiments:
                        eid = experiments[0].eid
                        snapshot = {
                            j.jid: j.score
                            for j in probe.jobs(eid)
                            if j.status == "finished"
                        }
                    probe.close()
                    if len(snapshot) >= 3:
                        break
                time.sleep(0.1)
            assert len(snapshot) >= 3, "child never completed 3 jobs"
            proc.send_signal(signal.SIGKILL)
            proc.wait(timeout=10)
        finally:
            if proc.poll() is None:
                proc.kill()

        store = open_store(db)
        eid = store.experiments()[0].eid
        jobs = store.jobs(eid)
        finished = {j.jid: j.score for j in jobs if j.status == "finished"}
        # every pre-kill completion survives with the same score
        survived = all(finished.get(jid) == score for jid, score in snapshot.items())
        corrupted = 0
        for j in jobs:
            try:
                doc = json.loads(j.job_config)
                if doc["job_id"] != j.jid:
                    corrupted += 1
                if j.status == "finished" and not math.isfinite(j.score):
                    corrupted += 1
                if j.status not in ("finished", "failed", "killed", "running"):
                    corrupted += 1
            except (json.JSONDecodeError, KeyError):
                corrupted += 1
        summary = summarize(store, eid)
        agree = summary.n_finished == len(finished) and (
            not finished
            or summary.best_score == min(finished.values())
        )
        interrupted_visible = summary.n_interrupted == sum(
            1 for j in jobs if j.status == "running"
        )
        store.close()
        check(
            9,
            survived and corrupted == 0 and agree and interrupted_visible,
            f"pre-kill completions survived: {survived}, corrupted rows: {corrupted}, "
            f"summarize agrees: {agree}, interrupted visible: {interrupted_visible}",
        )


class TestCriterion10ScalingShape:
    OVERHEAD_BUDGET_S = 5.0

    def test_wall_time_tracks_ideal(self, tmp_path):
        results = {}
        ok = True
        details = []
        for n_parallel in (1, 2, 4, 8):
            base = tmp_path / f"p{n_parallel}"
            base.mkdir()
            env = cpu_environment(base, n=8)
            store = open_store(env.db_path)
            config = make_config(
                [{"name": "duration", "range": [1.0, 1.0], "type": "float"}],
                script=script_path("sleepy"),
                n_samples=64,
                n_parallel=n_parallel,
            )
            summary = Experiment(config, env, store, seed=0).run()
            store.close()
            ideal = 64.0 / n_parallel
            wall = summary.wall_time
            results[n_parallel] = (wall, ideal)
            level_ok = (
                summary.n_finished == 64
                and wall <= 1.25 * ideal + self.OVERHEAD_BUDGET_S
                and wall >= ideal * 0.99
            )
            ok &= level_ok
            details.append(f"p={n_parallel}: {wall:.1f}s vs ideal {ideal:.1f}s")
        check(10, ok, "; ".join(details))
