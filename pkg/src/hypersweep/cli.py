"""Command-line entry points: setup, init, run, stop, report, result.

Exit codes are stable: 0 success, 2 configuration error, 3 environment or
resource error, 4 runtime failure.  HYPERSWEEP_DB and HYPERSWEEP_WORKDIR
override the environment file's paths.
"""

from __future__ import annotations

import json
import logging
import math
import os
import signal
import sys
from dataclasses import replace
from pathlib import Path

import click

from .errors import (
    ConfigError,
    EnvFileError,
    HyperSweepError,
    ResourceError,
    StoreError,
)
from .orchestrator import Experiment, stop_experiment, summarize
from .protocol import format_result_line
from .resources import Environment, ResourceSlot, load_environment
from .space import PROPOSERS, parse_experiment_config
from .tracking import Store

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ENVIRONMENT = 3
EXIT_RUNTIME = 4

_SCAFFOLD_OPTIONS = {
    "random": {},
    "grid": {},
    "gp_ei": {"n_candidates": 1000, "n_restarts": 8},
    "tpe": {"gamma": 0.25, "n_startup": 20, "n_candidates": 24},
    "hyperband": {"max_budget": 27, "min_budget": 1, "eta": 3},
    "bohb": {"max_budget": 27, "min_budget": 1, "eta": 3, "rho": 0.3333333333333333},
}


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_env(env_path: str) -> Environment:
    env = load_environment(env_path)
    db = os.environ.get("HYPERSWEEP_DB")
    workdir = os.environ.get("HYPERSWEEP_WORKDIR")
    if db:
        env = replace(env, db_path=db)
    if workdir:
        env = replace(env, workdir=workdir)
    return env


@click.group()
@click.version_option(package_name="hypersweep")
def main():
    """Hyperparameter search orchestrator."""
    logging.basicConfig(
        level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s"
    )


@main.command()
@click.option("--cpu", type=int, default=0, help="Number of local CPU slots.")
@click.option("--gpu", default="", help="Comma-separated GPU device indices, e.g. 0,1.")
@click.option("--node", default="", help="Comma-separated remote hosts.")
@click.option("--passive", type=int, default=0, help="Number of passive slots.")
@click.option("--db", default="hypersweep.db", show_default=True, help="Tracking database path.")
@click.option("--workdir", default=".hypersweep", show_default=True, help="Job workspace root.")
@click.option("--out", default="env.json", show_default=True, help="Environment file to write.")
@click.option("--force", is_flag=True, help="Overwrite an existing environment file.")
def setup(cpu, gpu, node, passive, db, workdir, out, force):
    """Create the environment file and initialize the tracking database."""
    out_path = Path(out)
    if out_path.exists() and not force:
        _fail(EXIT_ENVIRONMENT, f"{out} already exists; pass --force to overwrite")
    resources = []
    for i in range(cpu):
        resources.append({"type": "cpu", "locator": f"cpu-{i}"})
    for dev in filter(None, (t.strip() for t in gpu.split(","))):
        resources.append({"type": "gpu", "locator": dev})
    for host in filter(None, (t.strip() for t in node.split(","))):
        resources.append({"type": "node", "locator": host})
    for i in range(passive):
        resources.append({"type": "passive", "locator": f"passive-{i}"})
    if not resources:
        _fail(EXIT_ENVIRONMENT, "no resources declared; pass --cpu/--gpu/--node/--passive")
    env = Environment(
        resources=tuple(
            ResourceSlot(rid=i, rtype=r["type"], locator=r["locator"])
            for i, r in enumerate(resources)
        ),
        db_path=db,
        workdir=workdir,
    )
    try:
        store = Store(db)
        for slot in env.resources:
            store.record_resource(slot.rid, slot.rtype, slot.locator, "free")
        store.close()
    except StoreError as exc:
        _fail(EXIT_ENVIRONMENT, str(exc))
    Path(workdir).mkdir(parents=True, exist_ok=True)
    out_path.write_text(env.to_json() + "\n", encoding="utf-8")
    click.echo(f"wrote {out} with {len(resources)} resource(s); database at {db}")


@main.command()
@click.option("--proposer", default="random", show_default=True, help="Search algorithm.")
@click.option("--out", default="experiment.json", show_default=True, help="Config file to write.")
@click.option("--force", is_flag=True, help="Overwrite an existing config file.")
def init(proposer, out, force):
    """Write an experiment-config scaffold for the chosen proposer."""
    if proposer not in PROPOSERS:
        _fail(
            EXIT_CONFIG,
            f"unknown proposer {proposer!r}; valid proposers: {', '.join(PROPOSERS)}",
        )
    out_path = Path(out)
    if out_path.exists() and not force:
        _fail(EXIT_CONFIG, f"{out} already exists; pass --force to overwrite")
    doc = {
        "proposer": proposer,
        "script": "./train.py",
        "resource": "cpu",
        "n_parallel": 1,
        "target": "min",
        "parameter_config": [
            {"name": "x", "range": [-5, 10], "type": "float"},
            {"name": "y", "range": [-5, 10], "type": "float"},
        ],
        "n_samples": 100,
    }
    options = _SCAFFOLD_OPTIONS[proposer]
    if options:
        doc["proposer_options"] = dict(options)
    text = json.dumps(doc, indent=2) + "\n"
    parse_experiment_config(text)  # scaffolds must always reparse cleanly
    out_path.write_text(text, encoding="utf-8")
    click.echo(f"wrote {out} (proposer: {proposer}); edit script and parameter_config")


@main.command()
@click.argument("config_path")
@click.option("--env", "env_path", default="env.json", show_default=True)
@click.option("--seed", type=int, default=None, help="Proposer RNG seed (overrides config).")
@click.option("--dry-run", is_flag=True, help="Validate config, environment and script; launch nothing.")
def run(config_path, env_path, seed, dry_run):
    """Run an experiment from its configuration file."""
    try:
        text = Path(config_path).read_text(encoding="utf-8")
    except OSError as exc:
        _fail(EXIT_CONFIG, f"cannot read config {config_path}: {exc}")
    try:
        config = parse_experiment_config(text)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, f"[{exc.category}] {exc}")
    try:
        env = _load_env(env_path)
    except EnvFileError as exc:
        _fail(EXIT_ENVIRONMENT, str(exc))
    if not any(s.rtype == config.resource_type for s in env.resources):
        _fail(EXIT_ENVIRONMENT, f"environment has no {config.resource_type!r} resources")
    script = Path(config.script)
    if config.resource_type != "node" and not (
        script.exists() and os.access(script, os.X_OK)
    ):
        _fail(EXIT_CONFIG, f"script {config.script!r} is missing or not executable")
    try:
        store = Store(env.db_path)
    except StoreError as exc:
        _fail(EXIT_ENVIRONMENT, str(exc))
    if dry_run:
        store.close()
        click.echo("dry run: config, environment and script all validate; nothing launched")
        sys.exit(EXIT_OK)
    experiment = Experiment(config, env, store, seed=seed)

    def _on_sigint(signum, frame):
        if experiment._stop_mode is None:
            click.echo("stop requested: draining in-flight jobs (^C again to kill)", err=True)
            experiment.stop(kill=False)
        else:
            click.echo("killing in-flight jobs", err=True)
            experiment.stop(kill=True)

    previous = signal.signal(signal.SIGINT, _on_sigint)
    try:
        summary = experiment.run()
    except (ResourceError, StoreError) as exc:
        store.close()
        _fail(EXIT_ENVIRONMENT, str(exc))
    except HyperSweepError as exc:
        store.close()
        _fail(EXIT_RUNTIME, str(exc))
    finally:
        signal.signal(signal.SIGINT, previous)
    click.echo(
        f"experiment {summary.eid} {summary.status}: "
        f"{summary.n_finished} finished, {summary.n_failed} failed, "
        f"{summary.n_killed} killed in {summary.wall_time:.1f}s"
    )
    if summary.best_job_id is not None:
        click.echo(
            f"best: job {summary.best_job_id} score={summary.best_score!r} "
            f"values={json.dumps(summary.best_values)}"
        )
    store.close()
    sys.exit(EXIT_OK if summary.n_finished >= 1 else EXIT_RUNTIME)


@main.command()
@click.argument("eid", type=int)
@click.option("--env", "env_path", default="env.json", show_default=True)
@click.option("--kill", is_flag=True, help="Kill in-flight jobs instead of draining.")
def stop(eid, env_path, kill):
    """Ask the experiment with EID to stop."""
    try:
        env = _load_env(env_path)
        store = Store(env.db_path)
    except (EnvFileError, StoreError) as exc:
        _fail(EXIT_ENVIRONMENT, str(exc))
    try:
        stop_experiment(store, eid, kill=kill)
    except StoreError as exc:
        store.close()
        _fail(EXIT_RUNTIME, str(exc))
    store.close()
    click.echo(f"experiment {eid}: stop ({'kill' if kill else 'drain'}) requested")


@main.command()
@click.argument("eid", type=int)
@click.option("--env", "env_path", default="env.json", show_default=True)
@click.option("--csv", "csv_path", default=None, help="Write per-job history CSV here.")
@click.option("--json", "json_path", default=None, help="Write best-so-far series JSON here.")
@click.option("--plot", "plot_path", default=None, help="Render the progress figure here.")
@click.option("--top", type=int, default=0, help="Print the top K jobs with their values.")
def report(eid, env_path, csv_path, json_path, plot_path, top):
    """Summarize an experiment and export its history."""
    try:
        env = _load_env(env_path)
        store = Store(env.db_path)
    except (EnvFileError, StoreError) as exc:
        _fail(EXIT_ENVIRONMENT, str(exc))
    try:
        summary = summarize(store, eid)
        config = parse_experiment_config(store.experiment(eid).exp_config)
        click.echo(
            f"experiment {eid} [{summary.status}] proposer={config.proposer} "
            f"finished={summary.n_finished} failed={summary.n_failed} "
            f"killed={summary.n_killed} interrupted={summary.n_interrupted}"
        )
        if summary.best_job_id is not None:
            click.echo(
                f"best: job {summary.best_job_id} score={summary.best_score!r} "
                f"values={json.dumps(summary.best_values)}"
            )
        if top > 0:
            sign = -1.0 if config.target == "max" else 1.0
            finished = [
                j for j in store.jobs(eid) if j.status == "finished"
            ]
            finished.sort(key=lambda j: (sign * j.score, j.jid))
            for rank, job in enumerate(finished[:top], start=1):
                doc = json.loads(job.job_config)
                values = {k: v for k, v in doc.items() if k in config.space.names}
                click.echo(
                    f"  #{rank} job {job.jid} score={job.score!r} values={json.dumps(values)}"
                )
        if csv_path:
            Path(csv_path).write_text(store.export_history(eid, "csv"), encoding="utf-8")
            click.echo(f"wrote {csv_path}")
        if json_path:
            Path(json_path).write_text(
                store.export_history(eid, "json") + "\n", encoding="utf-8"
            )
            click.echo(f"wrote {json_path}")
        if plot_path:
            from .report import render_history_figure

            render_history_figure(store, eid, plot_path)
            click.echo(f"wrote {plot_path}")
    except StoreError as exc:
        store.close()
        _fail(EXIT_RUNTIME, str(exc))
    store.close()


@main.command()
@click.argument("score")
@click.argument("aux", required=False, default=None)
def result(score, aux):
    """Print the job result line for SCORE (use from shell-based scripts)."""
    try:
        value = float(score)
    except ValueError:
        _fail(EXIT_CONFIG, f"score must be a number, got {score!r}")
    if not math.isfinite(value):
        _fail(EXIT_CONFIG, f"score must be finite, got {score!r}")
    click.echo(format_result_line(value, aux))


if __name__ == "__main__":
    main()
