import json
import os
import stat
import textwrap

import pytest

from hypersweep.resources import Environment, ResourceSlot
from hypersweep.space import parse_experiment_config


def make_space_config(params, **overrides):
    """Experiment-config JSON text with the given parameter_config entries."""
    doc = {
        "proposer": "random",
        "script": "./objective.py",
        "resource": "cpu",
        "n_parallel": 1,
        "target": "min",
        "parameter_config": params,
        "n_samples": 10,
    }
    doc.update(overrides)
    return json.dumps(doc)


def make_config(params, **overrides):
    return parse_experiment_config(make_space_config(params, **overrides))


XY_PARAMS = [
    {"name": "x", "range": [-5, 10], "type": "float"},
    {"name": "y", "range": [-5, 10], "type": "float"},
]


@pytest.fixture
def xy_config():
    def _build(**overrides):
        return make_config(XY_PARAMS, **overrides)

    return _build


def write_script(path, body):
    """Create an executable python script at `path` with the given body."""
    text = "#!/usr/bin/env python3\n" + textwrap.dedent(body)
    path.write_text(text, encoding="utf-8")
    path.chmod(path.stat().st_mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)
    return str(path)


@pytest.fixture
def script_factory(tmp_path):
    def _make(body, name="script.py"):
        return write_script(tmp_path / name, body)

    return _make


def cpu_environment(tmp_path, n=2, **kwargs):
    return Environment(
        resources=tuple(
            ResourceSlot(rid=i, rtype="cpu", locator=f"cpu-{i}") for i in range(n)
        ),
        db_path=str(tmp_path / "store.db"),
        workdir=str(tmp_path / "work"),
        **kwargs,
    )
