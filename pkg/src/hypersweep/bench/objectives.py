"""Synthetic objectives and the standalone scripts that serve them.

The scripts under ``scripts/`` are tiny self-contained executables reading
the flat job-config JSON from argv[1] and printing the result line; they
exercise the full subprocess path and show how to adapt any script to the
job protocol.
"""

from __future__ import annotations

import os
import stat
from pathlib import Path

BUDGET_PENALTY = 10.0

_SCRIPTS_DIR = Path(__file__).parent / "scripts"


def rosenbrock(x: float, y: float) -> float:
    """Classic banana-valley function; global minimum 0 at (1, 1)."""
    return (1.0 - x) ** 2 + 100.0 * (y - x * x) ** 2


def budgeted_score(base: float, n_iterations: float, c: float = BUDGET_PENALTY) -> float:
    """Training-curve stand-in: base plus a c/n penalty that shrinks with budget."""
    return base + c / n_iterations


def script_path(name: str) -> str:
    """Absolute path to a bundled objective script, ensured executable."""
    path = _SCRIPTS_DIR / f"{name}.py"
    if not path.exists():
        available = sorted(p.stem for p in _SCRIPTS_DIR.glob("*.py"))
        raise FileNotFoundError(f"no bundled script {name!r}; available: {available}")
    mode = path.stat().st_mode
    if not mode & stat.S_IXUSR:
        os.chmod(path, mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)
    return str(path)
