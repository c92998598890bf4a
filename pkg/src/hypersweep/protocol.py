"""Standard-IO result protocol and the helpers user scripts call.

A job reports its score by printing, as its final qualifying stdout line,

    #AUP_RESULT:<float>[,<aux-string>]

or simply a bare float on its own line.  Everything after the first comma
is passed back to the proposer verbatim.  The protocol is just a printed
line, so scripts in any language can participate.
"""

from __future__ import annotations

import json
import math
from typing import Any

from .errors import ProtocolError

RESULT_PREFIX = "#AUP_RESULT:"


def format_result_line(score: float, aux: str | None = None) -> str:
    """Render the result line; refuses NaN/Inf scores."""
    score = float(score)
    if not math.isfinite(score):
        raise ValueError(f"result score must be finite, got {score}")
    line = f"{RESULT_PREFIX}{score!r}"
    if aux is not None:
        line += f",{aux}"
    return line


def print_result(score: float, aux: str | None = None) -> None:
    """Emit the result line on stdout (call this at the end of your script)."""
    print(format_result_line(score, aux), flush=True)


def load_job_config(path: str) -> dict[str, Any]:
    """Read the flat job-config JSON handed to the script as argv[1]."""
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _try_float(text: str) -> float | None:
    try:
        return float(text)
    except ValueError:
        return None


def parse_result_line(stdout: str) -> tuple[float, str | None]:
    """Extract (score, aux) from captured stdout.

    The last well-formed prefixed line wins; failing that, the last line
    parseable entirely as a float.  Raises ProtocolError when neither exists.
    """
    lines = stdout.splitlines()
    for line in reversed(lines):
        stripped = line.strip()
        if not stripped.startswith(RESULT_PREFIX):
            continue
        body = stripped[len(RESULT_PREFIX):]
        head, sep, aux = body.partition(",")
        score = _try_float(head)
        if score is not None:
            return score, aux if sep else None
    for line in reversed(lines):
        score = _try_float(line.strip()) if line.strip() else None
        if score is not None:
            return score, None
    raise ProtocolError("no result line found in job output")
