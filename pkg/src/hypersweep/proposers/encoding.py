"""Value <-> numeric encodings shared by the model-based proposers.

Float and int dimensions map affinely to [0, 1]; choice dimensions are
category indices (model proposers one-hot them where needed).  All returned
values are plain Python scalars so job configs stay JSON-serializable.
"""

from __future__ import annotations

from typing import Any, Mapping

import numpy as np

from ..space import ParameterSpec, SearchSpace


def to_unit(param: ParameterSpec, value: Any) -> float:
    """Map a float/int value into [0, 1]; degenerate intervals map to 0.5."""
    if param.kind == "choice":
        raise ValueError("choice dimensions use category indices, not unit coords")
    if param.high == param.low:
        return 0.5
    return (float(value) - param.low) / (param.high - param.low)


def from_unit(param: ParameterSpec, u: float) -> Any:
    """Inverse of :func:`to_unit`, clamping and snapping ints to the lattice."""
    u = min(1.0, max(0.0, float(u)))
    if param.kind == "choice":
        raise ValueError("choice dimensions use category indices, not unit coords")
    raw = param.low + u * (param.high - param.low)
    if param.kind == "int":
        return int(min(param.high, max(param.low, round(raw))))
    return float(raw)


def choice_index(param: ParameterSpec, value: Any) -> int:
    for i, c in enumerate(param.choices):
        if value == c and type(value) is type(c):
            return i
    raise ValueError(f"{value!r} not in choices of {param.name!r}")


def sample_uniform(space: SearchSpace, rng: np.random.Generator) -> dict[str, Any]:
    """Independent uniform draw per dimension; ints and choices inclusive."""
    values: dict[str, Any] = {}
    for p in space:
        if p.kind == "float":
            values[p.name] = float(rng.uniform(p.low, p.high))
        elif p.kind == "int":
            values[p.name] = int(rng.integers(int(p.low), int(p.high) + 1))
        else:
            values[p.name] = p.choices[int(rng.integers(0, len(p.choices)))]
    return values


def unit_row(space: SearchSpace, values: Mapping[str, Any]) -> np.ndarray:
    """Per-dimension coordinates: unit coords for numerics, indices for choices."""
    row = np.empty(len(space))
    for i, p in enumerate(space):
        if p.kind == "choice":
            row[i] = choice_index(p, values[p.name])
        else:
            row[i] = to_unit(p, values[p.name])
    return row


def onehot_width(space: SearchSpace) -> int:
    return sum(len(p.choices) if p.kind == "choice" else 1 for p in space)


def onehot_row(space: SearchSpace, values: Mapping[str, Any]) -> np.ndarray:
    """Feature vector with one-hot choice dims, used by the GP surrogate."""
    out = np.zeros(onehot_width(space))
    j = 0
    for p in space:
        if p.kind == "choice":
            out[j + choice_index(p, values[p.name])] = 1.0
            j += len(p.choices)
        else:
            out[j] = to_unit(p, values[p.name])
            j += 1
    return out


def values_from_units(space: SearchSpace, units: Mapping[str, float]) -> dict[str, Any]:
    """Decode per-dimension coords (unit coords / choice indices) into values."""
    values: dict[str, Any] = {}
    for p in space:
        u = units[p.name]
        if p.kind == "choice":
            idx = int(min(len(p.choices) - 1, max(0, round(u))))
            values[p.name] = p.choices[idx]
        else:
            values[p.name] = from_unit(p, u)
    return values
