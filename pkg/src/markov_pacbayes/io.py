"""Text, JSON and CSV formats used by the command line.

Kernel files hold ``d`` on the first line followed by ``d`` rows of ``d``
numbers. Trajectory files hold one 1-based state per line with an optional
0/1 label column. Files are 1-based; everything in memory is 0-based.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .exceptions import DimensionMismatch, StateOutOfRange, ValidationError
from .markov_core import TransitionMatrix, Trajectory, validate_kernel


def read_kernel(path) -> TransitionMatrix:
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValidationError(f"{path}: empty kernel file")
    try:
        d = int(lines[0][0])
        rows = [[float(x) for x in ln] for ln in lines[1:]]
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    if len(lines[0]) != 1 or len(rows) != d or any(len(r) != d for r in rows):
        raise DimensionMismatch(f"{path}: expected {d} rows of {d} entries after the header")
    return validate_kernel(np.array(rows), kernel_id=Path(path).stem)


def write_kernel(P, path) -> None:
    M = np.asarray(P)
    body = "\n".join(" ".join(f"{x:.17g}" for x in row) for row in M)
    Path(path).write_text(f"{M.shape[0]}\n{body}\n")


def read_trajectory(path, d: Optional[int] = None) -> Trajectory:
    states, labels = [], []
    for i, ln in enumerate(Path(path).read_text().splitlines(), 1):
        parts = ln.split()
        if not parts:
            continue
        if len(parts) > 2:
            raise ValidationError(f"{path}:{i}: expected 'state [label]'")
        try:
            states.append(int(parts[0]))
            if len(parts) == 2:
                labels.append(int(parts[1]))
        except ValueError as exc:
            raise ValidationError(f"{path}:{i}: {exc}") from None
    if not states:
        raise ValidationError(f"{path}: empty trajectory")
    if labels and len(labels) != len(states):
        raise ValidationError(f"{path}: label column present on some lines only")
    s = np.asarray(states, dtype=np.int64) - 1
    if s.min() < 0 or (d is not None and s.max() >= d):
        raise StateOutOfRange(f"{path}: states must lie in 1..{d if d is not None else 'd'}")
    y = np.asarray(labels, dtype=np.int64) if labels else None
    if y is not None and not np.isin(y, (0, 1)).all():
        raise ValidationError(f"{path}: labels must be 0 or 1")
    return Trajectory(s, labels=y, kernel_id=Path(path).stem)


def write_trajectory(traj: Trajectory, path) -> None:
    s = np.asarray(traj.states) + 1
    if traj.labels is None:
        text = "\n".join(map(str, s))
    else:
        text = "\n".join(f"{a} {b}" for a, b in zip(s, traj.labels))
    Path(path).write_text(text + "\n")


def read_scenario(path) -> dict:
    """Scenario JSON ``{d, kernel, label_probs, p, q, t}``; every key optional."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: scenario must be a JSON object")
    unknown = set(data) - {"d", "kernel", "label_probs", "p", "q", "t"}
    if unknown:
        raise ValidationError(f"{path}: unknown scenario keys {sorted(unknown)}")
    if "kernel" in data:
        K = validate_kernel(np.asarray(data["kernel"], dtype=float))
        if data.setdefault("d", K.d) != K.d:
            raise DimensionMismatch(f"{path}: d={data['d']} but kernel has {K.d} states")
    return data


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{float(v):.17g}"
    return str(v)


def csv_text(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(r[c]) for c in columns])
    return buf.getvalue()


def read_csv(path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
