"""Run reports: deterministic JSON payloads, CSV tables, and a timing
sidecar.

``report.json`` is byte-stable for identical configs and seeds: keys are
sorted, floats serialize via ``repr``, and wall-clock measurements live in a
separate ``timing.json`` so reruns compare equal.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


def sanitize(value):
    """Recursively convert numpy scalars/arrays for JSON serialization."""
    if isinstance(value, dict):
        return {str(k): sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [sanitize(v) for v in value]
    if isinstance(value, np.ndarray):
        return [sanitize(v) for v in value.tolist()]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def dumps_deterministic(payload: dict) -> str:
    return json.dumps(sanitize(payload), sort_keys=True, indent=2) + "\n"


def mean_std(values) -> tuple[float, float]:
    """Mean and sample standard deviation (zero for fewer than two values)."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no values to summarize")
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def clamp_tc(value: float) -> float:
    """Total correlation is reported clamped at zero."""
    return max(float(value), 0.0)


def write_report(outdir, payload: dict, timing: dict | None = None) -> Path:
    """Write ``report.json`` (+ optional ``timing.json``); returns its path."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    report_path = outdir / "report.json"
    report_path.write_text(dumps_deterministic(payload))
    if timing is not None:
        (outdir / "timing.json").write_text(
            json.dumps(sanitize(timing), sort_keys=True, indent=2) + "\n"
        )
    return report_path


def write_table(path, header: list[str], rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row]
            )
    return path


def write_jsonl(path, records) -> Path:
    path = Path(path)
    with open(path, "w") as handle:
        for record in records:
            handle.write(json.dumps(sanitize(record), sort_keys=True) + "\n")
    return path
