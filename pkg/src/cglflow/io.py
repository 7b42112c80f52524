"""Time-series CSV files and run manifests."""

from __future__ import annotations

import csv
import json
import math
import platform
from pathlib import Path

import numpy as np

from .diagnostics import DiagnosticsRecord

__all__ = ["CSV_COLUMNS", "csv_columns", "record_row", "write_timeseries", "read_timeseries",
           "write_summary", "write_manifest", "read_manifest"]

CSV_COLUMNS = ("t", "mass", "kinetic", "potential", "energy", "K", "s_accum", "sup_abs",
               "bubble_lambda", "bubble_cx", "bubble_cy", "bubble_cz", "boundary_mass_frac")


def csv_columns(d: int = 3) -> tuple:
    """Column order; d = 4 appends the fourth centre coordinate at the end."""
    return CSV_COLUMNS + ("bubble_c4",) if d == 4 else CSV_COLUMNS


def _fmt(x) -> str:
    if x is None:
        return ""
    return format(float(x), ".17g")


def record_row(rec: DiagnosticsRecord, d: int = 3) -> list[str]:
    center = rec.bubble_center if rec.bubble_center is not None else (None,) * d
    row = [rec.t, rec.mass, rec.kinetic, rec.potential, rec.energy, rec.k_functional,
           rec.s_accumulator, rec.sup_abs, rec.bubble_lambda, *center[:3],
           rec.boundary_mass_fraction]
    if d == 4:
        row.append(center[3])
    return [_fmt(v) for v in row]


class TimeSeriesWriter:
    """Incremental CSV writer usable as an integrator observer."""

    def __init__(self, path, d: int = 3):
        self.path = Path(path)
        self.d = d
        self._fh = open(self.path, "w", newline="", encoding="utf-8")
        self._w = csv.writer(self._fh)
        self._w.writerow(csv_columns(d))
        self.rows = 0

    def write(self, rec: DiagnosticsRecord):
        self._w.writerow(record_row(rec, self.d))
        self.rows += 1

    def __call__(self, state, rec):
        self.write(rec)

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_timeseries(path, records, d: int = 3) -> Path:
    with TimeSeriesWriter(path, d) as w:
        for rec in records:
            w.write(rec)
    return Path(path)


def read_timeseries(path) -> dict[str, np.ndarray]:
    """Columns as float arrays; empty cells come back as NaN."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    out = {}
    for j, name in enumerate(header):
        out[name] = np.array([float(r[j]) if r[j] != "" else math.nan for r in rows])
    return out


def write_summary(path, rows: list[dict]) -> Path:
    path = Path(path)
    if not rows:
        path.write_text("", encoding="utf-8")
        return path
    keys = list(rows[0])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if v is None else format(v, ".17g") if isinstance(v, float) else v)
                        for k, v in row.items()})
    return path


def write_manifest(path, config: dict, command: str, wall_time: float, outcome: dict) -> Path:
    from . import __version__

    doc = {
        "command": command,
        "code_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "wall_time_s": wall_time,
        "outcome": outcome,
        "config": config,
    }
    path = Path(path)
    path.write_text(json.dumps(doc, indent=2, sort_keys=False, default=_jsonable) + "\n", encoding="utf-8")
    return path


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
