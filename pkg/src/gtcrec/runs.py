"""Run directories and text artifact writers.

All floats are written with repr so identical computations produce
byte-identical files.
"""

from __future__ import annotations

import os
import time
from pathlib import Path

from .trainer import TRACE_COLUMNS

RUNS_DIR_ENV = "GTC_RUNS_DIR"


def runs_root(explicit: str | None = None) -> Path:
    if explicit:
        return Path(explicit)
    return Path(os.environ.get(RUNS_DIR_ENV, "runs"))


def create_run_dir(label: str, root: str | None = None) -> Path:
    """Timestamped directory under the runs root; suffixing avoids collisions."""
    base = runs_root(root)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    candidate = base / f"{stamp}-{label}"
    n = 1
    while candidate.exists():
        candidate = base / f"{stamp}-{label}-{n}"
        n += 1
    candidate.mkdir(parents=True)
    return candidate


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def write_metrics_log(path, trace: list[dict]) -> None:
    """Per-epoch comma-separated training log."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for row in trace:
            fh.write(",".join(_fmt(row[c]) for c in TRACE_COLUMNS) + "\n")


def write_two_column(path, xs, ys, x_name: str, y_name: str) -> None:
    """Plain `x y` lines with a single comment header, plotter-agnostic."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {x_name} {y_name}\n")
        for x, y in zip(xs, ys):
            fh.write(f"{_fmt(x)} {_fmt(y)}\n")


def read_two_column(path) -> tuple[list[float], list[float]]:
    xs, ys = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            x, y = line.split()
            xs.append(float(x))
            ys.append(float(y))
    return xs, ys
