"""CSV datasets and run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .core import Dataset

__all__ = [
    "CsvFormatError",
    "read_csv_dataset",
    "write_csv_dataset",
    "file_digest",
    "RunManifest",
]

_COLUMN = re.compile(r"^([xy])(\d+)$")


class CsvFormatError(ValueError):
    """Malformed dataset file; the message starts with ``path:line:``."""


def read_csv_dataset(path: str | Path) -> Dataset:
    """Load a dataset with header ``x0..x{d-1}, y0..y{k-1}`` (any column order)."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}:1: empty file") from None
        xs, ys = {}, {}
        for col, name in enumerate(header):
            hit = _COLUMN.match(name.strip())
            if not hit:
                raise CsvFormatError(f"{path}:1: unexpected column {name!r}; "
                                     f"use x0, x1, ... and y0, y1, ...")
            target = xs if hit.group(1) == "x" else ys
            k = int(hit.group(2))
            if k in target:
                raise CsvFormatError(f"{path}:1: duplicate column {name!r}")
            target[k] = col
        for label, cols in (("x", xs), ("y", ys)):
            if not cols:
                raise CsvFormatError(f"{path}:1: no {label} columns")
            if sorted(cols) != list(range(len(cols))):
                raise CsvFormatError(f"{path}:1: {label} columns must be numbered from 0 "
                                     f"without gaps")
        xcols = [xs[k] for k in range(len(xs))]
        ycols = [ys[k] for k in range(len(ys))]
        X, Y = [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise CsvFormatError(f"{path}:{line}: expected {len(header)} fields, "
                                     f"got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise CsvFormatError(f"{path}:{line}: {exc}") from None
            if not all(np.isfinite(vals)):
                raise CsvFormatError(f"{path}:{line}: non-finite value")
            X.append([vals[c] for c in xcols])
            Y.append([vals[c] for c in ycols])
    if len(X) < 2:
        raise CsvFormatError(f"{path}: need at least two data rows, found {len(X)}")
    return Dataset(np.array(X), np.array(Y))


def write_csv_dataset(path: str | Path, dataset: Dataset) -> None:
    """Write with 17 significant digits so that reading back is exact."""
    header = [f"x{k}" for k in range(dataset.dim_x)] + [f"y{k}" for k in range(dataset.dim_y)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for x, y in zip(dataset.points, dataset.responses):
            w.writerow([f"{v:.17g}" for v in (*x, *y)])


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """Record of one CLI invocation, written as ``manifest.json``."""

    subcommand: str
    config: dict
    seed: int | None
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    started: str = field(default_factory=_now)
    finished: str | None = None

    def add_input(self, path: str | Path):
        self.inputs[str(path)] = file_digest(path)

    def add_output(self, path: str | Path):
        self.outputs.append(str(path))

    def write(self, out_dir: str | Path) -> Path:
        self.finished = _now()
        target = Path(out_dir) / "manifest.json"
        payload = {
            "subcommand": self.subcommand,
            "config": self.config,
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "started": self.started,
            "finished": self.finished,
            "versions": {
                "equitest": __version__,
                "numpy": np.__version__,
            },
        }
        target.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n",
                          encoding="utf-8")
        return target
