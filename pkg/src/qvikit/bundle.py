"""Result bundles: one directory holding result.json plus CSV payloads.

Bundles are staged in a temporary sibling directory and moved into place
with a rename, so an interrupted run never leaves a partial bundle.
"""
from __future__ import annotations

import csv
import json
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import QVIError
from .grid import GridSpec
from .order_lattice import GridFunction

RESULT_FILE = "result.json"


class IoError(QVIError, OSError):
    pass


def _fmt(x: float) -> str:
    return "%.17g" % x


def export_grid_function(gf: GridFunction, path) -> None:
    """CSV with header index,x[,y],value; 17 significant digits; node order."""
    coords = gf.grid.coordinates
    names = ["x", "y"][: gf.grid.dim]
    try:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(["index", *names, "value"]) + "\n")
            for i, (c, v) in enumerate(zip(coords, gf.values)):
                fh.write(",".join([str(i), *(_fmt(ci) for ci in c), _fmt(v)]) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def import_grid_function(path, grid: GridSpec) -> GridFunction:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    header = ["index", *["x", "y"][: grid.dim], "value"]
    if not rows or rows[0] != header:
        raise IoError(f"{path}: expected header {','.join(header)}")
    body = rows[1:]
    if len(body) != grid.size:
        raise IoError(f"{path}: {len(body)} rows for a grid with {grid.size} unknowns")
    if [int(r[0]) for r in body] != list(range(grid.size)):
        raise IoError(f"{path}: rows are not in node index order")
    return GridFunction(np.array([float(r[-1]) for r in body]), grid)


def write_table(rows: list[dict], path) -> None:
    """Small CSV table; floats in 17-digit form, column order from the first row."""
    if not rows:
        Path(path).write_text("")
        return
    cols = list(rows[0])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(r[c]) if isinstance(r[c], float) else str(r[c])
                              for c in cols) + "\n")


def read_table(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


@dataclass
class ResultBundle:
    """In-memory bundle; nothing touches disk until :meth:`write`."""

    config_echo: dict
    reports: dict = field(default_factory=dict)
    grid_functions: dict[str, GridFunction] = field(default_factory=dict)
    tables: dict[str, list[dict]] = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    passed: bool = True

    def document(self) -> dict:
        return _jsonable({
            "config_echo": self.config_echo,
            "reports": self.reports,
            "passed": self.passed,
            "grid_functions": {k: f"{k}.csv" for k in sorted(self.grid_functions)},
            "tables": {k: f"{k}.csv" for k in sorted(self.tables)},
            "provenance": self.provenance,
        })

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        if out.exists() and any(out.iterdir()) and not (out / RESULT_FILE).is_file():
            raise IoError(f"{out} exists and is not a result bundle; refusing to replace it")
        out.parent.mkdir(parents=True, exist_ok=True)
        stage = Path(tempfile.mkdtemp(prefix=f".{out.name}.tmp-", dir=out.parent))
        try:
            for name, gf in sorted(self.grid_functions.items()):
                export_grid_function(gf, stage / f"{name}.csv")
            for name, rows in sorted(self.tables.items()):
                write_table(rows, stage / f"{name}.csv")
            with open(stage / RESULT_FILE, "w") as fh:
                json.dump(self.document(), fh, indent=2, sort_keys=True)
                fh.write("\n")
            if out.exists():
                old = out.with_name(f".{out.name}.old-{os.getpid()}")
                os.rename(out, old)
                os.rename(stage, out)
                shutil.rmtree(old, ignore_errors=True)
            else:
                os.rename(stage, out)
        except OSError as exc:
            shutil.rmtree(stage, ignore_errors=True)
            raise IoError(f"cannot write bundle {out}: {exc}") from exc
        except BaseException:
            shutil.rmtree(stage, ignore_errors=True)
            raise
        return out


def read_bundle(out_dir) -> dict:
    path = Path(out_dir) / RESULT_FILE
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    for group in ("grid_functions", "tables"):
        for name in doc.get(group, {}).values():
            if not (Path(out_dir) / name).is_file():
                raise IoError(f"bundle references missing file {name}")
    return doc
