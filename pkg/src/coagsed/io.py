"""CSV tables and JSON snapshots.

Floats are written with 17 significant digits, so files are reproducible
and lossless.  Every CSV header names the unit of its column as
``name [unit]``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .discretization import State
from .grid import SizeGrid, grid_from_edges

__all__ = ["SNAPSHOT_FORMAT", "SNAPSHOT_VERSION", "Snapshot", "SnapshotError", "save_snapshot",
           "load_snapshot", "format_value", "write_csv"]

SNAPSHOT_FORMAT = "coagsed-snapshot"
SNAPSHOT_VERSION = 1


class SnapshotError(ValueError):
    pass


def format_value(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "undefined"
        return format(x, ".17g")
    if x is None:
        return ""
    return str(x)


def write_csv(path, columns, rows) -> None:
    """Write ``rows`` under a header of ``(name, unit)`` pairs."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"{name} [{unit}]" for name, unit in columns])
        for row in rows:
            if len(row) != len(columns):
                raise ValueError("row length does not match the header")
            w.writerow([format_value(v) for v in row])


@dataclass
class Snapshot:
    grid: SizeGrid
    state: State
    cumulative: dict
    version: int = SNAPSHOT_VERSION

    def __eq__(self, other):
        if not isinstance(other, Snapshot):
            return NotImplemented
        return (self.version == other.version
                and self.grid.same_as(other.grid)
                and self.state.t == other.state.t
                and np.array_equal(self.state.zeta, other.state.zeta)
                and self.cumulative.keys() == other.cumulative.keys()
                and all(self.cumulative[k] == other.cumulative[k] for k in self.cumulative))


def save_snapshot(path, snap: Snapshot) -> None:
    doc = {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        # Python's float repr round-trips exactly
        "grid": {"edges": [float(e) for e in snap.grid.edges]},
        "state": {"t": float(snap.state.t), "zeta": [float(z) for z in snap.state.zeta]},
        "cumulative": {k: float(v) for k, v in snap.cumulative.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, allow_nan=False)
        fh.write("\n")


def load_snapshot(path) -> Snapshot:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SnapshotError(f"{path}: not a JSON snapshot ({exc})") from None
    if doc.get("format") != SNAPSHOT_FORMAT:
        raise SnapshotError(f"{path}: not a {SNAPSHOT_FORMAT} file")
    if doc.get("version") != SNAPSHOT_VERSION:
        raise SnapshotError(f"{path}: unsupported snapshot version {doc.get('version')!r}")
    try:
        grid = grid_from_edges(doc["grid"]["edges"])
        zeta = np.array(doc["state"]["zeta"], dtype=float)
        t = float(doc["state"]["t"])
        cum = {k: float(v) for k, v in doc.get("cumulative", {}).items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise SnapshotError(f"{path}: malformed snapshot ({exc})") from None
    if zeta.shape != (grid.cells,):
        raise SnapshotError(f"{path}: state has {zeta.size} values for {grid.cells} cells")
    return Snapshot(grid, State(t, zeta), cum, int(doc["version"]))
