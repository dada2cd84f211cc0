"""CSV ingestion and atomic, deterministic file output.

Input files are UTF-8 with a header row.  All columns except the cluster
column must parse as floats; empty cells in required columns cause the row
to be dropped with a warning count, while non-numeric garbage is an error
naming the row and column.  Output files are written to a temporary file in
the target directory and renamed into place, so readers never observe a
partial file.
"""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .dataset import PanelDataset
from .errors import DataError


@dataclass(frozen=True)
class LoadReport:
    """What load_csv did: kept rows and per-column dropped-row counts."""

    n_rows: int
    n_dropped: int
    dropped_by_column: dict


def load_csv(
    path: str,
    cluster_column: str | None = None,
    required_columns: tuple[str, ...] | None = None,
) -> tuple[PanelDataset, LoadReport]:
    """Read a CSV into a PanelDataset.

    cluster_column (kept as labels, not parsed) groups rows into clusters in
    file order; without it every row is its own cluster.  required_columns
    limits which columns must be numeric and non-missing (default: all
    non-cluster columns).  Rows missing a required value are dropped and
    counted; unparseable non-empty cells raise DataError with the location.
    """
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names in header")
        if cluster_column is not None and cluster_column not in header:
            raise DataError(f"{path}: cluster column {cluster_column!r} not in header")
        numeric_names = [h for h in header if h != cluster_column]
        required = set(required_columns) if required_columns is not None else set(numeric_names)
        missing_req = required - set(numeric_names)
        if missing_req:
            raise DataError(f"{path}: required columns {sorted(missing_req)} not in header")
        col_idx = {h: i for i, h in enumerate(header)}
        rows: list[list[float]] = []
        clusters: list = []
        dropped: dict[str, int] = {}
        n_dropped = 0
        for r, rec in enumerate(reader, start=2):  # header is line 1
            if len(rec) != len(header):
                raise DataError(f"{path}: line {r} has {len(rec)} cells, expected {len(header)}")
            vals = []
            drop_cols = []
            for name in numeric_names:
                cell = rec[col_idx[name]].strip()
                if cell == "":
                    if name in required:
                        drop_cols.append(name)
                    vals.append(np.nan)
                    continue
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: line {r}, column {name!r}: cannot parse {cell!r} as a number"
                    ) from None
            if drop_cols:
                n_dropped += 1
                for c in drop_cols:
                    dropped[c] = dropped.get(c, 0) + 1
                continue
            rows.append(vals)
            clusters.append(rec[col_idx[cluster_column]].strip() if cluster_column else r - 2)
        if not rows:
            raise DataError(f"{path}: no usable data rows")
    mat = np.array(rows, dtype=float)
    columns = {name: mat[:, j] for j, name in enumerate(numeric_names)}
    data = PanelDataset(columns, np.array(clusters, dtype=object))
    return data, LoadReport(n_rows=len(rows), n_dropped=n_dropped, dropped_by_column=dropped)


def atomic_write_text(path: str, text: str) -> None:
    """Write text to path via a temp file and rename; partial files never land."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_float(x: float) -> str:
    """Shortest round-trip decimal form, identical across runs and platforms."""
    if np.isnan(x):
        return "nan"
    return repr(float(x))


def draws_csv_text(draws: np.ndarray) -> str:
    """Draw matrix as CSV with header draw_index,stat_1,...,stat_d."""
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    d = draws.shape[1]
    lines = ["draw_index," + ",".join(f"stat_{j + 1}" for j in range(d))]
    for b in range(draws.shape[0]):
        lines.append(str(b) + "," + ",".join(format_float(v) for v in draws[b]))
    return "\n".join(lines) + "\n"


def read_draws_csv(path: str) -> np.ndarray:
    """Read a draws CSV back into a float matrix (NaN rows preserved)."""
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "draw_index":
            raise DataError(f"{path}: not a draws file (header must start with draw_index)")
        rows = []
        for rec in reader:
            rows.append([float(v) for v in rec[1:]])
    return np.array(rows, dtype=float)


def grid_csv_text(x: np.ndarray, y: np.ndarray, density: np.ndarray) -> str:
    """Flattened grid as CSV with header x,y,density (x outer, y inner)."""
    lines = ["x,y,density"]
    for i in range(len(x)):
        for j in range(len(y)):
            lines.append(
                f"{format_float(x[i])},{format_float(y[j])},{format_float(density[i, j])}"
            )
    return "\n".join(lines) + "\n"
