"""Clustered rectangular data container used by every pipeline stage.

A PanelDataset is a set of named numeric columns plus a cluster label per
row.  Rows belonging to one cluster stay contiguous in file order, and the
cluster order follows first appearance.  Resampling a cluster twice yields
two distinct clusters in the resampled dataset, so per-cluster statistics
(sizes, normalizations) treat the copies independently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


def _factorize_first_appearance(ids: np.ndarray) -> tuple[tuple, np.ndarray]:
    """Labels in first-appearance order and the per-row cluster ordinal.

    Integer labels go through a vectorized path; anything else (file labels
    are strings) falls back to a dictionary scan.  Bootstrap resamples hit
    this on every draw, so the integer path matters.
    """
    if ids.dtype.kind in "iu":
        uniq, first, inv = np.unique(ids, return_index=True, return_inverse=True)
        by_appearance = np.argsort(first, kind="stable")
        rank = np.empty(len(uniq), dtype=np.intp)
        rank[by_appearance] = np.arange(len(uniq))
        return tuple(uniq[by_appearance].tolist()), rank[inv.ravel()]
    order: dict = {}
    row_ci = np.empty(len(ids), dtype=np.intp)
    for r, label in enumerate(ids):
        key = label.item() if hasattr(label, "item") else label
        if key not in order:
            order[key] = len(order)
        row_ci[r] = order[key]
    return tuple(order.keys()), row_ci


@dataclass(frozen=True)
class PanelDataset:
    """Immutable table of float columns with a cluster structure.

    Parameters
    ----------
    columns : dict of str -> ndarray
        Aligned float arrays, one per column name.
    cluster_ids : ndarray
        Per-row cluster label (any hashable dtype).  Clusters are ordered by
        first appearance; rows within a cluster keep their input order.
    """

    columns: dict[str, np.ndarray]
    cluster_ids: np.ndarray
    cluster_labels: tuple = field(init=False, repr=False)
    row_cluster_index: np.ndarray = field(init=False, repr=False)
    _sizes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ids = np.asarray(self.cluster_ids)
        n = len(ids)
        cols = {k: _readonly(np.asarray(v, dtype=float)) for k, v in self.columns.items()}
        for name, v in cols.items():
            if v.ndim != 1 or len(v) != n:
                raise ValueError(f"column {name!r} is not a 1-d array of length {n}")
        labels, row_ci = _factorize_first_appearance(ids)
        sizes = np.bincount(row_ci, minlength=len(labels)).astype(np.intp)
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "cluster_ids", _readonly(ids))
        object.__setattr__(self, "cluster_labels", labels)
        object.__setattr__(self, "row_cluster_index", _readonly(row_ci))
        object.__setattr__(self, "_sizes", _readonly(sizes))

    @property
    def n_rows(self) -> int:
        return len(self.cluster_ids)

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_labels)

    @cached_property
    def _rows_by_cluster(self) -> np.ndarray:
        """Row indices grouped by cluster: block c is cluster c's rows in order."""
        return _readonly(np.argsort(self.row_cluster_index, kind="stable"))

    @cached_property
    def _offsets(self) -> np.ndarray:
        """Start of each cluster's block inside _rows_by_cluster."""
        return _readonly(np.cumsum(self._sizes) - self._sizes)

    @cached_property
    def cluster_rows(self) -> tuple:
        if self.n_clusters == 0:
            return ()
        bounds = np.cumsum(self._sizes[:-1])
        return tuple(
            _readonly(part) for part in np.split(self._rows_by_cluster, bounds)
        )

    @property
    def cluster_sizes(self) -> np.ndarray:
        return self._sizes

    @property
    def row_cluster_sizes(self) -> np.ndarray:
        """Size of the cluster each row belongs to, per row."""
        return self._sizes[self.row_cluster_index]

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise KeyError(f"no column named {name!r}")
        return self.columns[name]

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(self.columns)

    def take_rows(self, indices: np.ndarray) -> "PanelDataset":
        """New dataset from row indices; each taken row becomes its own cluster."""
        indices = np.asarray(indices, dtype=np.intp)
        cols = {k: v[indices] for k, v in self.columns.items()}
        return PanelDataset(cols, np.arange(len(indices)))

    def take_clusters(self, ordinals: np.ndarray) -> "PanelDataset":
        """New dataset from cluster ordinals, repeats allowed.

        Each drawn cluster (including repeated draws of the same source
        cluster) gets a fresh id, so the resample has len(ordinals) clusters.
        Row blocks are exact copies of the source cluster rows.
        """
        ordinals = np.asarray(ordinals, dtype=np.intp)
        if len(ordinals) and (ordinals.min() < 0 or ordinals.max() >= self.n_clusters):
            raise IndexError("cluster ordinal out of range")
        sizes = self._sizes[ordinals]
        new_ids = np.repeat(np.arange(len(ordinals)), sizes)
        # position of each output row inside its drawn cluster's block
        out_starts = np.cumsum(sizes) - sizes
        within = np.arange(int(sizes.sum())) - np.repeat(out_starts, sizes)
        rows = self._rows_by_cluster[np.repeat(self._offsets[ordinals], sizes) + within]
        cols = {k: v[rows] for k, v in self.columns.items()}
        return PanelDataset(cols, new_ids)

    def subset_rows(self, mask: np.ndarray) -> "PanelDataset":
        """Keep rows where mask is True; cluster labels are preserved."""
        mask = np.asarray(mask, dtype=bool)
        cols = {k: v[mask] for k, v in self.columns.items()}
        return PanelDataset(cols, np.asarray(self.cluster_ids)[mask])

    def with_columns(self, extra: dict[str, np.ndarray]) -> "PanelDataset":
        cols = dict(self.columns)
        cols.update(extra)
        return PanelDataset(cols, self.cluster_ids)


def add_within_cluster_lags(
    data: PanelDataset, column: str, lags: int, drop_incomplete: bool = True
) -> PanelDataset:
    """Append lagged copies of a column, shifting within each cluster.

    Lag k of row t inside a cluster is the value at row t-k of the same
    cluster; the first k rows of each cluster have no lag-k value.  With
    drop_incomplete=True the rows missing any requested lag are removed.
    New columns are named `{column}_lag{k}`.
    """
    if lags < 1:
        raise ValueError("lags must be >= 1")
    base = data.column(column)
    n = data.n_rows
    lag_cols = {}
    valid = np.ones(n, dtype=bool)
    for k in range(1, lags + 1):
        out = np.full(n, np.nan)
        for rows in data.cluster_rows:
            if len(rows) > k:
                out[rows[k:]] = base[rows[:-k]]
        lag_cols[f"{column}_lag{k}"] = out
        valid &= np.isfinite(out)
    result = data.with_columns(lag_cols)
    if drop_incomplete:
        result = result.subset_rows(valid)
    return result
