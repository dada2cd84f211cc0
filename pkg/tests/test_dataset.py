"""Tests for the clustered data container."""

from __future__ import annotations

import numpy as np
import pytest

from trimtest import PanelDataset, add_within_cluster_lags


@pytest.fixture
def tiny():
    return PanelDataset(
        {"v": np.array([1.0, 2.0, 3.0, 4.0, 5.0])},
        np.array(["b", "b", "a", "b", "a"]),
    )


class TestPanelDataset:
    def test_cluster_order_follows_first_appearance(self, tiny):
        assert tiny.cluster_labels == ("b", "a")
        assert tiny.n_clusters == 2
        np.testing.assert_array_equal(tiny.cluster_sizes, [3, 2])
        np.testing.assert_array_equal(tiny.row_cluster_index, [0, 0, 1, 0, 1])

    def test_row_cluster_sizes(self, tiny):
        np.testing.assert_array_equal(tiny.row_cluster_sizes, [3, 3, 2, 3, 2])

    def test_columns_read_only(self, tiny):
        with pytest.raises(ValueError):
            tiny.column("v")[0] = 9.0

    def test_column_lookup(self, tiny):
        with pytest.raises(KeyError, match="no column named"):
            tiny.column("missing")
        assert tiny.column_names == ("v",)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="length"):
            PanelDataset({"v": np.arange(3.0)}, np.zeros(4))

    def test_take_rows_makes_singleton_clusters(self, tiny):
        out = tiny.take_rows(np.array([4, 0, 0]))
        np.testing.assert_array_equal(out.column("v"), [5.0, 1.0, 1.0])
        assert out.n_clusters == 3
        np.testing.assert_array_equal(out.cluster_sizes, [1, 1, 1])

    def test_take_clusters_repeats_get_fresh_ids(self, tiny):
        out = tiny.take_clusters(np.array([1, 1, 0]))
        # Cluster "a" drawn twice: copies must count as separate clusters.
        assert out.n_clusters == 3
        np.testing.assert_array_equal(out.cluster_sizes, [2, 2, 3])
        np.testing.assert_array_equal(out.column("v"), [3.0, 5.0, 3.0, 5.0, 1.0, 2.0, 4.0])

    def test_take_clusters_range_check(self, tiny):
        with pytest.raises(IndexError):
            tiny.take_clusters(np.array([2]))

    def test_subset_rows_preserves_labels(self, tiny):
        out = tiny.subset_rows(np.array([True, False, True, False, True]))
        assert out.n_clusters == 2
        np.testing.assert_array_equal(out.column("v"), [1.0, 3.0, 5.0])

    def test_with_columns(self, tiny):
        out = tiny.with_columns({"w": np.arange(5.0)})
        assert set(out.column_names) == {"v", "w"}
        assert out.n_clusters == tiny.n_clusters


class TestWithinClusterLags:
    def test_single_lag_values(self):
        data = PanelDataset(
            {"y": np.array([1.0, 2.0, 3.0, 10.0, 20.0])},
            np.array([0, 0, 0, 1, 1]),
        )
        out = add_within_cluster_lags(data, "y", 1)
        # First row of each cluster is dropped.
        np.testing.assert_array_equal(out.column("y"), [2.0, 3.0, 20.0])
        np.testing.assert_array_equal(out.column("y_lag1"), [1.0, 2.0, 10.0])

    def test_two_lags_drop_short_clusters(self):
        data = PanelDataset(
            {"y": np.array([1.0, 2.0, 3.0, 10.0, 20.0])},
            np.array([0, 0, 0, 1, 1]),
        )
        out = add_within_cluster_lags(data, "y", 2)
        # Cluster 1 has only two rows, so nothing there survives lag 2.
        np.testing.assert_array_equal(out.column("y"), [3.0])
        np.testing.assert_array_equal(out.column("y_lag1"), [2.0])
        np.testing.assert_array_equal(out.column("y_lag2"), [1.0])

    def test_keep_incomplete_rows(self):
        data = PanelDataset({"y": np.array([1.0, 2.0])}, np.array([0, 0]))
        out = add_within_cluster_lags(data, "y", 1, drop_incomplete=False)
        assert out.n_rows == 2
        assert np.isnan(out.column("y_lag1")[0])
        assert out.column("y_lag1")[1] == 1.0

    def test_lag_never_crosses_cluster_boundary(self):
        data = PanelDataset(
            {"y": np.array([100.0, 1.0, 2.0])},
            np.array([0, 1, 1]),
        )
        out = add_within_cluster_lags(data, "y", 1)
        np.testing.assert_array_equal(out.column("y_lag1"), [1.0])

    def test_rejects_nonpositive_lags(self):
        data = PanelDataset({"y": np.array([1.0])}, np.array([0]))
        with pytest.raises(ValueError, match=">= 1"):
            add_within_cluster_lags(data, "y", 0)
