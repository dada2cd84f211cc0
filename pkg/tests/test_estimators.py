"""Tests for the pair-estimator builders used by the bootstrap."""

from __future__ import annotations

import numpy as np
import pytest

from trimtest import PanelDataset
from trimtest.estimators import (
    RegressionComparison,
    difference_covariance,
    lstat_pair_estimator,
    regression_comparison_estimator,
    split_pair_draws,
)
from trimtest.lstat import LStatSpec
from trimtest.regress import RegressionModel, weighted_ols
from trimtest.weights import ResidualContext, WeightScheme, compute_weights

from conftest import make_panel


class TestLstatPairEstimator:
    def test_stacks_baseline_then_adjusted(self):
        data = PanelDataset({"v": np.array([1.0, 2.0, 100.0])}, np.arange(3))
        est = lstat_pair_estimator(
            [LStatSpec("v")],
            [LStatSpec("v", scheme=WeightScheme.winsorize("v", 0.0, 2.0 / 3.0))],
        )
        out = est(data, np.ones(3))
        np.testing.assert_allclose(out, [np.mean([1.0, 2.0, 100.0]), 5.0 / 3.0])

    def test_row_weights_shift_trim_thresholds(self):
        data = PanelDataset({"v": np.array([1.0, 2.0, 3.0, 4.0])}, np.arange(4))
        est = lstat_pair_estimator(
            [LStatSpec("v")],
            [LStatSpec("v", scheme=WeightScheme.quantile_trim("v", 0.0, 0.75))],
        )
        plain = est(data, np.ones(4))
        # Up-weighting the largest value moves the 75% threshold to 4.0,
        # so nothing is trimmed in the adjusted statistic. The estimate keeps
        # the fixed 1/n normalization, so the multipliers scale contributions.
        heavy_top = est(data, np.array([1.0, 1.0, 1.0, 3.0]))
        assert plain[1] == pytest.approx((1.0 + 2.0 + 3.0) / 4.0)
        assert heavy_top[1] == pytest.approx((1.0 + 2.0 + 3.0 + 3.0 * 4.0) / 4.0)


class TestRegressionComparison:
    def test_labels_without_derived(self):
        comp = RegressionComparison(
            model=RegressionModel("y", ("x", "w")), report_coefficients=("x",)
        )
        assert comp.stat_labels() == ("x",)
        assert comp.dim == 1

    def test_labels_with_derived(self):
        comp = RegressionComparison(
            model=RegressionModel("y", ("d", "l1")),
            report_coefficients=("d",),
            derived_effect="d",
            derived_lags=("l1",),
            derived_horizon=10,
        )
        assert comp.stat_labels() == ("d", "long_run_effect", "effect_after_10", "persistence")

    def test_defaults_to_all_regressors(self):
        comp = RegressionComparison(model=RegressionModel("y", ("a", "b")))
        assert comp.coefficient_list() == ("a", "b")


class TestRegressionComparisonEstimator:
    def test_baseline_half_matches_plain_ols(self, panel):
        comp = RegressionComparison(
            model=RegressionModel("y", ("x",)), report_coefficients=("x",)
        )
        est = regression_comparison_estimator(comp)
        out = est(panel, np.ones(panel.n_rows))
        fit = weighted_ols(RegressionModel("y", ("x",)), panel)
        assert out[0] == pytest.approx(fit.coef("x"), abs=1e-13)
        assert len(out) == 2

    def test_adjusted_half_recomputes_residual_context(self, panel):
        comp = RegressionComparison(
            model=RegressionModel("y", ("x",)),
            adjusted_scheme=WeightScheme.residual_trim(1.0),
            report_coefficients=("x",),
        )
        est = regression_comparison_estimator(comp)
        out = est(panel, np.ones(panel.n_rows))
        # Manual reconstruction of the adjusted side.
        base = weighted_ols(RegressionModel("y", ("x",)), panel)
        ctx = ResidualContext(base.residuals, base.sigma)
        w = compute_weights(WeightScheme.residual_trim(1.0), panel, ctx)
        assert 0 < w.sum() < panel.n_rows  # the trim actually bites
        refit = weighted_ols(RegressionModel("y", ("x",)), panel, weights=w)
        assert out[1] == pytest.approx(refit.coef("x"), abs=1e-13)

    def test_derived_summaries_appended_per_side(self):
        data = make_panel(40, 6, seed=3)
        from trimtest.dataset import add_within_cluster_lags

        lagged = add_within_cluster_lags(data, "y", 1)
        comp = RegressionComparison(
            model=RegressionModel("y", ("x", "y_lag1")),
            report_coefficients=("x",),
            derived_effect="x",
            derived_lags=("y_lag1",),
        )
        est = regression_comparison_estimator(comp)
        out = est(lagged, np.ones(lagged.n_rows))
        assert len(out) == 8  # 4 stats per side
        fit = weighted_ols(RegressionModel("y", ("x", "y_lag1")), lagged)
        expected_long_run = fit.coef("x") / (1.0 - fit.coef("y_lag1"))
        assert out[1] == pytest.approx(expected_long_run, rel=1e-12)
        assert out[3] == pytest.approx(fit.coef("y_lag1"), rel=1e-12)


class TestDrawHelpers:
    def test_split_pair_draws(self, rng):
        draws = rng.normal(size=(10, 6))
        a, b = split_pair_draws(draws, 3)
        np.testing.assert_array_equal(a, draws[:, :3])
        np.testing.assert_array_equal(b, draws[:, 3:])
        with pytest.raises(ValueError, match="expected 4"):
            split_pair_draws(draws, 2)

    def test_difference_covariance_formula(self, rng):
        m = rng.normal(size=(4, 4))
        cov = m @ m.T
        out = difference_covariance(cov, 2)
        expected = cov[:2, :2] + cov[2:, 2:] - cov[:2, 2:] - cov[2:, :2]
        np.testing.assert_allclose(out, expected)

    def test_difference_covariance_matches_draw_differences(self, rng):
        # End-to-end identity: cov of (a - b) equals the blockwise formula.
        a = rng.normal(size=(500, 2))
        b = 0.5 * a + rng.normal(size=(500, 2))
        stacked = np.hstack([a, b])
        full = np.cov(stacked, rowvar=False, ddof=1)
        direct = np.cov(a - b, rowvar=False, ddof=1)
        np.testing.assert_allclose(difference_covariance(full, 2), direct, atol=1e-12)
