"""Tests for the Monte Carlo data generators and sampling-distribution oracle."""

from __future__ import annotations

import numpy as np
import pytest

from trimtest import NumericalError
from trimtest.lstat import LStatSpec
from trimtest.estimators import lstat_pair_estimator
from trimtest.mc_oracle import (
    CoverageReport,
    DGPSpec,
    _child_seed,
    mc_covariance,
    residual_trim_size_analysis,
    simulate,
    size_study,
)
from trimtest.regress import RegressionModel, weighted_ols
from trimtest.weights import WeightScheme


class TestDGPSpecValidation:
    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown DGP kind"):
            DGPSpec(kind="mystery", n=10)

    def test_unknown_law(self):
        with pytest.raises(ValueError, match="unknown law"):
            DGPSpec.univariate("cauchyish", 10)

    def test_student_t_needs_heavy_moment_margin(self):
        with pytest.raises(ValueError, match="df > 2"):
            DGPSpec.univariate("student_t", 10, df=2.0)

    def test_nonpositive_n(self):
        with pytest.raises(ValueError, match="n must be"):
            DGPSpec.univariate("normal", 0)

    def test_panel_bounds(self):
        with pytest.raises(ValueError, match="t_min"):
            DGPSpec.panel(n_clusters=5, t_min=0, t_max=3)
        with pytest.raises(ValueError, match="t_min"):
            DGPSpec.panel(n_clusters=5, t_min=4, t_max=3)
        with pytest.raises(ValueError, match="n_clusters"):
            DGPSpec.panel(n_clusters=0, t_min=1, t_max=3)


class TestSimulate:
    def test_same_seed_reproduces(self):
        dgp = DGPSpec.univariate("lognormal", 200)
        a = simulate(dgp, seed=7)
        b = simulate(dgp, seed=7)
        np.testing.assert_array_equal(a.column("x"), b.column("x"))
        np.testing.assert_array_equal(a.cluster_ids, b.cluster_ids)

    def test_different_seeds_differ(self):
        dgp = DGPSpec.univariate("normal", 200)
        a = simulate(dgp, seed=1)
        b = simulate(dgp, seed=2)
        assert not np.array_equal(a.column("x"), b.column("x"))

    def test_univariate_rows_are_own_clusters(self):
        data = simulate(DGPSpec.univariate("normal", 50), seed=0)
        assert data.n_rows == 50
        assert data.n_clusters == 50

    def test_law_moments(self):
        n = 200_000
        norm = simulate(DGPSpec.univariate("normal", n, loc=2.0, scale=3.0), seed=5)
        assert norm.column("x").mean() == pytest.approx(2.0, abs=0.05)
        assert norm.column("x").std() == pytest.approx(3.0, abs=0.05)
        unif = simulate(DGPSpec.univariate("uniform", n), seed=6)
        x = unif.column("x")
        assert x.min() >= 0.0 and x.max() <= 1.0
        assert x.mean() == pytest.approx(0.5, abs=0.01)
        logn = simulate(DGPSpec.univariate("lognormal", n), seed=7)
        assert logn.column("x").min() > 0.0
        t5 = simulate(DGPSpec.univariate("student_t", n, df=5.0), seed=8)
        assert t5.column("x").mean() == pytest.approx(0.0, abs=0.05)

    def test_regression_slope_recovered(self):
        dgp = DGPSpec.linear_regression(5000, intercept=1.0, slope=0.0)
        data = simulate(dgp, seed=11)
        fit = weighted_ols(RegressionModel("y", ("x",)), data)
        se_proxy = dgp.error_scale / np.sqrt(5000 * np.var(data.column("x")))
        assert abs(fit.coef("x")) < 3.0 * se_proxy

    def test_instrumented_regression_has_correlated_instrument(self):
        dgp = DGPSpec.linear_regression(20_000, instrument_strength=0.6)
        data = simulate(dgp, seed=13)
        assert "z" in data.columns
        r = np.corrcoef(data.column("z"), data.column("x"))[0, 1]
        assert r == pytest.approx(0.6, abs=0.05)

    def test_uninstrumented_regression_has_no_z(self):
        data = simulate(DGPSpec.linear_regression(100), seed=1)
        assert "z" not in data.columns

    def test_panel_shape(self):
        dgp = DGPSpec.panel(n_clusters=40, t_min=3, t_max=8)
        data = simulate(dgp, seed=21)
        assert data.n_clusters == 40
        sizes = data.cluster_sizes
        assert sizes.min() >= 3 and sizes.max() <= 8
        assert "period" in data.columns
        # Periods restart from zero inside every cluster.
        for c in range(40):
            mask = data.row_cluster_index == c
            np.testing.assert_array_equal(
                data.column("period")[mask], np.arange(mask.sum(), dtype=float)
            )


class TestChildSeed:
    def test_deterministic(self):
        assert _child_seed(42, 3) == _child_seed(42, 3)

    def test_distinct_across_reps(self):
        seeds = {_child_seed(42, r) for r in range(200)}
        assert len(seeds) == 200

    def test_distinct_across_masters(self):
        assert _child_seed(1, 0) != _child_seed(2, 0)


def _mean_estimator(data, row_weights):
    x = data.column("x")
    return np.array([float(np.sum(x * row_weights) / np.sum(row_weights))])


class TestMcCovariance:
    def test_deterministic(self):
        dgp = DGPSpec.univariate("normal", 60)
        cov1, mean1 = mc_covariance(dgp, _mean_estimator, reps=50, seed=9)
        cov2, mean2 = mc_covariance(dgp, _mean_estimator, reps=50, seed=9)
        np.testing.assert_array_equal(cov1, cov2)
        np.testing.assert_array_equal(mean1, mean2)

    def test_scaling_matches_clt_for_mean(self):
        # For an iid normal mean, n * Var(mean) = scale^2 exactly in
        # expectation; with 4000 replications the MC error is about 2%.
        dgp = DGPSpec.univariate("normal", 250, scale=2.0)
        cov, mean = mc_covariance(dgp, _mean_estimator, reps=4000, seed=17)
        assert mean[0] == pytest.approx(0.0, abs=0.05)
        assert cov[0, 0] == pytest.approx(4.0, rel=0.1)

    def test_symmetry_and_shape(self):
        dgp = DGPSpec.univariate("normal", 80)
        est = lstat_pair_estimator(
            [LStatSpec("x")],
            [LStatSpec("x", scheme=WeightScheme.quantile_trim("x", 0.05, 0.95))],
        )
        cov, mean = mc_covariance(dgp, est, reps=60, seed=3)
        assert cov.shape == (2, 2)
        assert mean.shape == (2,)
        np.testing.assert_array_equal(cov, cov.T)

    def test_failed_replications_abort(self):
        def flaky(data, row_weights):
            raise ValueError("always broken")

        with pytest.raises(NumericalError, match="failed"):
            mc_covariance(DGPSpec.univariate("normal", 20), flaky, reps=30, seed=1)


class TestSizeStudy:
    def test_counts_rejections_exactly(self):
        # Deterministic analysis: reject iff the rep seed is even.
        seen = []

        def analysis(data, rep_seed):
            seen.append(rep_seed)
            return rep_seed % 2 == 0

        report = size_study(
            DGPSpec.univariate("normal", 10), analysis, reps=40, seed=123, alpha=0.05
        )
        assert isinstance(report, CoverageReport)
        assert report.reps == 40
        assert report.alpha == 0.05
        assert report.h == 0.0
        expected = sum(1 for s in seen if s % 2 == 0)
        assert report.rejections == expected
        assert report.rate == pytest.approx(expected / 40)

    def test_std_error_formula(self):
        def always(data, rep_seed):
            return True

        report = size_study(
            DGPSpec.univariate("normal", 5), always, reps=25, seed=0, alpha=0.05
        )
        assert report.rate == 1.0
        # Degenerate observed rate falls back to the nominal-level binomial SE.
        assert report.std_error == pytest.approx(np.sqrt(0.05 * 0.95 / 25))

        def half(data, rep_seed):
            return rep_seed % 2 == 0

        rep2 = size_study(
            DGPSpec.univariate("normal", 5), half, reps=64, seed=5, alpha=0.05
        )
        p = rep2.rate
        assert 0.0 < p < 1.0
        assert rep2.std_error == pytest.approx(np.sqrt(p * (1 - p) / 64))

    def test_rep_seeds_match_child_seed(self):
        captured = []

        def analysis(data, rep_seed):
            captured.append(rep_seed)
            return False

        size_study(
            DGPSpec.univariate("normal", 5), analysis, reps=6, seed=77, alpha=0.05
        )
        assert captured == [_child_seed(77, r) for r in range(6)]


class TestResidualTrimSizeAnalysis:
    def test_returns_boolean_decision(self):
        analysis = residual_trim_size_analysis(multiplier=1.96, inner_iterations=59)
        dgp = DGPSpec.linear_regression(120, slope=0.5)
        data = simulate(dgp, seed=31)
        out = analysis(data, rep_seed=31)
        assert out in (True, False)

    def test_decision_is_seed_deterministic(self):
        analysis = residual_trim_size_analysis(inner_iterations=59)
        data = simulate(DGPSpec.linear_regression(150, slope=1.0), seed=8)
        assert analysis(data, rep_seed=4) == analysis(data, rep_seed=4)
