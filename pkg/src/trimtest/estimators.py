"""Estimator callables for the bootstrap pipeline.

Each builder returns a function f(dataset, row_weights) -> vector that
recomputes everything data-dependent from scratch: weight-scheme thresholds
come from the dataset it is handed (the resample), residual scales come from
a fresh baseline fit on that resample, and derived dynamic parameters are
recomputed from the fresh coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import PanelDataset
from .lstat import LStatSpec, lstat_eval
from .regress import RegressionModel, RegressionFit, derived_params, fit_model
from .weights import ResidualContext, WeightScheme, compute_weights


def lstat_pair_estimator(specs_baseline: list[LStatSpec], specs_adjusted: list[LStatSpec]):
    """Estimator returning [baseline stats..., adjusted stats...]."""

    def estimate(data: PanelDataset, row_weights: np.ndarray) -> np.ndarray:
        out = [lstat_eval(s, data, row_weights=row_weights) for s in specs_baseline]
        out += [lstat_eval(s, data, row_weights=row_weights) for s in specs_adjusted]
        return np.array(out)

    return estimate


@dataclass(frozen=True)
class RegressionComparison:
    """A baseline fit, an adjusted fit, and which coefficients to report.

    The adjusted scheme may be residual_trim (thresholds from the baseline
    fit's residuals and scale on the current data) or any data-only scheme.
    derived_effect/derived_lags, when set, append the dynamic summaries
    (long-run effect, effect at the horizon, persistence) for each side.
    """

    model: RegressionModel
    baseline_scheme: WeightScheme = field(default_factory=WeightScheme.all_ones)
    adjusted_scheme: WeightScheme = field(default_factory=WeightScheme.residual_trim)
    report_coefficients: tuple[str, ...] = ()
    derived_effect: str = ""
    derived_lags: tuple[str, ...] = ()
    derived_horizon: int = 25

    def coefficient_list(self) -> tuple[str, ...]:
        return self.report_coefficients or self.model.regressors

    def stat_labels(self) -> tuple[str, ...]:
        labels = list(self.coefficient_list())
        if self.derived_effect:
            labels += ["long_run_effect", f"effect_after_{self.derived_horizon}", "persistence"]
        return tuple(labels)

    @property
    def dim(self) -> int:
        return len(self.stat_labels())


def _side_vector(comparison: RegressionComparison, fit: RegressionFit) -> list[float]:
    vals = [fit.coef(c) for c in comparison.coefficient_list()]
    if comparison.derived_effect:
        dp = derived_params(
            fit.coef(comparison.derived_effect),
            [fit.coef(c) for c in comparison.derived_lags],
            comparison.derived_horizon,
        )
        vals += [dp.long_run_effect, dp.effect_at_horizon, dp.persistence]
    return vals


def regression_comparison_estimator(comparison: RegressionComparison):
    """Estimator returning [baseline coefficients..., adjusted coefficients...].

    Baseline fit first (with its scheme's weights), residual context built
    from that fit, then the adjusted fit with the adjusted scheme's weights.
    All on the dataset passed in, so a bootstrap draw recomputes thresholds
    and scales on the resample.
    """

    def estimate(data: PanelDataset, row_weights: np.ndarray) -> np.ndarray:
        rho = None if row_weights is None or np.all(row_weights == 1.0) else row_weights
        w_base = compute_weights(comparison.baseline_scheme, data, row_weights=rho)
        base_fit = fit_model(comparison.model, data, w_base, rho)
        ctx = ResidualContext(
            residuals=base_fit.residuals,
            scale=base_fit.sigma,
            first_stage_residuals=base_fit.first_stage_residuals,
            first_stage_scales=base_fit.first_stage_sigmas,
        )
        w_adj = compute_weights(comparison.adjusted_scheme, data, ctx, rho)
        adj_fit = fit_model(comparison.model, data, w_adj, rho)
        return np.array(_side_vector(comparison, base_fit) + _side_vector(comparison, adj_fit))

    return estimate


def split_pair_draws(draws: np.ndarray, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Split a [baseline..., adjusted...] draw matrix into the two halves."""
    draws = np.asarray(draws)
    if draws.shape[1] != 2 * dim:
        raise ValueError(f"draw matrix has {draws.shape[1]} columns, expected {2 * dim}")
    return draws[:, :dim], draws[:, dim:]


def difference_covariance(cov: np.ndarray, dim: int) -> np.ndarray:
    """Covariance of (baseline - adjusted) from the stacked 2d x 2d matrix."""
    cov = np.asarray(cov)
    v1 = cov[:dim, :dim]
    v2 = cov[dim:, dim:]
    c12 = cov[:dim, dim:]
    return v1 + v2 - c12 - c12.T
