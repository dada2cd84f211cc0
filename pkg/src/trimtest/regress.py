"""Weighted least squares and two-stage least squares on clustered panels.

Every empirical moment uses the cluster-equal normalization: cluster i with
T_i rows contributes (1/n) * (1/T_i) * sum over its rows, so each cluster
counts once regardless of how many rows it has.  A "pooled" normalization
(every row weighted 1/total_rows) is available behind a flag.  Fixed-effect
factors are expanded into indicator columns with one baseline category
dropped per factor; fitted values do not depend on which category is the
baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import PanelDataset
from .errors import RankDeficiencyError

RANK_RTOL = 1e-10


@dataclass(frozen=True)
class RegressionModel:
    """Formula-free regression description over named dataset columns.

    endogenous lists the regressors to be instrumented; instruments must be
    at least as numerous.  Empty endogenous/instruments means plain OLS.
    """

    outcome: str
    regressors: tuple[str, ...]
    endogenous: tuple[str, ...] = ()
    instruments: tuple[str, ...] = ()
    fixed_effects: tuple[str, ...] = ()
    intercept: bool = True
    normalization: str = "equal"  # "equal" (per-cluster) | "pooled"

    def __post_init__(self):
        if not self.regressors:
            if not self.intercept:
                raise ValueError("model needs regressors or an intercept")
        unknown = set(self.endogenous) - set(self.regressors)
        if unknown:
            raise ValueError(f"endogenous columns {sorted(unknown)} are not regressors")
        if self.endogenous and len(self.instruments) < len(self.endogenous):
            raise ValueError("need at least as many instruments as endogenous regressors")
        if bool(self.endogenous) != bool(self.instruments):
            raise ValueError("endogenous and instruments must be supplied together")
        if self.normalization not in {"equal", "pooled"}:
            raise ValueError(f"unknown normalization {self.normalization!r}")

    @property
    def is_instrumented(self) -> bool:
        return bool(self.endogenous)


@dataclass(frozen=True)
class RegressionFit:
    """Coefficients with names, residuals on the estimation rows, and scales."""

    coefficient_names: tuple[str, ...]
    coefficients: np.ndarray
    residuals: np.ndarray
    sigma: float
    first_stage_residuals: np.ndarray | None = None
    first_stage_sigmas: np.ndarray | None = None

    def coef(self, name: str) -> float:
        try:
            idx = self.coefficient_names.index(name)
        except ValueError:
            raise KeyError(f"no coefficient named {name!r}") from None
        return float(self.coefficients[idx])


def _dummy_columns(values: np.ndarray, factor: str, drop_label=None):
    """Indicator columns for a factor, dropping one baseline category.

    Categories are ordered by first appearance; the first is the baseline
    unless drop_label names another one.
    """
    labels: list = []
    seen: dict = {}
    codes = np.empty(len(values), dtype=np.intp)
    for r, v in enumerate(values):
        key = v.item() if hasattr(v, "item") else v
        if key not in seen:
            seen[key] = len(labels)
            labels.append(key)
        codes[r] = seen[key]
    baseline = 0 if drop_label is None else labels.index(drop_label)
    cols = []
    names = []
    for c, lab in enumerate(labels):
        if c == baseline:
            continue
        cols.append((codes == c).astype(float))
        names.append(f"{factor}={lab}")
    return cols, names


def build_design(
    data: PanelDataset,
    regressors: tuple[str, ...],
    fixed_effects: tuple[str, ...] = (),
    intercept: bool = True,
    fe_baselines: dict | None = None,
) -> tuple[np.ndarray, tuple[str, ...]]:
    """Assemble the design matrix: intercept, regressors, then FE dummies."""
    cols: list[np.ndarray] = []
    names: list[str] = []
    n = data.n_rows
    if intercept:
        cols.append(np.ones(n))
        names.append("intercept")
    for r in regressors:
        cols.append(data.column(r))
        names.append(r)
    for f in fixed_effects:
        if f in data.columns:
            vals = data.column(f)
        else:
            vals = np.asarray(data.cluster_ids)
            if f != "cluster":
                raise KeyError(f"no column named {f!r} for fixed effect")
        drop = None if fe_baselines is None else fe_baselines.get(f)
        dcols, dnames = _dummy_columns(np.asarray(vals), f, drop)
        cols.extend(dcols)
        names.extend(dnames)
    if not cols:
        raise ValueError("empty design")
    return np.column_stack(cols), tuple(names)


def _row_scale(
    data: PanelDataset, weights: np.ndarray, row_multipliers: np.ndarray | None, normalization: str
) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if row_multipliers is not None:
        w = w * np.asarray(row_multipliers, dtype=float)
    if normalization == "equal":
        return w / (data.row_cluster_sizes * data.n_clusters)
    return w / data.n_rows


def _solve_normal_equations(design: np.ndarray, scale: np.ndarray, target: np.ndarray, stage: str):
    """Solve (X' S X) b = X' S t with a rank check at relative tolerance 1e-10."""
    gram = design.T @ (design * scale[:, None])
    rhs = design.T @ (scale[:, None] * np.atleast_2d(target.T).T)
    sv = np.linalg.svd(gram, compute_uv=False)
    tol = sv[0] * RANK_RTOL if len(sv) else 0.0
    rank = int(np.sum(sv > tol))
    if rank < gram.shape[0]:
        raise RankDeficiencyError(rank, gram.shape[0], stage=stage)
    return np.linalg.solve(gram, rhs)


def sigma_hat(
    residuals: np.ndarray,
    data: PanelDataset,
    row_multipliers: np.ndarray | None = None,
    normalization: str = "equal",
) -> float:
    """Cluster-equal residual scale: sqrt of (1/n) sum_i (1/T_i) sum_t e_it^2.

    Each cluster contributes its within-cluster mean square once.  Under the
    pooled flag this is the plain mean square over rows.  Multiplier
    perturbations, when given, weight the cluster contributions.
    """
    eps = np.asarray(residuals, dtype=float)
    if len(eps) != data.n_rows:
        raise ValueError("residual vector does not match dataset rows")
    if data.n_clusters == 0:
        raise ValueError("empty cluster in residual scale computation")
    rho = np.ones(data.n_rows) if row_multipliers is None else np.asarray(row_multipliers, dtype=float)
    if normalization == "pooled":
        denom = float(rho.sum())
        if denom <= 0:
            raise ValueError("non-positive total multiplier mass")
        return float(np.sqrt(np.sum(rho * eps**2) / denom))
    ci = data.row_cluster_index
    m = data.n_clusters
    sizes = data.cluster_sizes
    per_cluster = np.bincount(ci, weights=rho * eps**2, minlength=m) / sizes
    # for unit multipliers the denominator is just the cluster count
    denom = float(np.sum(np.bincount(ci, weights=rho, minlength=m) / sizes))
    if denom <= 0:
        raise ValueError("non-positive total multiplier mass")
    return float(np.sqrt(per_cluster.sum() / denom))


def weighted_ols(
    model: RegressionModel,
    data: PanelDataset,
    weights: np.ndarray | None = None,
    row_multipliers: np.ndarray | None = None,
    fe_baselines: dict | None = None,
) -> RegressionFit:
    """Weighted least squares under the cluster-equal normalization.

    weights are the outlier-adjustment weights (default all ones);
    row_multipliers are bootstrap perturbations.  Residuals are computed for
    every row from the actual regressors.
    """
    n = data.n_rows
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    design, names = build_design(
        data, model.regressors, model.fixed_effects, model.intercept, fe_baselines
    )
    scale = _row_scale(data, w, row_multipliers, model.normalization)
    y = data.column(model.outcome)
    beta = _solve_normal_equations(design, scale, y, stage="design").ravel()
    resid = y - design @ beta
    sig = sigma_hat(resid, data, row_multipliers, model.normalization)
    return RegressionFit(names, beta, resid, sig)


def weighted_2sls(
    model: RegressionModel,
    data: PanelDataset,
    weights: np.ndarray | None = None,
    row_multipliers: np.ndarray | None = None,
    fe_baselines: dict | None = None,
) -> RegressionFit:
    """Two-stage least squares with the same weights in both stages.

    The instrument matrix is the design with endogenous columns replaced by
    the instruments (exogenous regressors and fixed effects instrument
    themselves).  Structural residuals use the actual regressors; the
    first-stage residuals (one column per endogenous regressor) and their
    scales are returned for residual-trimming rules.
    """
    if not model.is_instrumented:
        return weighted_ols(model, data, weights, row_multipliers, fe_baselines)
    n = data.n_rows
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    design, names = build_design(
        data, model.regressors, model.fixed_effects, model.intercept, fe_baselines
    )
    exog = tuple(r for r in model.regressors if r not in model.endogenous)
    z_design, _ = build_design(
        data,
        model.instruments + exog,
        model.fixed_effects,
        model.intercept,
        fe_baselines,
    )
    scale = _row_scale(data, w, row_multipliers, model.normalization)
    y = data.column(model.outcome)
    # first stage: project the full design on the instrument set
    pi = _solve_normal_equations(z_design, scale, design, stage="first-stage")
    fitted_design = z_design @ pi
    beta = _solve_normal_equations(fitted_design, scale, y, stage="second-stage").ravel()
    resid = y - design @ beta
    sig = sigma_hat(resid, data, row_multipliers, model.normalization)
    endog_idx = [names.index(e) for e in model.endogenous]
    fs_resid = design[:, endog_idx] - fitted_design[:, endog_idx]
    fs_sig = np.array(
        [
            sigma_hat(fs_resid[:, j], data, row_multipliers, model.normalization)
            for j in range(fs_resid.shape[1])
        ]
    )
    return RegressionFit(names, beta, resid, sig, fs_resid, fs_sig)


def fit_model(
    model: RegressionModel,
    data: PanelDataset,
    weights: np.ndarray | None = None,
    row_multipliers: np.ndarray | None = None,
) -> RegressionFit:
    return (
        weighted_2sls(model, data, weights, row_multipliers)
        if model.is_instrumented
        else weighted_ols(model, data, weights, row_multipliers)
    )


@dataclass(frozen=True)
class DerivedParams:
    """Dynamic summaries of an effect coefficient with autoregressive lags.

    persistence: sum of the lag coefficients.
    long_run_effect: effect / (1 - persistence); infinite with a flag at a
    unit root.
    effect_at_horizon: cumulative effect after `horizon` periods from the
    recursion e_j = effect + sum_s lag_s * e_{j-s} with e_j = 0 for j <= 0.
    """

    persistence: float
    long_run_effect: float
    effect_at_horizon: float
    horizon: int
    unit_root: bool = False


def derived_params(effect: float, lag_coefficients, horizon: int = 25) -> DerivedParams:
    """Exact arithmetic on fitted coefficients; no estimation happens here."""
    lags = [float(b) for b in lag_coefficients]
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    persistence = float(np.sum(lags)) if lags else 0.0
    unit_root = persistence == 1.0
    if unit_root:
        long_run = float("inf") if effect > 0 else float("-inf") if effect < 0 else float("nan")
    else:
        long_run = float(effect) / (1.0 - persistence)
    # e_j = effect + sum_s lag_s e_{j-s}, zero initial conditions
    e = [0.0] * (len(lags) + horizon + 1)
    for j in range(1, horizon + 1):
        acc = float(effect)
        for s, b in enumerate(lags, start=1):
            if j - s >= 1:
                acc += b * e[j - s]
        e[j] = acc
    return DerivedParams(
        persistence=persistence,
        long_run_effect=long_run,
        effect_at_horizon=float(e[horizon]),
        horizon=horizon,
        unit_root=unit_root,
    )
