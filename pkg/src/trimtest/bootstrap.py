"""Nonparametric bootstrap for joint distributions of estimator vectors.

Each draw resamples whole clusters (or rows) and re-runs the supplied
estimator from scratch on the resample, so every data-dependent quantity
(trim thresholds, residual scales, regression coefficients) is recomputed
inside the draw.  Draw b uses a generator derived from the master seed and
the draw index alone, so results are bit-identical no matter how many
threads execute the draws or in which order they finish.

Engines:
  - "multinomial": counts ~ Multinomial(U; 1/U, ..., 1/U) over the U
    resample units, materialized by repeating units.
  - "multiplier" with distribution "poisson": unit counts ~ Poisson(1)
    (centered multipliers N - 1), also materialized.
  - "multiplier" with distribution "normal": the original data is kept and
    the estimator receives per-row multiplier weights 1 + xi with xi
    standard normal per unit.  Signed weights make this a variance
    diagnostic, not a resampling scheme.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset import PanelDataset
from .errors import NumericalError

_CATCHABLE = (ValueError, ArithmeticError, np.linalg.LinAlgError, NumericalError)


@dataclass(frozen=True)
class BootstrapPlan:
    """How to resample: iteration count, seed, unit, and engine."""

    iterations: int = 10_000
    seed: int = 0
    resample_unit: str = "cluster"  # "cluster" | "row"
    engine: str = "multinomial"  # "multinomial" | "multiplier"
    multiplier_distribution: str = "normal"  # "normal" | "poisson"

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.resample_unit not in {"cluster", "row"}:
            raise ValueError(f"unknown resample unit {self.resample_unit!r}")
        if self.engine not in {"multinomial", "multiplier"}:
            raise ValueError(f"unknown bootstrap engine {self.engine!r}")
        if self.engine == "multiplier" and self.multiplier_distribution not in {"normal", "poisson"}:
            raise ValueError(f"unknown multiplier distribution {self.multiplier_distribution!r}")


@dataclass(frozen=True)
class BootstrapResult:
    """Draw matrix plus summaries; failed draws are NaN rows.

    cov is the unbiased sample covariance of the successful draws,
    symmetrized; a single-draw result carries a zero matrix by convention.
    """

    draws: np.ndarray
    point: np.ndarray
    cov: np.ndarray
    seed: int
    iterations: int
    n_failed: int
    failed_indices: tuple[int, ...] = ()
    labels: tuple[str, ...] = ()


def draw_rng(master_seed: int, draw_index: int) -> np.random.Generator:
    """Generator for one draw, derived from (master seed, draw index) only.

    The leading 1 in the spawn key is a stream domain tag: data simulation
    uses bare one-element keys and the test's Monte Carlo uses domain 2, so
    reusing one seed value across components never aliases their streams
    (resample counts must not be built from the same bits as the data).
    """
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(1, draw_index))
    return np.random.default_rng(ss)


def multinomial_counts(n: int, rng: np.random.Generator) -> np.ndarray:
    """Symmetric multinomial repetition counts: sum to n, each mean 1."""
    if n < 1:
        raise ValueError("need at least one unit")
    return rng.multinomial(n, np.full(n, 1.0 / n))


def multiplier_weights(n: int, distribution: str, rng: np.random.Generator) -> np.ndarray:
    """Mean-zero unit-variance multipliers: standard normal or Poisson(1) - 1."""
    if n == 0:
        return np.empty(0)
    if distribution == "normal":
        return rng.standard_normal(n)
    if distribution == "poisson":
        return rng.poisson(1.0, n) - 1.0
    raise ValueError(f"unknown multiplier distribution {distribution!r}")


def _one_draw(data: PanelDataset, plan: BootstrapPlan, estimator_fn, b: int):
    rng = draw_rng(plan.seed, b)
    n_units = data.n_clusters if plan.resample_unit == "cluster" else data.n_rows
    if plan.engine == "multinomial":
        counts = multinomial_counts(n_units, rng)
        idx = np.repeat(np.arange(n_units), counts)
        resample = (
            data.take_clusters(idx) if plan.resample_unit == "cluster" else data.take_rows(idx)
        )
        return estimator_fn(resample, np.ones(resample.n_rows))
    xi = multiplier_weights(n_units, plan.multiplier_distribution, rng)
    if plan.multiplier_distribution == "poisson":
        counts = (xi + 1.0).astype(np.intp)
        idx = np.repeat(np.arange(n_units), counts)
        if len(idx) == 0:
            raise ValueError("empty multiplier resample")
        resample = (
            data.take_clusters(idx) if plan.resample_unit == "cluster" else data.take_rows(idx)
        )
        return estimator_fn(resample, np.ones(resample.n_rows))
    rho_units = 1.0 + xi
    if plan.resample_unit == "cluster":
        row_rho = rho_units[data.row_cluster_index]
    else:
        row_rho = rho_units
    return estimator_fn(data, row_rho)


def bootstrap_pipeline(
    data: PanelDataset,
    plan: BootstrapPlan,
    estimator_fn,
    n_threads: int = 1,
    labels: tuple[str, ...] = (),
) -> BootstrapResult:
    """Run the full bootstrap: point estimate, draws, covariance.

    estimator_fn(dataset, row_weights) must return a fixed-length float
    vector.  Draws that raise a numerical or value error are recorded as
    missing; more than 1% missing aborts with an error.  Aggregation is by
    draw index, so thread count does not affect any output value.
    """
    point = np.atleast_1d(np.asarray(estimator_fn(data, np.ones(data.n_rows)), dtype=float))
    d = len(point)
    B = plan.iterations
    draws = np.full((B, d), np.nan)
    failed: list[int] = []

    def run(b: int):
        try:
            return b, np.atleast_1d(np.asarray(_one_draw(data, plan, estimator_fn, b), dtype=float))
        except _CATCHABLE:
            return b, None

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(run, range(B)))
    else:
        results = [run(b) for b in range(B)]
    for b, val in results:
        if val is None:
            failed.append(b)
        elif val.shape != (d,):
            raise ValueError(
                f"estimator returned length {val.shape} on draw {b}, expected {d}"
            )
        else:
            draws[b] = val
    if len(failed) > 0.01 * B:
        raise NumericalError(
            f"{len(failed)} of {B} bootstrap draws failed (limit is 1%)"
        )
    ok = draws[~np.isnan(draws).any(axis=1)]
    if len(ok) >= 2:
        cov = np.cov(ok, rowvar=False, ddof=1).reshape(d, d)
        cov = 0.5 * (cov + cov.T)
    else:
        cov = np.zeros((d, d))
    return BootstrapResult(
        draws=draws,
        point=point,
        cov=cov,
        seed=plan.seed,
        iterations=B,
        n_failed=len(failed),
        failed_indices=tuple(failed),
        labels=labels,
    )


def bootstrap_cov(draws: np.ndarray) -> np.ndarray:
    """Unbiased sample covariance of the non-missing draws, symmetrized."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 1:
        draws = draws[:, None]
    ok = draws[~np.isnan(draws).any(axis=1)]
    if len(ok) < 2:
        raise ValueError("need at least two non-missing draws for a covariance")
    d = draws.shape[1]
    cov = np.cov(ok, rowvar=False, ddof=1).reshape(d, d)
    return 0.5 * (cov + cov.T)
