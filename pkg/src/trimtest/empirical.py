"""Empirical distribution primitives: ECDF, quantiles, generalized inverses.

All constructions here are exact finite-sample objects.  The quantile
function maps u in (0, 1] to the ceil(u*n)-th order statistic, which is the
generalized inverse of the ECDF; both are implemented through the same
searchsorted arithmetic so the correspondence holds for every float u.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SortedSample:
    """A sample stored in ascending order.

    Attributes
    ----------
    values : ndarray
        Ascending values (ties allowed unless stated otherwise by the
        consuming operation).
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or len(v) == 0:
            raise ValueError("empty sample")
        if not np.all(np.isfinite(v)):
            raise ValueError("sample contains non-finite values")
        if np.any(np.diff(v) < 0):
            v = np.sort(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_data(cls, data) -> "SortedSample":
        return cls(np.sort(np.asarray(data, dtype=float)))

    @property
    def n(self) -> int:
        return len(self.values)

    def order_statistic(self, i: int) -> float:
        """1-based order statistic X_(i)."""
        if not 1 <= i <= self.n:
            raise ValueError(f"order statistic index {i} outside 1..{self.n}")
        return float(self.values[i - 1])


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous step function with finitely many jumps.

    Takes `left_value` for x below the first breakpoint and `levels[k]` on
    [breakpoints[k], breakpoints[k+1]).
    """

    breakpoints: np.ndarray
    levels: np.ndarray
    left_value: float = 0.0

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        lv = np.asarray(self.levels, dtype=float)
        if b.ndim != 1 or lv.shape != b.shape or len(b) == 0:
            raise ValueError("breakpoints and levels must be equal-length 1-d arrays")
        if np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        b.setflags(write=False)
        lv.setflags(write=False)
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "levels", lv)

    def __call__(self, x):
        idx = np.searchsorted(self.breakpoints, x, side="right")
        full = np.concatenate(([self.left_value], self.levels))
        out = full[idx]
        return float(out) if np.isscalar(x) else out


@dataclass(frozen=True)
class PiecewiseLinear:
    """Continuous piecewise-linear function, constant beyond the end knots."""

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if k.ndim != 1 or v.shape != k.shape or len(k) < 2:
            raise ValueError("need at least two knots with matching values")
        if np.any(np.diff(k) <= 0):
            raise ValueError("knots must be strictly increasing")
        k.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "values", v)

    def __call__(self, x):
        out = np.interp(x, self.knots, self.values)
        return float(out) if np.isscalar(x) else out


def ecdf(sample) -> StepFunction:
    """Empirical CDF of a sample as a right-continuous StepFunction.

    Jumps sit at the unique sample values with cumulative levels k/n; the
    function is 0 left of the minimum and 1 at and beyond the maximum.
    """
    s = sample if isinstance(sample, SortedSample) else SortedSample.from_data(sample)
    uniq, counts = np.unique(s.values, return_counts=True)
    levels = np.cumsum(counts) / s.n
    return StepFunction(uniq, levels, left_value=0.0)


def generalized_inverse(f, y: float) -> float:
    """First-crossing inverse inf{x : f(x) >= y} of a nondecreasing function.

    Supports StepFunction and PiecewiseLinear.  y must not exceed the
    supremum of f; y at or below the left limit returns -inf for a
    StepFunction (every x already satisfies the inequality).
    """
    if isinstance(f, StepFunction):
        if y > f.levels[-1]:
            raise ValueError(f"level unattainable: {y} exceeds maximum {f.levels[-1]}")
        if y <= f.left_value:
            return float("-inf")
        idx = int(np.searchsorted(f.levels, y, side="left"))
        return float(f.breakpoints[idx])
    if isinstance(f, PiecewiseLinear):
        vals = f.values
        if np.any(np.diff(vals) < 0):
            raise ValueError("generalized inverse requires a nondecreasing function")
        if y > vals[-1]:
            raise ValueError(f"level unattainable: {y} exceeds maximum {vals[-1]}")
        if y <= vals[0]:
            return float(f.knots[0])
        j = int(np.searchsorted(vals, y, side="left"))
        x0, x1 = f.knots[j - 1], f.knots[j]
        v0, v1 = vals[j - 1], vals[j]
        if v1 == v0:
            return float(x1)
        return float(x0 + (y - v0) * (x1 - x0) / (v1 - v0))
    raise TypeError(f"unsupported function type: {type(f).__name__}")


def empirical_quantile(sample, u) -> float | np.ndarray:
    """Empirical quantile: the ceil(u*n)-th order statistic for u in (0, 1].

    Constant on ((i-1)/n, i/n] where it equals X_(i); u outside (0, 1] is
    rejected (u = 0 would map to -inf and is not accepted).  Agrees exactly
    with generalized_inverse(ecdf(sample), u) because both use the same
    level grid and searchsorted arithmetic.
    """
    s = sample if isinstance(sample, SortedSample) else SortedSample.from_data(sample)
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr <= 0.0) or np.any(u_arr > 1.0):
        raise ValueError("quantile level must lie in (0, 1]")
    levels = np.arange(1, s.n + 1) / s.n
    idx = np.searchsorted(levels, u_arr, side="left")
    out = s.values[idx]
    return float(out) if np.isscalar(u) else out


def interpolated_ecdf(sample, origin: float = 0.0) -> PiecewiseLinear:
    """Continuous piecewise-linear version of the ECDF.

    Connects (origin, 0) through (X_(i), i/n) up to (X_(n), 1), staying 1
    beyond the maximum.  Intended for samples supported above `origin`
    (typically data in (0, 1) with origin 0); within 1/n of the ECDF in sup
    norm.  Ties are rejected: break them with deterministic_jitter or use a
    midrank reduction upstream.
    """
    s = sample if isinstance(sample, SortedSample) else SortedSample.from_data(sample)
    if np.any(np.diff(s.values) == 0):
        raise ValueError("ties require jitter or midrank policy before interpolation")
    if origin >= s.values[0]:
        raise ValueError(
            f"origin {origin} must lie strictly below the sample minimum {s.values[0]}"
        )
    knots = np.concatenate(([origin], s.values))
    values = np.arange(s.n + 1) / s.n
    return PiecewiseLinear(knots, values)


def deterministic_jitter(values, seed: int, relative_scale: float = 1e-9) -> np.ndarray:
    """Break ties by adding seeded noise of magnitude relative_scale * spread.

    The spread is the sample range (or max absolute value for constant
    samples, or 1.0 for all-zero samples), so the perturbation is far below
    any significant digit of the data.  Deterministic given the seed.
    """
    v = np.asarray(values, dtype=float)
    spread = float(np.ptp(v))
    if spread == 0.0:
        spread = float(np.max(np.abs(v))) or 1.0
    rng = np.random.default_rng(seed)
    out = v + rng.uniform(-1.0, 1.0, size=v.shape) * relative_scale * spread
    if len(np.unique(out)) != len(out):
        raise ValueError("jitter failed to separate ties; increase relative_scale")
    return out


def weighted_quantile_threshold(values, weights, q: float) -> float | None:
    """First value where the cumulative weight mass reaches a q fraction.

    With unit weights this is the ceil(q*n)-th order statistic; with integer
    repetition counts it is the corresponding multiset order statistic, which
    is what resampled-data thresholds need.  Weights may be signed (the
    first crossing of the running mass is returned), which supports
    multiplier-perturbed diagnostics.  Returns None when q*total <= 0, i.e.
    no constraint.  A tiny relative snap guards ceil against float error in
    q * total.
    """
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if v.shape != w.shape or v.ndim != 1 or len(v) == 0:
        raise ValueError("values and weights must be equal-length non-empty 1-d arrays")
    total = float(w.sum())
    if total <= 0:
        raise ValueError("total weight must be positive")
    target = q * total
    snap = 1e-9 * max(1.0, abs(total))
    if target <= snap:
        return None
    order = np.argsort(v, kind="stable")
    cum = np.cumsum(w[order])
    hit = np.nonzero(cum >= target - snap)[0]
    if len(hit) == 0:
        raise ValueError(f"level unattainable: cumulative weight never reaches {target}")
    return float(v[order[hit[0]]])
