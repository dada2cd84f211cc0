"""Weighted L-statistics and their covariance estimators.

The statistic for one spec is the weighted sample mean (1/n) sum_i
m(X_i) w_i, equivalently the Stieltjes integral of m composed with the
empirical quantile function against the cumulative weight function.  The
analytic covariance estimator evaluates the asymptotic covariance form by
Riemann-Stieltjes double sums over the observed order statistics.  It is a
diagnostic: with all-ones weights every centered bracket vanishes and it
returns an exact zero matrix even though the statistic itself has positive
variance, so bootstrap covariances are the default inference path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import PanelDataset
from .errors import NumericalError
from .weights import ResidualContext, WeightFunction, WeightScheme, compute_weights


@dataclass(frozen=True)
class Transform:
    """Continuously differentiable transformation applied to observations.

    kind "identity", "power" (m(x) = x**exponent), or "table" (piecewise
    linear interpolation of supplied (x, y, dy) points; evaluation outside
    the table range raises).
    """

    kind: str = "identity"
    exponent: float = 1.0
    table_x: tuple[float, ...] = ()
    table_y: tuple[float, ...] = ()
    table_dy: tuple[float, ...] = ()

    @classmethod
    def identity(cls) -> "Transform":
        return cls("identity")

    @classmethod
    def power(cls, exponent: float) -> "Transform":
        return cls("power", exponent=float(exponent))

    @classmethod
    def from_table(cls, x, y, dy) -> "Transform":
        x = tuple(float(v) for v in x)
        if any(b <= a for a, b in zip(x, x[1:])):
            raise ValueError("table x grid must be strictly increasing")
        return cls("table", table_x=x, table_y=tuple(map(float, y)), table_dy=tuple(map(float, dy)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "identity":
            return x.copy()
        if self.kind == "power":
            with np.errstate(invalid="ignore", divide="ignore"):
                out = np.power(x, self.exponent)
            if not np.all(np.isfinite(out)):
                bad = int(np.nonzero(~np.isfinite(np.atleast_1d(out)))[0][0])
                raise ValueError(f"transform undefined at observation index {bad}")
            return out
        lo, hi = self.table_x[0], self.table_x[-1]
        if np.any(x < lo) or np.any(x > hi):
            bad = int(np.nonzero((np.atleast_1d(x) < lo) | (np.atleast_1d(x) > hi))[0][0])
            raise ValueError(f"transform undefined at observation index {bad} (outside table)")
        return np.interp(x, self.table_x, self.table_y)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "identity":
            return np.ones_like(x)
        if self.kind == "power":
            return self.exponent * np.power(x, self.exponent - 1.0)
        return np.interp(x, self.table_x, self.table_dy)

    def to_dict(self) -> dict:
        if self.kind == "identity":
            return {"kind": "identity"}
        if self.kind == "power":
            return {"kind": "power", "exponent": self.exponent}
        return {
            "kind": "table",
            "x": list(self.table_x),
            "y": list(self.table_y),
            "dy": list(self.table_dy),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Transform":
        kind = d.get("kind", "identity")
        if kind == "identity":
            return cls.identity()
        if kind == "power":
            return cls.power(d["exponent"])
        if kind == "table":
            return cls.from_table(d["x"], d["y"], d["dy"])
        raise ValueError(f"unknown transform kind {kind!r}")


@dataclass(frozen=True)
class LStatSpec:
    """One weighted L-statistic: a column, a transformation, a weight scheme."""

    column: str
    transform: Transform = field(default_factory=Transform.identity)
    scheme: WeightScheme = field(default_factory=WeightScheme.all_ones)
    name: str = ""

    def label(self) -> str:
        return self.name or f"{self.column}:{self.scheme.kind}"


@dataclass(frozen=True)
class JointEstimate:
    """Point estimates with a covariance matrix and its provenance.

    flags carries diagnostics, e.g. degenerate_analytic_all_ones when the
    analytic estimator returned its known exact zero under unit weights.
    """

    values: np.ndarray
    cov: np.ndarray
    cov_source: str
    n: int
    labels: tuple[str, ...] = ()
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        c = np.asarray(self.cov, dtype=float)
        d = len(v)
        if c.shape != (d, d):
            raise ValueError(f"covariance shape {c.shape} does not match {d} values")
        if not np.allclose(c, c.T, atol=1e-10):
            raise ValueError("covariance must be symmetric")
        eig = np.linalg.eigvalsh(c)
        if eig.min() < -1e-8 * max(1.0, abs(eig).max()):
            raise ValueError(f"covariance has negative eigenvalue {eig.min()}")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "cov", c)


def lstat_eval(
    spec: LStatSpec,
    data: PanelDataset,
    residual_context: ResidualContext | None = None,
    row_weights: np.ndarray | None = None,
) -> float:
    """Weighted mean (1/n) sum_i m(X_i) w_i rho_i over the rows.

    row_weights rho (repetition counts or multiplier perturbations) default
    to ones.  Weight schemes that depend on the sample see the same
    row_weights so thresholds shift with the resample.
    """
    x = data.column(spec.column)
    w = compute_weights(spec.scheme, data, residual_context, row_weights)
    m = spec.transform(x)
    rho = np.ones(len(x)) if row_weights is None else np.asarray(row_weights, dtype=float)
    return float(np.mean(m * w * rho))


def lstat_eval_via_integral(spec: LStatSpec, data: PanelDataset) -> float:
    """Same statistic as the Stieltjes integral of m(empirical quantile).

    Integrates the step function u -> m(X_(ceil(u n))) against the cumulative
    weight function on (0, 1]: sum over cells of the level times the
    increment of the weight function across the cell.  Used as an
    independent evaluation route for the integral identity.
    """
    x = data.column(spec.column)
    w = compute_weights(spec.scheme, data)
    order = np.argsort(x, kind="stable")
    levels = spec.transform(x[order])
    wf = WeightFunction(np.asarray(w)[order])
    grid = np.arange(wf.n + 1) / wf.n
    k_vals = wf(grid)
    return float(np.sum(levels * np.diff(k_vals)))


def _grid_quantities(x: np.ndarray, w: np.ndarray):
    """Sorted values, ECDF at the sorted values, conditional mean weights."""
    order = np.argsort(x, kind="stable")
    xs = x[order]
    n = len(xs)
    cnt = np.searchsorted(xs, xs, side="right")  # #{X <= xs[a]} handles ties
    f_hat = cnt / n
    cw = np.cumsum(w[order])
    k_hat = cw[cnt - 1] / cnt
    return order, xs, f_hat, k_hat


def analytic_cov(specs: list[LStatSpec], data: PanelDataset, weights: list[np.ndarray] | None = None) -> np.ndarray:
    """Sample-analogue asymptotic covariance of sqrt(n)-scaled L-statistics.

    Entry (j, k) is the double Riemann-Stieltjes sum over the observed order
    statistics of column j and column k of

        [1 - Kj(x) - Kk(y)] [Fjk(x,y) - Fj(x) Fk(y)]
          + [Kjk(x,y) Fjk(x,y) - Kj(x) Kk(y) Fj(x) Fk(y)]

    with forward increments of the transformations, where F are empirical
    CDFs, K are conditional mean weights given {X <= x}, and Kjk conditions
    on the joint event (0 when the conditioning set is empty).  The result
    is symmetrized.  Diagnostic only: exactly zero under all-ones weights.
    """
    n = data.n_rows
    d = len(specs)
    if weights is None:
        weights = [compute_weights(s.scheme, data) for s in specs]
    sigma = np.zeros((d, d))
    if n < 2:
        return sigma
    cols = [data.column(s.column) for s in specs]
    pre = [_grid_quantities(c, np.asarray(wt, dtype=float)) for c, wt in zip(cols, weights)]
    for j in range(d):
        _, xs_j, f_j, k_j = pre[j]
        dm_j = np.diff(specs[j].transform(xs_j))  # forward increments, length n-1
        for k in range(j, d):
            _, xs_k, f_k, k_k = pre[k]
            dm_k = np.diff(specs[k].transform(xs_k))
            # joint counts and joint weight sums on the (sorted j) x (sorted k) grid
            pos_j = np.searchsorted(xs_j, cols[j], side="left")
            pos_k = np.searchsorted(xs_k, cols[k], side="left")
            cnt2 = np.zeros((n, n))
            wsum2 = np.zeros((n, n))
            ww = np.asarray(weights[j], dtype=float) * np.asarray(weights[k], dtype=float)
            np.add.at(cnt2, (pos_j, pos_k), 1.0)
            np.add.at(wsum2, (pos_j, pos_k), ww)
            cnt2 = cnt2.cumsum(axis=0).cumsum(axis=1)
            wsum2 = wsum2.cumsum(axis=0).cumsum(axis=1)
            f_jk = cnt2 / n
            with np.errstate(invalid="ignore", divide="ignore"):
                k_jk = np.where(cnt2 > 0, wsum2 / np.maximum(cnt2, 1.0), 0.0)
            f_jk = f_jk[:-1, :-1]
            k_jk = k_jk[:-1, :-1]
            fj = f_j[:-1, None]
            fk = f_k[None, :-1]
            kj = k_j[:-1, None]
            kk = k_k[None, :-1]
            integrand = (1.0 - kj - kk) * (f_jk - fj * fk) + (
                k_jk * f_jk - kj * kk * fj * fk
            )
            if not np.all(np.isfinite(integrand)):
                a, b = np.argwhere(~np.isfinite(integrand))[0]
                raise NumericalError(
                    f"non-finite covariance integrand at grid cell ({a}, {b}), "
                    f"x={xs_j[a]}, y={xs_k[b]}"
                )
            val = float(dm_j @ integrand @ dm_k)
            sigma[j, k] = val
            sigma[k, j] = val
    sigma = 0.5 * (sigma + sigma.T)
    return sigma


def analytic_cov_is_degenerate(weights: list[np.ndarray]) -> bool:
    """True when every weight vector is identically one.

    In that case the analytic estimator returns an exact zero matrix even
    though the unweighted statistic has positive asymptotic variance; the
    report layer surfaces this flag and inference falls back to the
    bootstrap.
    """
    return all(np.all(np.asarray(w) == 1.0) for w in weights)


def quantile_domain_cov_kernel(
    s: float,
    t: float,
    dmq_j,
    dmq_k,
    f_q,
    k_j,
    k_k,
    k_jk,
) -> float:
    """Covariance kernel in the quantile domain for known smooth inputs.

    dmq_j(s) must return m_j'(Q_j(s)) * Q_j'(s) (same for k).  f_q(s, t) is
    the copula-style joint CDF at the quantile pair, k_j / k_k are the
    conditional mean-weight curves, k_jk the joint one.  Cross-check tool
    for simulated designs with known quantile derivatives; nothing here is
    estimated from data.
    """
    if not (0.0 < s < 1.0 and 0.0 < t < 1.0):
        raise ValueError("kernel arguments must lie in (0, 1)")
    centered = f_q(s, t) - s * t
    bracket = (
        centered
        + (k_jk(s, t) * f_q(s, t) - s * t * k_j(s) * k_k(t))
        - k_j(s) * centered
        - k_k(t) * centered
    )
    return float(dmq_j(s) * dmq_k(t) * bracket)


def quantile_process_cov_kernel(s: float, t: float, dmq) -> float:
    """No-adjustment quantile-process kernel m'(Q(s))Q'(s) m'(Q(t))Q'(t) (min(s,t) - st).

    Integrating this kernel over the unit square gives Var(m(X)); for the
    uniform law with the identity transformation the integral is 1/12.
    """
    if not (0.0 < s < 1.0 and 0.0 < t < 1.0):
        raise ValueError("kernel arguments must lie in (0, 1)")
    return float(dmq(s) * dmq(t) * (min(s, t) - s * t))
