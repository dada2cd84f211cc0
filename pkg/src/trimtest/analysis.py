"""End-to-end analysis: config -> data -> bootstrap -> tests -> reports.

The configuration is a JSON document (objects, arrays, scalars).  A run
produces a ReportBundle holding point estimates, bootstrap draws,
covariances with provenance, per-coefficient and joint robustness tests,
and a formatted comparison table.  Machine-readable outputs are
deterministic: identical config and seeds give byte-identical files
regardless of thread count.  Failures are re-raised with the pipeline stage
in the message.
"""

from __future__ import annotations

import json
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .bootstrap import BootstrapPlan, BootstrapResult, bootstrap_pipeline
from .csvio import (
    LoadReport,
    atomic_write_text,
    draws_csv_text,
    grid_csv_text,
    load_csv,
    read_draws_csv,
)
from .dataset import PanelDataset, add_within_cluster_lags
from .errors import DataError, TrimtestError
from .estimators import (
    RegressionComparison,
    difference_covariance,
    lstat_pair_estimator,
    regression_comparison_estimator,
)
from .lstat import (
    LStatSpec,
    Transform,
    analytic_cov,
    analytic_cov_is_degenerate,
)
from .plotgrid import emit_plot_grid
from .regress import RegressionModel
from .robustness import TestSpec, robustness_test
from .weights import WeightScheme, compute_weights


@contextmanager
def _stage(name: str):
    try:
        yield
    except (TrimtestError, ValueError, KeyError) as exc:
        first = str(exc.args[0]) if exc.args else type(exc).__name__
        exc.args = (f"[{name}] {first}",) + tuple(exc.args[1:])
        raise


@dataclass(frozen=True)
class Comparison:
    """One baseline/adjusted estimator pair to run and test."""

    name: str
    baseline_scheme: WeightScheme
    adjusted_scheme: WeightScheme


@dataclass(frozen=True)
class AnalysisConfig:
    """Validated analysis description; build from a dict with from_dict."""

    input_path: str
    cluster_column: str | None
    mode: str  # "regression" | "lstat"
    model: RegressionModel | None
    statistics: tuple[LStatSpec, ...]
    comparisons: tuple[Comparison, ...]
    report_coefficients: tuple[str, ...]
    derived_effect: str
    derived_lags: tuple[str, ...]
    derived_horizon: int
    plan: BootstrapPlan
    test: TestSpec
    output_dir: str
    plot_pairs: tuple = ()
    lags: tuple = ()
    include_analytic_cov: bool = False
    config_echo: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "AnalysisConfig":
        with _stage("config"):
            if not isinstance(raw, dict):
                raise DataError("config root must be an object")
            for key in ("input", "model"):
                if key not in raw:
                    raise DataError(f"config is missing required key {key!r}")
            model_raw = raw["model"]
            mtype = model_raw.get("type", "ols")
            if mtype not in {"ols", "iv", "lstat"}:
                raise DataError(f"unknown model type {mtype!r}")
            comparisons = _parse_comparisons(raw)
            statistics: tuple[LStatSpec, ...] = ()
            model = None
            report_coefficients: tuple[str, ...] = ()
            derived_effect = ""
            derived_lags: tuple[str, ...] = ()
            derived_horizon = 25
            if mtype == "lstat":
                stats_raw = model_raw.get("statistics")
                if not stats_raw:
                    raise DataError("lstat model requires a statistics list")
                statistics = tuple(
                    LStatSpec(
                        column=s["column"],
                        transform=Transform.from_dict(s.get("transform", {"kind": "identity"})),
                        name=s.get("name", s["column"]),
                    )
                    for s in stats_raw
                )
            else:
                endog = tuple(model_raw.get("endogenous", ()))
                instr = tuple(model_raw.get("instruments", ()))
                if mtype == "iv" and not endog:
                    raise DataError("iv model requires endogenous and instruments lists")
                if mtype == "ols":
                    endog, instr = (), ()
                model = RegressionModel(
                    outcome=model_raw["outcome"],
                    regressors=tuple(model_raw.get("regressors", ())),
                    endogenous=endog,
                    instruments=instr,
                    fixed_effects=tuple(model_raw.get("fixed_effects", ())),
                    intercept=bool(model_raw.get("intercept", True)),
                    normalization=model_raw.get("normalization", "equal"),
                )
                report_coefficients = tuple(
                    model_raw.get("report_coefficients", model.regressors)
                )
                derived = model_raw.get("derived")
                if derived:
                    derived_effect = derived["effect"]
                    derived_lags = tuple(derived["lags"])
                    derived_horizon = int(derived.get("horizon", 25))
            boot_raw = raw.get("bootstrap", {})
            plan = BootstrapPlan(
                iterations=int(boot_raw.get("iterations", 10_000)),
                seed=int(boot_raw.get("seed", 0)),
                resample_unit=boot_raw.get("resample_unit", "cluster"),
                engine=boot_raw.get("engine", "multinomial"),
                multiplier_distribution=boot_raw.get("multiplier_distribution", "normal"),
            )
            test_raw = raw.get("test", {})
            test = TestSpec(
                h=float(test_raw.get("h", 0.0)),
                alpha=float(test_raw.get("alpha", 0.05)),
                norm_matrix=test_raw.get("norm", "diff_cov"),
                mc_draws=int(test_raw.get("mc_draws", 100_000)),
                seed=int(test_raw.get("seed", 0)),
                method=test_raw.get("method", "auto"),
            )
            out_raw = raw.get("output", {})
            lags = tuple(
                (entry["column"], int(entry["count"])) for entry in raw.get("lags", ())
            )
            return cls(
                input_path=raw["input"],
                cluster_column=raw.get("cluster_column"),
                mode="lstat" if mtype == "lstat" else "regression",
                model=model,
                statistics=statistics,
                comparisons=comparisons,
                report_coefficients=report_coefficients,
                derived_effect=derived_effect,
                derived_lags=derived_lags,
                derived_horizon=derived_horizon,
                plan=plan,
                test=test,
                output_dir=out_raw.get("directory", "trimtest-output"),
                plot_pairs=tuple(tuple(p) if isinstance(p, list) else p for p in out_raw.get("plot_pairs", ())),
                lags=lags,
                include_analytic_cov=bool(out_raw.get("analytic_cov", False)),
                config_echo=raw,
            )

    @classmethod
    def from_json_file(cls, path: str) -> "AnalysisConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise DataError(f"cannot open config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def override(self, seed=None, iterations=None, output_dir=None) -> "AnalysisConfig":
        plan = self.plan
        if seed is not None or iterations is not None:
            plan = BootstrapPlan(
                iterations=iterations if iterations is not None else plan.iterations,
                seed=seed if seed is not None else plan.seed,
                resample_unit=plan.resample_unit,
                engine=plan.engine,
                multiplier_distribution=plan.multiplier_distribution,
            )
        return AnalysisConfig(
            input_path=self.input_path,
            cluster_column=self.cluster_column,
            mode=self.mode,
            model=self.model,
            statistics=self.statistics,
            comparisons=self.comparisons,
            report_coefficients=self.report_coefficients,
            derived_effect=self.derived_effect,
            derived_lags=self.derived_lags,
            derived_horizon=self.derived_horizon,
            plan=plan,
            test=self.test,
            output_dir=output_dir if output_dir is not None else self.output_dir,
            plot_pairs=self.plot_pairs,
            lags=self.lags,
            include_analytic_cov=self.include_analytic_cov,
            config_echo=self.config_echo,
        )


def _parse_comparisons(raw: dict) -> tuple[Comparison, ...]:
    entries = raw.get("comparisons")
    if entries is None:
        weights = raw.get("weights")
        if weights is None:
            raise DataError("config needs a weights object or a comparisons list")
        entries = [{"name": "main", "weights": weights}]
    out = []
    for e in entries:
        w = e.get("weights", e)
        extra = set(w) - {"baseline", "adjusted", "name"}
        if "baseline" not in w or "adjusted" not in w:
            raise DataError(
                "each comparison needs exactly a baseline and an adjusted weight scheme"
            )
        if extra:
            raise DataError(f"unexpected keys in comparison weights: {sorted(extra)}")
        out.append(
            Comparison(
                name=e.get("name", "main"),
                baseline_scheme=WeightScheme.from_dict(w["baseline"]),
                adjusted_scheme=WeightScheme.from_dict(w["adjusted"]),
            )
        )
    names = [c.name for c in out]
    if len(set(names)) != len(names):
        raise DataError("comparison names must be unique")
    return tuple(out)


@dataclass(frozen=True)
class ComparisonResult:
    """Everything computed for one baseline/adjusted pair."""

    name: str
    labels: tuple[str, ...]
    baseline: np.ndarray
    adjusted: np.ndarray
    bootstrap: BootstrapResult
    diff_cov: np.ndarray
    coefficient_tests: tuple
    joint_test: object
    flags: dict = field(default_factory=dict)
    analytic: np.ndarray | None = None


@dataclass(frozen=True)
class ReportBundle:
    """Full analysis output: results, table text, and draw matrices."""

    config: AnalysisConfig
    load_report: LoadReport
    results: tuple[ComparisonResult, ...]
    table_text: str
    results_dict: dict


def _build_estimator(config: AnalysisConfig, comparison: Comparison):
    if config.mode == "lstat":
        base_specs = [
            LStatSpec(s.column, s.transform, comparison.baseline_scheme, s.name)
            for s in config.statistics
        ]
        adj_specs = [
            LStatSpec(s.column, s.transform, comparison.adjusted_scheme, s.name)
            for s in config.statistics
        ]
        labels = tuple(s.label() for s in base_specs)
        return lstat_pair_estimator(base_specs, adj_specs), labels, (base_specs, adj_specs)
    rcomp = RegressionComparison(
        model=config.model,
        baseline_scheme=comparison.baseline_scheme,
        adjusted_scheme=comparison.adjusted_scheme,
        report_coefficients=config.report_coefficients,
        derived_effect=config.derived_effect,
        derived_lags=config.derived_lags,
        derived_horizon=config.derived_horizon,
    )
    return regression_comparison_estimator(rcomp), rcomp.stat_labels(), None


def _prepared_data(
    config: AnalysisConfig, data: PanelDataset | None
) -> tuple[PanelDataset, LoadReport]:
    if data is None:
        with _stage("load"):
            data, load_report = load_csv(config.input_path, config.cluster_column)
    else:
        load_report = LoadReport(data.n_rows, 0, {})
    with _stage("lags"):
        for column, count in config.lags:
            data = add_within_cluster_lags(data, column, count)
    return data, load_report


def point_estimates(
    config: AnalysisConfig, data: PanelDataset | None = None
) -> dict[str, dict]:
    """Evaluate every comparison once on the full sample, skipping the bootstrap.

    Returns a mapping from comparison name to labels and the baseline and
    adjusted statistic vectors.
    """
    data, _ = _prepared_data(config, data)
    out = {}
    for comparison in config.comparisons:
        estimator, labels, _ = _build_estimator(config, comparison)
        with _stage(f"estimate:{comparison.name}"):
            stacked = np.asarray(estimator(data, np.ones(data.n_rows)), dtype=float)
        d = len(labels)
        out[comparison.name] = {
            "labels": list(labels),
            "baseline": [float(v) for v in stacked[:d]],
            "adjusted": [float(v) for v in stacked[d:]],
        }
    return out


def run_analysis(
    config: AnalysisConfig, n_threads: int = 1, data: PanelDataset | None = None
) -> ReportBundle:
    """Execute the full pipeline described by the config."""
    data, load_report = _prepared_data(config, data)
    results = []
    for comparison in config.comparisons:
        estimator, labels, lstat_specs = _build_estimator(config, comparison)
        d = len(labels)
        with _stage(f"bootstrap:{comparison.name}"):
            boot = bootstrap_pipeline(
                data, config.plan, estimator, n_threads=n_threads, labels=labels
            )
        b1, b2 = boot.point[:d], boot.point[d:]
        diff_cov = difference_covariance(boot.cov, d)
        flags = {}
        with _stage(f"test:{comparison.name}"):
            coef_tests = []
            for j in range(d):
                var_d = float(diff_cov[j, j])
                report = robustness_test(
                    b1[j : j + 1],
                    b2[j : j + 1],
                    np.array([[var_d]]),
                    config.test,
                    baseline_cov=np.array([[boot.cov[j, j]]]),
                )
                coef_tests.append(report)
            joint = robustness_test(
                b1, b2, diff_cov, config.test, baseline_cov=boot.cov[:d, :d]
            )
        analytic = None
        if config.include_analytic_cov and lstat_specs is not None:
            with _stage(f"analytic:{comparison.name}"):
                base_specs, adj_specs = lstat_specs
                specs_all = list(base_specs) + list(adj_specs)
                weights = [compute_weights(s.scheme, data) for s in specs_all]
                analytic = analytic_cov(specs_all, data, weights)
                flags["analytic_cov_degenerate_all_ones"] = analytic_cov_is_degenerate(weights)
        results.append(
            ComparisonResult(
                name=comparison.name,
                labels=labels,
                baseline=b1,
                adjusted=b2,
                bootstrap=boot,
                diff_cov=diff_cov,
                coefficient_tests=tuple(coef_tests),
                joint_test=joint,
                flags=flags,
                analytic=analytic,
            )
        )
    table = _format_table(results)
    rd = _results_dict(config, load_report, results, table)
    return ReportBundle(
        config=config,
        load_report=load_report,
        results=tuple(results),
        table_text=table,
        results_dict=rd,
    )


_COLUMNS = (
    "statistic",
    "baseline",
    "adjusted",
    "se_baseline",
    "se_adjusted",
    "p_formal",
    "p_heuristic",
)


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _table_rows(res: ComparisonResult) -> list[dict]:
    rows = []
    d = len(res.labels)
    for j, label in enumerate(res.labels):
        t = res.coefficient_tests[j]
        rows.append(
            {
                "statistic": label,
                "baseline": _fmt(res.baseline[j]),
                "adjusted": _fmt(res.adjusted[j]),
                "se_baseline": _fmt(float(np.sqrt(max(res.bootstrap.cov[j, j], 0.0)))),
                "se_adjusted": _fmt(
                    float(np.sqrt(max(res.bootstrap.cov[d + j, d + j], 0.0)))
                ),
                "p_formal": _fmt(t.p_value_formal),
                "p_heuristic": _fmt(t.p_value_heuristic)
                if t.p_value_heuristic is not None
                else "",
            }
        )
    return rows


def _format_table(results: list[ComparisonResult]) -> str:
    lines = []
    for res in results:
        rows = _table_rows(res)
        widths = {
            c: max(len(c), max(len(r[c]) for r in rows)) for c in _COLUMNS
        }
        lines.append(f"comparison: {res.name}")
        lines.append("  ".join(c.ljust(widths[c]) for c in _COLUMNS))
        for r in rows:
            lines.append("  ".join(r[c].ljust(widths[c]) for c in _COLUMNS))
        jt = res.joint_test
        lines.append(
            f"joint: statistic={_fmt(jt.statistic)} critical={_fmt(jt.critical_value)} "
            f"p_formal={_fmt(jt.p_value_formal)} reject={str(jt.reject).lower()}"
        )
        if res.flags.get("analytic_cov_degenerate_all_ones"):
            lines.append(
                "note: analytic covariance (diagnostic) is exactly zero under "
                "all-ones weights; bootstrap covariance is authoritative"
            )
        lines.append("")
    return "\n".join(lines)


def _test_dict(t) -> dict:
    return {
        "statistic": t.statistic,
        "critical_value": t.critical_value,
        "reject": bool(t.reject),
        "p_value_formal": t.p_value_formal,
        "p_value_heuristic": t.p_value_heuristic,
        "h": t.h,
        "alpha": t.alpha,
        "method": t.method,
        "seed": t.seed,
    }


def _results_dict(
    config: AnalysisConfig,
    load_report: LoadReport,
    results: list[ComparisonResult],
    table: str,
) -> dict:
    comparisons = {}
    for res in results:
        d = len(res.labels)
        entry = {
            "labels": list(res.labels),
            "baseline": [float(v) for v in res.baseline],
            "adjusted": [float(v) for v in res.adjusted],
            "bootstrap_cov": {
                "matrix": res.bootstrap.cov.tolist(),
                "provenance": "bootstrap",
                "iterations": res.bootstrap.iterations,
                "seed": res.bootstrap.seed,
                "failed_draws": res.bootstrap.n_failed,
            },
            "difference_cov": res.diff_cov.tolist(),
            "tests": {
                res.labels[j]: _test_dict(res.coefficient_tests[j]) for j in range(d)
            },
            "joint_test": _test_dict(res.joint_test),
            "table_rows": _table_rows(res),
            "flags": dict(res.flags),
        }
        if res.analytic is not None:
            entry["analytic_cov"] = {
                "matrix": res.analytic.tolist(),
                "provenance": "analytic-diagnostic",
            }
        comparisons[res.name] = entry
    return {
        "input": config.input_path,
        "rows_used": load_report.n_rows,
        "rows_dropped": load_report.n_dropped,
        "dropped_by_column": dict(load_report.dropped_by_column),
        "bootstrap": {
            "iterations": config.plan.iterations,
            "seed": config.plan.seed,
            "resample_unit": config.plan.resample_unit,
            "engine": config.plan.engine,
        },
        "test": {
            "h": config.test.h,
            "alpha": config.test.alpha,
            "norm": config.test.norm_matrix
            if isinstance(config.test.norm_matrix, str)
            else "matrix",
            "mc_draws": config.test.mc_draws,
            "seed": config.test.seed,
            "method": config.test.method,
        },
        "comparisons": comparisons,
    }


def _plot_pair_columns(res: ComparisonResult, pair) -> tuple[int, int, str]:
    d = len(res.labels)
    if isinstance(pair, str):
        if pair not in res.labels:
            raise DataError(f"plot pair {pair!r} is not a reported statistic")
        j = res.labels.index(pair)
        return j, d + j, pair
    i, j = int(pair[0]), int(pair[1])
    if not (0 <= i < 2 * d and 0 <= j < 2 * d):
        raise DataError(f"plot pair {pair} out of range for {2 * d} draw columns")
    return i, j, f"col{i}_col{j}"


def write_outputs(bundle: ReportBundle, directory: str | None = None) -> dict[str, str]:
    """Write results.json, report.txt, draws, and plot grids; returns paths."""
    import os

    directory = directory or bundle.config.output_dir
    paths = {}
    results_json = json.dumps(bundle.results_dict, sort_keys=True, indent=2)
    paths["results"] = os.path.join(directory, "results.json")
    atomic_write_text(paths["results"], results_json + "\n")
    paths["report"] = os.path.join(directory, "report.txt")
    atomic_write_text(paths["report"], bundle.table_text)
    for res in bundle.results:
        p = os.path.join(directory, f"draws_{res.name}.csv")
        atomic_write_text(p, draws_csv_text(res.bootstrap.draws))
        paths[f"draws_{res.name}"] = p
        for pair in bundle.config.plot_pairs:
            i, j, tag = _plot_pair_columns(res, pair)
            grid = emit_plot_grid(
                res.bootstrap.draws[:, i],
                res.bootstrap.draws[:, j],
                point=(float(np.concatenate([res.baseline, res.adjusted])[i]),
                       float(np.concatenate([res.baseline, res.adjusted])[j])),
            )
            gp = os.path.join(directory, f"plotgrid_{res.name}_{tag}.csv")
            atomic_write_text(gp, grid_csv_text(grid.x, grid.y, grid.density))
            paths[f"plotgrid_{res.name}_{tag}"] = gp
    return paths


def regenerate_report(directory: str) -> dict:
    """Recompute p-values from stored draws and the stored test settings.

    Reads results.json and each draws CSV under the directory, recomputes
    the difference covariance and all tests from the draws, rewrites
    report.txt content, and returns {comparison: {label: p_value_formal}}
    for comparison with the stored values.
    """
    import os

    with _stage("report"):
        try:
            with open(os.path.join(directory, "results.json"), "r", encoding="utf-8") as fh:
                stored = json.load(fh)
        except OSError as exc:
            raise DataError(f"cannot open results.json in {directory}: {exc}") from exc
        test_raw = stored["test"]
        spec = TestSpec(
            h=float(test_raw["h"]),
            alpha=float(test_raw["alpha"]),
            norm_matrix=test_raw["norm"],
            mc_draws=int(test_raw["mc_draws"]),
            seed=int(test_raw["seed"]),
            method=test_raw["method"],
        )
        out: dict = {}
        for name, entry in stored["comparisons"].items():
            draws = read_draws_csv(os.path.join(directory, f"draws_{name}.csv"))
            d = len(entry["labels"])
            from .bootstrap import bootstrap_cov

            cov = bootstrap_cov(draws)
            diff_cov = difference_covariance(cov, d)
            b1 = np.asarray(entry["baseline"], dtype=float)
            b2 = np.asarray(entry["adjusted"], dtype=float)
            pvals = {}
            for j, label in enumerate(entry["labels"]):
                rep = robustness_test(
                    b1[j : j + 1],
                    b2[j : j + 1],
                    np.array([[float(diff_cov[j, j])]]),
                    spec,
                    baseline_cov=np.array([[float(cov[j, j])]]),
                )
                pvals[label] = rep.p_value_formal
            joint = robustness_test(b1, b2, diff_cov, spec, baseline_cov=cov[:d, :d])
            pvals["joint"] = joint.p_value_formal
            out[name] = pvals
        return out
