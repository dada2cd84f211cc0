"""Shared fixtures for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from trimtest import PanelDataset


def make_panel(
    n_clusters: int,
    cluster_size: int,
    seed: int,
    slope: float = 2.0,
    intercept: float = 1.0,
    cluster_sd: float = 0.5,
) -> PanelDataset:
    """Balanced panel with outcome y = intercept + slope * x + cluster effect + noise."""
    rng = np.random.default_rng(seed)
    n = n_clusters * cluster_size
    cluster_ids = np.repeat(np.arange(n_clusters), cluster_size)
    effects = rng.normal(0.0, cluster_sd, size=n_clusters)
    x = rng.normal(size=n)
    y = intercept + slope * x + effects[cluster_ids] + rng.normal(size=n)
    return PanelDataset({"y": y, "x": x}, cluster_ids)


@pytest.fixture
def panel() -> PanelDataset:
    return make_panel(30, 5, seed=42)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


def pytest_runtest_logreport(report):
    """Print one summary line per acceptance criterion as it finishes."""
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return
    if report.when == "call":
        outcome = "PASS" if report.passed else "FAIL"
    elif report.when == "setup" and report.skipped:
        outcome = "SKIP"
    else:
        return
    tag = name.removeprefix("test_")
    print(f"\nACCEPTANCE {tag}: {outcome}", flush=True)
