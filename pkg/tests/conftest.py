"""Shared fixtures: benchmark-table parameters and small path ensembles."""

import numpy as np
import pytest

from bermudan_jd.model import DiscretizationGrids, ModelParams, simulate_paths


@pytest.fixture(scope="session")
def table_params():
    """Single-asset benchmark configuration (lam=1, x0=40)."""
    return ModelParams(r=0.04, delta=0.0, sigma=0.2, lam=1.0, m=0.06,
                       theta=0.2, x0=40.0, sk=40.0, T=1.0, n_intervals=10)


@pytest.fixture(scope="session")
def table_grids(table_params):
    return DiscretizationGrids.build(table_params, euler_step=0.01, n_cells=10)


@pytest.fixture(scope="session")
def small_bundle(table_params, table_grids):
    return simulate_paths(table_params, table_grids, n_paths=10_000, seed=(900, 0))
