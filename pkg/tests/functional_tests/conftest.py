from __future__ import annotations

from pathlib import Path
from typing import Any

import pytest
from hydrosample.config import PipelineConfig
from hydrosample.hydraulics import solve_flows
from hydrosample.inp import load_network, serialize_inp
from hydrosample.network import PipeNetwork, VariantSpec
from hydrosample.transport import DataMatrix, run_scenario_sweep

# eight sources spread over the 5 x 6 grid
GRID_SOURCES = ("J2", "J5", "J9", "J12", "J16", "J20", "J23", "J28")


@pytest.fixture
def y_config(y_inp: Path) -> PipelineConfig:
    """
    A small experiment on the 5-junction y network: 3 sources, 2 variants each.
    """
    profile: dict[str, Any] = {
        "network": str(y_inp),
        "sources": ["J1", "J2", "J4"],
        "rates": [1.0, 2.0],
        "durations": [120.0],
        "max_steps": 80,
        "frequent_thresholds": [1, 2],
        "important_n": [1],
        "budgets": [0.4, 1.0],
        "seeds": [0, 1],
        "epochs": 2,
        "batch_size": 16,
    }
    return PipelineConfig.from_profile(profile)


@pytest.fixture(scope="session")
def grid_fixture_inp(
    tmp_path_factory: pytest.TempPathFactory, grid_network: PipeNetwork
) -> Path:
    path = tmp_path_factory.mktemp("networks") / "grid.inp"
    path.write_text(serialize_inp(grid_network), encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def grid_config(grid_fixture_inp: Path) -> PipelineConfig:
    """
    The 30-junction fixture sweep: 8 sources x 4 variants (rate x duration).
    """
    profile: dict[str, Any] = {
        "network": str(grid_fixture_inp),
        "sources": list(GRID_SOURCES),
        "rates": [5.0, 10.0],
        "durations": [600.0, 1200.0],
        "timestep": 60.0,
        "max_steps": 1500,
        "frequent_thresholds": [1],
        "important_n": [1],
        "budgets": [0.3, 0.5, 0.75],
        "seeds": [0, 1, 2, 3, 4],
        "epochs": 60,
        "batch_size": 256,
        "use_cache": False,
    }
    return PipelineConfig.from_profile(profile)


@pytest.fixture(scope="session")
def grid_sweep(grid_config: PipelineConfig) -> list[DataMatrix]:
    net = load_network(grid_config.network)
    variants = VariantSpec(
        rates=grid_config.rates,
        durations=grid_config.durations,
        timestep=grid_config.timestep,
        max_steps=grid_config.max_steps,
    )
    return run_scenario_sweep(
        net, grid_config.sources, variants, solve_flows(net), max_workers=4
    )
