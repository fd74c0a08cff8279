from __future__ import annotations

import math
from pathlib import Path
from typing import Callable

import numpy as np
import pytest
from hydrosample.inp import load_network, serialize_inp
from hydrosample.network import (
    InjectionScenario,
    Junction,
    Pipe,
    PipeNetwork,
    Reservoir,
)
from hydrosample.transport import DataMatrix


@pytest.fixture
def data_dir() -> Path:
    here = Path(__file__)
    return here.parent / "data"


@pytest.fixture(autouse=True)
def isolated_sweep_cache(
    request: pytest.FixtureRequest,
    tmp_path_factory: pytest.TempPathFactory,
    monkeypatch: pytest.MonkeyPatch,
) -> Path | None:
    """
    Points the sweep cache at a fresh directory so tests never read or write
    the user's cache.
    """
    if "use_cache" in request.keywords:
        return None
    cache_dir = tmp_path_factory.mktemp("sweep-cache")
    monkeypatch.setattr("hydrosample.sweep_cache.get_cache_dir", lambda: cache_dir)
    return cache_dir


@pytest.fixture
def y_network(data_dir: Path) -> PipeNetwork:
    return load_network(data_dir / "networks" / "y_network.inp")


@pytest.fixture
def tee_network(data_dir: Path) -> PipeNetwork:
    return load_network(data_dir / "networks" / "tee.inp")


@pytest.fixture
def plug_flow_network() -> PipeNetwork:
    """
    R1 -(50 m)- J1 -(100 m)- J2, with J2's demand equal to the pipe area so the
    water moves at exactly 1 m/s.
    """
    diameter = 0.2
    area = math.pi * diameter**2 / 4
    return PipeNetwork(
        junctions=(Junction("J1", 0.0), Junction("J2", area)),
        reservoirs=(Reservoir("R1", 30.0),),
        pipes=(
            Pipe("P1", "R1", "J1", 50.0, diameter),
            Pipe("P2", "J1", "J2", 100.0, diameter),
        ),
    )


def make_grid_network(rows: int = 5, cols: int = 6, seed: int = 7) -> PipeNetwork:
    """
    A looped rows x cols street grid fed from one reservoir at the J1 corner.
    Pipe lengths are drawn from 80-200 m and demands from 0.5-3 L/s.
    """
    rng = np.random.default_rng(seed)
    n = rows * cols
    junctions = tuple(
        Junction(f"J{i + 1}", float(np.round(rng.uniform(0.0005, 0.003), 6)))
        for i in range(n)
    )
    pipes = [Pipe("P0", "R1", "J1", 150.0, 0.4)]
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                pipes.append(
                    Pipe(
                        f"P{len(pipes)}",
                        f"J{i + 1}",
                        f"J{i + 2}",
                        float(np.round(rng.uniform(80, 200), 1)),
                        0.2,
                    )
                )
            if r + 1 < rows:
                pipes.append(
                    Pipe(
                        f"P{len(pipes)}",
                        f"J{i + 1}",
                        f"J{i + cols + 1}",
                        float(np.round(rng.uniform(80, 200), 1)),
                        0.2,
                    )
                )
    return PipeNetwork(
        junctions=junctions,
        reservoirs=(Reservoir("R1", 80.0),),
        pipes=tuple(pipes),
    )


@pytest.fixture(scope="session")
def grid_network() -> PipeNetwork:
    return make_grid_network()


@pytest.fixture
def grid_inp(tmp_path: Path, grid_network: PipeNetwork) -> Path:
    path = tmp_path / "grid.inp"
    path.write_text(serialize_inp(grid_network), encoding="utf-8")
    return path


@pytest.fixture
def y_inp(data_dir: Path) -> Path:
    return data_dir / "networks" / "y_network.inp"


MatrixFactory = Callable[..., DataMatrix]


@pytest.fixture
def matrix_factory() -> MatrixFactory:
    """
    Wraps a bare N x K array in a DataMatrix with a synthetic scenario.
    """

    def _make(
        values: np.ndarray,
        source: str = "J1",
        rate: float = 1.0,
        duration: float = 60.0,
        start: float = 0.0,
    ) -> DataMatrix:
        values = np.asarray(values, dtype=float)
        return DataMatrix(
            values=values,
            node_index=tuple(f"J{i + 1}" for i in range(values.shape[0])),
            timestep=60.0,
            scenario=InjectionScenario(
                source=source,
                rate=rate,
                start=start,
                duration=duration,
                timestep=60.0,
                max_steps=max(1, values.shape[1]),
            ),
        )

    return _make
