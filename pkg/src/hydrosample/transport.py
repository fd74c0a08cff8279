"""
Contaminant transport on a stationary flow field.

Every pipe with flow is split into segments and advected with a donor-cell
upwind scheme; junctions mix all arriving water completely. The simulation
produces the node-by-time concentration matrix X for one injection scenario.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd

from hydrosample.exception import CflError, HydroSampleError, ScenarioError
from hydrosample.hydraulics import FlowField, solve_flows
from hydrosample.network import InjectionScenario, PipeNetwork, VariantSpec

logger = logging.getLogger(__name__)

MAX_SEGMENTS = 2000
STAGNANT_RTOL = 1e-12
RESIDUAL_RTOL = 1e-6
MG_PER_M3_TO_MG_PER_L = 1e-3


@dataclass(frozen=True, eq=False)
class MassBalance:
    """
    Cumulative contaminant mass (mg) after every simulated step.
    """

    injected: np.ndarray
    stored: np.ndarray
    expelled: np.ndarray
    absorbed: np.ndarray

    def relative_error(self) -> np.ndarray:
        residual = np.abs(self.injected - self.stored - self.expelled - self.absorbed)
        denom = np.where(self.injected > 0, self.injected, 1.0)
        return np.asarray(residual / denom)

    def summary(self) -> dict[str, float]:
        if self.injected.size == 0:
            return {"injected": 0.0, "stored": 0.0, "expelled": 0.0, "absorbed": 0.0}
        return {
            "injected": float(self.injected[-1]),
            "stored": float(self.stored[-1]),
            "expelled": float(self.expelled[-1]),
            "absorbed": float(self.absorbed[-1]),
            "max_relative_error": float(self.relative_error().max()),
        }


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """
    Args:
        values (np.ndarray): N x K junction concentrations, mg/L, all >= 0.
        node_index (tuple[str, ...]): Junction ids in canonical order (length N).
        timestep (float): Seconds between columns.
        scenario (InjectionScenario): The scenario that produced the matrix.
        mass_balance (MassBalance | None): Per-step mass ledger, when simulated.
    """

    values: np.ndarray
    node_index: tuple[str, ...]
    timestep: float
    scenario: InjectionScenario
    mass_balance: MassBalance | None = field(default=None)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != len(self.node_index):
            raise ScenarioError(
                f"DataMatrix values have shape {values.shape}, expected "
                f"({len(self.node_index)}, K)."
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "node_index", tuple(self.node_index))

    @property
    def n_nodes(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_steps(self) -> int:
        return int(self.values.shape[1])

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps, dtype=float) * self.timestep

    @property
    def scenario_id(self) -> str:
        return self.scenario.scenario_id

    @property
    def scenario_max(self) -> float:
        return float(self.values.max()) if self.values.size else 0.0

    def rows(self, nodes: Sequence[int]) -> np.ndarray:
        return self.values[list(nodes), :]

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values.T, columns=list(self.node_index))
        frame.insert(0, "t_s", self.times)
        return frame

    def sidecar(self) -> dict[str, Any]:
        sc = self.scenario
        meta: dict[str, Any] = {
            "scenario_id": sc.scenario_id,
            "scenario": {
                "source": sc.source,
                "rate_mg_s": sc.rate,
                "start_s": sc.start,
                "duration_s": sc.duration,
                "timestep_s": sc.timestep,
                "max_steps": sc.max_steps,
            },
            "n_nodes": self.n_nodes,
            "n_steps": self.n_steps,
            "node_index": list(self.node_index),
        }
        if self.mass_balance is not None:
            meta["mass_balance"] = self.mass_balance.summary()
        return meta

    def to_csv(self) -> str:
        return str(self.to_frame().to_csv(index=False, lineterminator="\n"))

    def write(self, csv_path: Path) -> tuple[Path, Path]:
        csv_path = Path(csv_path)
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        csv_path.write_text(self.to_csv(), encoding="utf-8")
        json_path = csv_path.with_suffix(".json")
        json_path.write_text(
            json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        return csv_path, json_path


def read_data_matrix(csv_path: Path) -> DataMatrix:
    """
    Loads a DataMatrix written by DataMatrix.write (CSV plus JSON sidecar).
    """
    csv_path = Path(csv_path)
    json_path = csv_path.with_suffix(".json")
    try:
        frame = pd.read_csv(csv_path, float_precision="round_trip")
        meta = json.loads(json_path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise ScenarioError(
            f"Error reading data matrix at {csv_path}. {e}",
            title="Hydrosample couldn't load your data matrix.",
        ) from e
    if frame.columns[0] != "t_s":
        raise ScenarioError(
            f"{csv_path} does not start with a t_s column.",
            title="Hydrosample couldn't load your data matrix.",
        )
    sc = meta["scenario"]
    scenario = InjectionScenario(
        source=sc["source"],
        rate=float(sc["rate_mg_s"]),
        start=float(sc["start_s"]),
        duration=float(sc["duration_s"]),
        timestep=float(sc["timestep_s"]),
        max_steps=int(sc["max_steps"]),
    )
    node_index = tuple(str(c) for c in frame.columns[1:])
    return DataMatrix(
        values=frame.iloc[:, 1:].to_numpy(dtype=float).T,
        node_index=node_index,
        timestep=scenario.timestep,
        scenario=scenario,
    )


class TransportSimulation:
    """
    Steps the upwind advection of one injection scenario. Masses are in mg,
    volumes in m3.
    """

    def __init__(
        self, net: PipeNetwork, flows: FlowField, scenario: InjectionScenario
    ) -> None:
        scenario.check_against(net)
        self.net = net
        self.scenario = scenario
        self.dt = scenario.timestep
        n = net.n_junctions
        index = net.junction_index
        qmax = max((abs(q) for q in flows.pipe_flow.values()), default=0.0)

        courants: list[np.ndarray] = []
        up: list[int] = []
        down: list[int] = []
        volumes: list[float] = []
        seg_counts: list[int] = []
        for p in net.pipes:
            q = flows.pipe_flow[p.id]
            if qmax == 0.0 or abs(q) <= STAGNANT_RTOL * qmax:
                continue
            upstream, downstream = (p.start, p.end) if q > 0 else (p.end, p.start)
            travel = abs(q) / p.area * self.dt
            if travel > p.length * (1 + 1e-9):
                raise CflError(
                    f"Pipe {p.id} moves water {travel:.4g} m per step but is only "
                    f"{p.length:.4g} m long; reduce the time step below "
                    f"{p.length * p.area / abs(q):.4g} s.",
                    pipe_id=p.id,
                )
            n_seg = min(
                MAX_SEGMENTS, max(1, math.floor(p.length / travel * (1 + 1e-9)))
            )
            seg_volume = p.area * p.length / n_seg
            courant = min(1.0, abs(q) * self.dt / seg_volume)
            courants.append(np.full(n_seg, courant))
            up.append(index.get(upstream, -1))
            down.append(index.get(downstream, -1))
            volumes.append(abs(q) * self.dt)
            seg_counts.append(n_seg)

        counts = np.array(seg_counts, dtype=int)
        ends = np.cumsum(counts)
        self.head_idx = ends - counts
        self.tail_idx = ends - 1
        self.courant = np.concatenate(courants) if courants else np.zeros(0)
        self.mass = np.zeros_like(self.courant)
        self.up = np.array(up, dtype=int)
        self.down = np.array(down, dtype=int)
        pipe_volume = np.array(volumes, dtype=float)

        self.to_junction = self.down >= 0
        self.from_junction = self.up >= 0
        self.inflow_volume = np.bincount(
            self.down[self.to_junction],
            weights=pipe_volume[self.to_junction],
            minlength=n,
        )
        demand_volume = np.array([j.demand for j in net.junctions]) * self.dt
        outflow_volume = demand_volume + np.bincount(
            self.up[self.from_junction],
            weights=pipe_volume[self.from_junction],
            minlength=n,
        )
        safe_out = np.where(outflow_volume > 0, outflow_volume, 1.0)
        self.pipe_share = np.zeros(len(up))
        self.pipe_share[self.from_junction] = (
            pipe_volume[self.from_junction] / safe_out[self.up[self.from_junction]]
        )
        self.demand_share = np.where(outflow_volume > 0, demand_volume / safe_out, 0.0)

        self.source = index[scenario.source]
        if self.inflow_volume[self.source] <= 0:
            raise ScenarioError(
                f"Junction {scenario.source} has no through-flow; injected mass "
                "could never leave the network.",
                title="Invalid injection scenario.",
            )

        self.step_index = 0
        self.injected = 0.0
        self.expelled = 0.0
        self.absorbed = 0.0

    @property
    def time(self) -> float:
        return self.step_index * self.dt

    @property
    def stored(self) -> float:
        return float(self.mass.sum())

    @property
    def injection_closed(self) -> bool:
        return self.time >= self.scenario.end

    def step(self) -> np.ndarray:
        """
        Advances one time step and returns the junction concentrations (mg/L)
        after mixing.
        """
        n = self.net.n_junctions
        t = self.time
        transfer = self.courant * self.mass
        outs = transfer[self.tail_idx]

        arriving = np.bincount(
            self.down[self.to_junction], weights=outs[self.to_junction], minlength=n
        )
        self.absorbed += float(outs[~self.to_junction].sum())
        if self.scenario.start <= t < self.scenario.end:
            dose = self.scenario.rate * self.dt
            arriving[self.source] += dose
            self.injected += dose

        concentration = np.divide(
            arriving,
            self.inflow_volume,
            out=np.zeros(n),
            where=self.inflow_volume > 0,
        )
        head_in = np.zeros(len(self.up))
        head_in[self.from_junction] = (
            arriving[self.up[self.from_junction]] * self.pipe_share[self.from_junction]
        )
        self.expelled += float((arriving * self.demand_share).sum())

        incoming = np.zeros_like(self.mass)
        incoming[1:] = transfer[:-1]
        incoming[self.head_idx] = head_in
        self.mass = self.mass - transfer + incoming
        self.step_index += 1
        return concentration * MG_PER_M3_TO_MG_PER_L

    def finished(self) -> bool:
        return (
            self.injection_closed
            and self.injected > 0
            and self.stored < RESIDUAL_RTOL * self.injected
        )


def simulate_transport(
    net: PipeNetwork, flows: FlowField, scenario: InjectionScenario
) -> DataMatrix:
    """
    Simulates one injection scenario until the contaminant is flushed
    (in-network mass below 1e-6 of the injected mass) or max_steps is reached.

    Raises: ScenarioError if the source is not a junction or carries no flow;
        CflError naming the first pipe whose travel distance per step exceeds
        its length.
    """
    sim = TransportSimulation(net, flows, scenario)
    columns: list[np.ndarray] = []
    injected: list[float] = []
    stored: list[float] = []
    expelled: list[float] = []
    absorbed: list[float] = []
    while sim.step_index < scenario.max_steps:
        columns.append(sim.step())
        injected.append(sim.injected)
        stored.append(sim.stored)
        expelled.append(sim.expelled)
        absorbed.append(sim.absorbed)
        if sim.finished():
            break
    else:
        if sim.injected > 0:
            logger.warning(
                "Scenario %s hit max_steps=%d with %.3g%% of the mass still in the "
                "network",
                scenario.scenario_id,
                scenario.max_steps,
                100 * sim.stored / sim.injected,
            )
    values = (
        np.column_stack(columns) if columns else np.zeros((net.n_junctions, 0))
    )
    logger.debug("Scenario %s ran %d steps", scenario.scenario_id, values.shape[1])
    return DataMatrix(
        values=values,
        node_index=net.junction_ids,
        timestep=scenario.timestep,
        scenario=scenario,
        mass_balance=MassBalance(
            injected=np.array(injected),
            stored=np.array(stored),
            expelled=np.array(expelled),
            absorbed=np.array(absorbed),
        ),
    )


def run_scenario_sweep(
    net: PipeNetwork,
    sources: Sequence[str],
    variants: VariantSpec,
    flows: FlowField | None = None,
    max_workers: int | None = None,
) -> list[DataMatrix]:
    """
    Simulates every (source, rate, duration, start) combination in
    lexicographic order of the cartesian product.

    Raises: ScenarioError if sources is empty or repeats a junction; any
        simulate_transport error, prefixed with the failing scenario id.
    """
    if not sources:
        raise ScenarioError("A scenario sweep needs at least one source.")
    if len(set(sources)) != len(sources):
        raise ScenarioError(f"A scenario sweep lists a source twice: {list(sources)}.")
    solved: FlowField = flows if flows is not None else solve_flows(net)
    scenarios = list(variants.scenarios(list(sources)))

    def _run(scenario: InjectionScenario) -> DataMatrix:
        try:
            return simulate_transport(net, solved, scenario)
        except HydroSampleError as e:
            e.msg = f"Scenario {scenario.scenario_id}: {e.msg}"
            e.args = (e.msg,)
            raise

    logger.info(
        "Simulating %d scenarios (%d sources x %d variants)",
        len(scenarios),
        len(sources),
        len(variants),
    )
    if max_workers is not None and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(_run, scenarios))
    return [_run(s) for s in scenarios]
