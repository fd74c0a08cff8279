from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, Tuple

import networkx as nx

from hydrosample.exception import NetworkValidationError, ScenarioError


@dataclass(frozen=True)
class Junction:
    id: str
    demand: float = 0.0  # m3/s


@dataclass(frozen=True)
class Reservoir:
    id: str
    head: float  # m


@dataclass(frozen=True)
class Pipe:
    id: str
    start: str
    end: str
    length: float  # m
    diameter: float  # m

    @property
    def area(self) -> float:
        return math.pi * self.diameter**2 / 4

    @property
    def conductance(self) -> float:
        return self.diameter**2 / self.length


@dataclass(frozen=True)
class PipeNetwork:
    """
    The static topology of a water distribution network.

    Args:
        junctions (tuple[Junction, ...]): Demand nodes. Their order defines the
            canonical node indexing (0..N-1) used by every matrix downstream.
        reservoirs (tuple[Reservoir, ...]): Fixed-head nodes. At least one.
        pipes (tuple[Pipe, ...]): Links between declared nodes. Parallel pipes
            are allowed, self-loops are not.

    Raises: NetworkValidationError if any invariant is violated.
    """

    junctions: Tuple[Junction, ...]
    reservoirs: Tuple[Reservoir, ...]
    pipes: Tuple[Pipe, ...]
    _index: Dict[str, int] = field(
        init=False, repr=False, compare=False, hash=False, default_factory=dict
    )

    def __post_init__(self) -> None:
        object.__setattr__(self, "junctions", tuple(self.junctions))
        object.__setattr__(self, "reservoirs", tuple(self.reservoirs))
        object.__setattr__(self, "pipes", tuple(self.pipes))
        self._validate()
        object.__setattr__(
            self, "_index", {j.id: i for i, j in enumerate(self.junctions)}
        )

    @property
    def junction_ids(self) -> tuple[str, ...]:
        return tuple(j.id for j in self.junctions)

    @property
    def reservoir_ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.reservoirs)

    @property
    def n_junctions(self) -> int:
        return len(self.junctions)

    @property
    def junction_index(self) -> dict[str, int]:
        return dict(self._index)

    @property
    def total_demand(self) -> float:
        return math.fsum(j.demand for j in self.junctions)

    def index_of(self, junction_id: str) -> int:
        try:
            return self._index[junction_id]
        except KeyError as e:
            raise NetworkValidationError(
                f"{junction_id} is not a junction of this network.",
                title="Unknown junction.",
            ) from e

    def is_junction(self, node_id: str) -> bool:
        return node_id in self._index

    def graph(self) -> nx.MultiGraph:
        """
        Returns an undirected multigraph of every node, keyed by pipe id.
        """
        g = nx.MultiGraph()
        g.add_nodes_from(self.junction_ids, kind="junction")
        g.add_nodes_from(self.reservoir_ids, kind="reservoir")
        for p in self.pipes:
            g.add_edge(p.start, p.end, key=p.id)
        return g

    def junction_graph(self) -> nx.Graph:
        """
        Returns the simple, unweighted graph on junctions only (reservoirs
        removed, parallel pipes collapsed), with nodes labelled by canonical index.
        """
        g = nx.Graph()
        g.add_nodes_from(range(self.n_junctions))
        for p in self.pipes:
            if self.is_junction(p.start) and self.is_junction(p.end):
                g.add_edge(self._index[p.start], self._index[p.end])
        return g

    def _validate(self) -> None:
        if not self.junctions:
            raise NetworkValidationError(
                "A network needs at least one junction.",
                title="Invalid network.",
            )
        if not self.reservoirs:
            raise NetworkValidationError(
                "A network needs at least one reservoir for a well-posed flow solve.",
                title="Invalid network.",
            )
        seen: set[str] = set()
        for node_id in itertools.chain(
            (j.id for j in self.junctions), (r.id for r in self.reservoirs)
        ):
            if node_id in seen:
                raise NetworkValidationError(
                    f"Duplicate node id: {node_id}", title="Invalid network."
                )
            seen.add(node_id)
        for j in self.junctions:
            if not math.isfinite(j.demand) or j.demand < 0:
                raise NetworkValidationError(
                    f"Junction {j.id} has an invalid demand {j.demand}; demands "
                    "must be finite and non-negative.",
                    title="Invalid network.",
                )
        for r in self.reservoirs:
            if not math.isfinite(r.head):
                raise NetworkValidationError(
                    f"Reservoir {r.id} has a non-finite head.",
                    title="Invalid network.",
                )
        pipe_ids: set[str] = set()
        for p in self.pipes:
            if p.id in pipe_ids:
                raise NetworkValidationError(
                    f"Duplicate pipe id: {p.id}", title="Invalid network."
                )
            pipe_ids.add(p.id)
            for end in (p.start, p.end):
                if end not in seen:
                    raise NetworkValidationError(
                        f"Pipe {p.id} references an undeclared node: {end}",
                        title="Invalid network.",
                    )
            if p.start == p.end:
                raise NetworkValidationError(
                    f"Pipe {p.id} is a self-loop on {p.start}.",
                    title="Invalid network.",
                )
            if not (p.length > 0 and math.isfinite(p.length)) or not (
                p.diameter > 0 and math.isfinite(p.diameter)
            ):
                raise NetworkValidationError(
                    f"Pipe {p.id} must have a positive length and diameter.",
                    title="Invalid network.",
                )
        g = nx.MultiGraph()
        g.add_nodes_from(seen)
        g.add_edges_from((p.start, p.end) for p in self.pipes)
        if not nx.is_connected(g):
            parts = sorted(
                (sorted(c) for c in nx.connected_components(g)), key=lambda c: c[0]
            )
            raise NetworkValidationError(
                f"The network is disconnected into {len(parts)} parts; "
                f"e.g. {', '.join(parts[-1][:5])} cannot reach {parts[0][0]}.",
                title="Invalid network.",
            )


@dataclass(frozen=True)
class InjectionScenario:
    """
    A chemical injected at one junction, at a constant rate, for a fixed window.

    Args:
        source (str): The junction receiving the injection.
        rate (float): Injection rate in mg/s, > 0.
        start (float): Injection start time in s, >= 0.
        duration (float): Injection duration in s; an integer multiple of timestep.
        timestep (float): Simulation time step in s, > 0.
        max_steps (int): Hard cap on the number of simulated steps.
    """

    source: str
    rate: float
    start: float
    duration: float
    timestep: float
    max_steps: int

    def __post_init__(self) -> None:
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ScenarioError(f"Injection rate must be positive, got {self.rate}.")
        if not (self.start >= 0 and math.isfinite(self.start)):
            raise ScenarioError(f"Injection start must be >= 0, got {self.start}.")
        if not (self.timestep > 0 and math.isfinite(self.timestep)):
            raise ScenarioError(f"Time step must be positive, got {self.timestep}.")
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise ScenarioError(
                f"Injection duration must be positive, got {self.duration}."
            )
        ratio = self.duration / self.timestep
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ScenarioError(
                f"Injection duration {self.duration} s is not a multiple of the "
                f"time step {self.timestep} s."
            )
        if int(self.max_steps) != self.max_steps or self.max_steps < 1:
            raise ScenarioError(f"max_steps must be >= 1, got {self.max_steps}.")

    @property
    def scenario_id(self) -> str:
        return (
            f"{self.source}-r{_short(self.rate)}-d{_short(self.duration)}"
            f"-s{_short(self.start)}"
        )

    @property
    def end(self) -> float:
        return self.start + self.duration

    def check_against(self, net: PipeNetwork) -> None:
        if not net.is_junction(self.source):
            kind = "a reservoir" if self.source in net.reservoir_ids else "unknown"
            raise ScenarioError(
                f"Injection source {self.source} must be a junction ({kind}).",
                title="Invalid injection scenario.",
            )


@dataclass(frozen=True)
class VariantSpec:
    """
    The variants simulated for every source in a sweep. Scenarios are the
    cartesian product source x rate x duration x start, in that order.
    """

    rates: Tuple[float, ...]
    durations: Tuple[float, ...]
    starts: Tuple[float, ...] = (0.0,)
    timestep: float = 60.0
    max_steps: int = 2000

    def __post_init__(self) -> None:
        for name in ("rates", "durations", "starts"):
            values = tuple(float(v) for v in getattr(self, name))
            if not values:
                raise ScenarioError(f"VariantSpec.{name} must not be empty.")
            if len(set(values)) != len(values):
                raise ScenarioError(
                    f"VariantSpec.{name} repeats a value: {values}; every variant "
                    "needs its own scenario id."
                )
            object.__setattr__(self, name, values)

    def __len__(self) -> int:
        return len(self.rates) * len(self.durations) * len(self.starts)

    def scenarios(self, sources: tuple[str, ...] | list[str]) -> Iterator[
        InjectionScenario
    ]:
        for source, rate, duration, start in itertools.product(
            sources, self.rates, self.durations, self.starts
        ):
            yield InjectionScenario(
                source=source,
                rate=rate,
                start=start,
                duration=duration,
                timestep=self.timestep,
                max_steps=self.max_steps,
            )


def _short(x: float) -> str:
    # shortest round-trip repr: distinct values give distinct ids
    s = repr(float(x) + 0.0)
    return s[:-2] if s.endswith(".0") else s
