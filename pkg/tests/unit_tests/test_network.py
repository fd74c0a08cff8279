from __future__ import annotations

import math

import networkx as nx
import pytest
from hydrosample.exception import NetworkValidationError, ScenarioError
from hydrosample.network import (
    InjectionScenario,
    Junction,
    Pipe,
    PipeNetwork,
    Reservoir,
    VariantSpec,
)


def _net(**overrides: object) -> PipeNetwork:
    kwargs: dict = dict(
        junctions=(Junction("J1", 0.001), Junction("J2", 0.001)),
        reservoirs=(Reservoir("R1", 20.0),),
        pipes=(Pipe("P1", "R1", "J1", 100, 0.1), Pipe("P2", "J1", "J2", 100, 0.1)),
    )
    kwargs.update(overrides)
    return PipeNetwork(**kwargs)


def test_pipe_geometry() -> None:
    p = Pipe("P1", "A", "B", length=50.0, diameter=0.2)
    assert p.area == pytest.approx(math.pi * 0.01)
    assert p.conductance == pytest.approx(0.04 / 50.0)


def test_network_indexing() -> None:
    net = _net()
    assert net.n_junctions == 2
    assert net.index_of("J2") == 1
    assert net.is_junction("J1")
    assert not net.is_junction("R1")
    assert net.total_demand == pytest.approx(0.002)
    with pytest.raises(NetworkValidationError):
        net.index_of("R1")


@pytest.mark.parametrize(
    "overrides,key_words",
    [
        ({"junctions": ()}, ["at least one junction"]),
        ({"reservoirs": ()}, ["at least one reservoir"]),
        (
            {"junctions": (Junction("J1"), Junction("J1"))},
            ["Duplicate node id"],
        ),
        (
            {"reservoirs": (Reservoir("J1", 10.0),)},
            ["Duplicate node id: J1"],
        ),
        (
            {"junctions": (Junction("J1", -0.1), Junction("J2"))},
            ["invalid demand"],
        ),
        ({"reservoirs": (Reservoir("R1", math.nan),)}, ["non-finite head"]),
        (
            {
                "pipes": (
                    Pipe("P1", "R1", "J1", 100, 0.1),
                    Pipe("P1", "J1", "J2", 100, 0.1),
                )
            },
            ["Duplicate pipe id"],
        ),
        (
            {"pipes": (Pipe("P1", "R1", "J1", 100, 0.1), Pipe("P2", "J1", "J7", 1, 1))},
            ["undeclared node", "J7"],
        ),
        (
            {"pipes": (Pipe("P1", "R1", "J1", 100, 0.1), Pipe("P2", "J2", "J2", 1, 1))},
            ["self-loop"],
        ),
        (
            {"pipes": (Pipe("P1", "R1", "J1", 100, 0.1), Pipe("P2", "J1", "J2", 1, 0))},
            ["positive length and diameter"],
        ),
        ({"pipes": (Pipe("P1", "R1", "J1", 100, 0.1),)}, ["disconnected"]),
    ],
)
def test_invalid_network(overrides: dict, key_words: list[str]) -> None:
    with pytest.raises(NetworkValidationError) as exc_info:
        _net(**overrides)
    assert all(w in exc_info.value.msg for w in key_words)


def test_parallel_pipes_allowed_and_collapsed_in_junction_graph() -> None:
    net = _net(
        pipes=(
            Pipe("P1", "R1", "J1", 100, 0.1),
            Pipe("P2", "J1", "J2", 100, 0.1),
            Pipe("P3", "J2", "J1", 120, 0.1),
        )
    )
    assert net.graph().number_of_edges() == 3
    g = net.junction_graph()
    assert set(g.nodes) == {0, 1}
    assert g.number_of_edges() == 1


def test_junction_graph_drops_reservoirs(grid_network: PipeNetwork) -> None:
    g = grid_network.junction_graph()
    assert g.number_of_nodes() == 30
    # 5 x 6 grid: 5 * 5 horizontal + 4 * 6 vertical streets
    assert g.number_of_edges() == 49
    assert nx.is_connected(g)


def test_scenario_fields() -> None:
    sc = InjectionScenario(
        "J1", rate=2.5, start=60, duration=600, timestep=60, max_steps=10
    )
    assert sc.end == 660
    assert sc.scenario_id == "J1-r2.5-d600-s60"


@pytest.mark.parametrize(
    "kwargs,key_words",
    [
        ({"rate": 0.0}, ["rate"]),
        ({"start": -1.0}, ["start"]),
        ({"timestep": 0.0}, ["Time step"]),
        ({"duration": 0.0}, ["duration"]),
        ({"duration": 90.0}, ["not a multiple"]),
        ({"max_steps": 0}, ["max_steps"]),
    ],
)
def test_invalid_scenario(kwargs: dict, key_words: list[str]) -> None:
    base: dict = dict(
        source="J1", rate=1.0, start=0.0, duration=120.0, timestep=60.0, max_steps=10
    )
    base.update(kwargs)
    with pytest.raises(ScenarioError) as exc_info:
        InjectionScenario(**base)
    assert all(w in exc_info.value.msg for w in key_words)


@pytest.mark.parametrize("source,word", [("R1", "reservoir"), ("X9", "unknown")])
def test_scenario_source_must_be_junction(source: str, word: str) -> None:
    sc = InjectionScenario(source, 1.0, 0.0, 60.0, 60.0, 10)
    with pytest.raises(ScenarioError) as exc_info:
        sc.check_against(_net())
    assert word in exc_info.value.msg


def test_variant_spec_product_order() -> None:
    variants = VariantSpec(rates=(1, 2), durations=(60, 120), starts=(0,), timestep=60)
    assert len(variants) == 4
    ids = [s.scenario_id for s in variants.scenarios(["J1", "J2"])]
    assert ids == [
        "J1-r1-d60-s0",
        "J1-r1-d120-s0",
        "J1-r2-d60-s0",
        "J1-r2-d120-s0",
        "J2-r1-d60-s0",
        "J2-r1-d120-s0",
        "J2-r2-d60-s0",
        "J2-r2-d120-s0",
    ]


def test_variant_spec_rejects_empty() -> None:
    with pytest.raises(ScenarioError):
        VariantSpec(rates=(), durations=(60,))


def test_scenario_ids_keep_full_precision() -> None:
    a = InjectionScenario(
        "J1", rate=1.0000001, start=0, duration=60, timestep=60, max_steps=10
    )
    b = InjectionScenario(
        "J1", rate=1.0000002, start=0, duration=60, timestep=60, max_steps=10
    )
    assert a.scenario_id == "J1-r1.0000001-d60-s0"
    assert a.scenario_id != b.scenario_id


@pytest.mark.parametrize("field_name", ["rates", "durations", "starts"])
def test_variant_spec_rejects_repeats(field_name: str) -> None:
    kwargs: dict = {"rates": (1.0,), "durations": (60.0,), "starts": (0.0,)}
    kwargs[field_name] = (60.0, 60.0)
    with pytest.raises(ScenarioError) as exc_info:
        VariantSpec(**kwargs)
    assert field_name in exc_info.value.msg
