from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hydrosample.exception import CflError, ScenarioError
from hydrosample.hydraulics import solve_flows
from hydrosample.network import (
    InjectionScenario,
    Junction,
    Pipe,
    PipeNetwork,
    Reservoir,
    VariantSpec,
)
from hydrosample.transport import (
    TransportSimulation,
    read_data_matrix,
    run_scenario_sweep,
    simulate_transport,
)


def _scenario(source: str, **kwargs: float) -> InjectionScenario:
    fields: dict = dict(
        source=source,
        rate=10.0,
        start=0.0,
        duration=600.0,
        timestep=60.0,
        max_steps=500,
    )
    fields.update(kwargs)
    return InjectionScenario(**fields)


@pytest.fixture
def looped_network() -> PipeNetwork:
    """
    A symmetric loop: J2 and J3 have the same head, so P6 between them
    carries no flow, and the zero-demand dead end J5 is stagnant too.
    """
    return PipeNetwork(
        junctions=(
            Junction("J1", 0.0),
            Junction("J2", 0.001),
            Junction("J3", 0.001),
            Junction("J4", 0.001),
            Junction("J5", 0.0),
        ),
        reservoirs=(Reservoir("R1", 30.0),),
        pipes=(
            Pipe("P1", "R1", "J1", 100, 0.1),
            Pipe("P2", "J1", "J2", 100, 0.1),
            Pipe("P3", "J1", "J3", 100, 0.1),
            Pipe("P4", "J2", "J4", 100, 0.1),
            Pipe("P5", "J3", "J4", 100, 0.1),
            Pipe("P6", "J2", "J3", 100, 0.1),
            Pipe("P7", "J4", "J5", 100, 0.1),
        ),
    )


def test_plug_flow_arrival_time(plug_flow_network: PipeNetwork) -> None:
    flows = solve_flows(plug_flow_network)
    assert flows.pipe_velocity["P2"] == pytest.approx(1.0)
    sc = _scenario("J1", rate=5.0, duration=10.0, timestep=10.0, max_steps=50)
    x = simulate_transport(plug_flow_network, flows, sc)
    j1, j2 = x.values
    # 100 m at 1 m/s with 10 s steps
    assert np.flatnonzero(j2)[0] == 10
    area = plug_flow_network.pipes[1].area
    expected = 5.0 / area * 1e-3
    assert j1[0] == pytest.approx(expected)
    assert j2[10] == pytest.approx(expected, rel=1e-6)


def test_values_are_non_negative_and_flushed(y_network: PipeNetwork) -> None:
    x = simulate_transport(y_network, solve_flows(y_network), _scenario("J2"))
    assert x.values.shape[0] == 5
    assert x.n_steps < 500
    assert np.all(x.values >= 0)
    # upstream junctions never see contaminant injected at J2
    assert not x.values[0].any()
    assert x.values[2].any() and x.values[4].any()
    assert x.node_index == y_network.junction_ids


def test_mass_balance(grid_network: PipeNetwork) -> None:
    sc = _scenario("J15", rate=5.0, timestep=30.0, max_steps=400)
    x = simulate_transport(grid_network, solve_flows(grid_network), sc)
    assert x.mass_balance is not None
    assert x.mass_balance.relative_error().max() < 1e-6
    assert x.mass_balance.summary()["injected"] == pytest.approx(5.0 * 600.0)


def test_rate_is_linear(y_network: PipeNetwork) -> None:
    flows = solve_flows(y_network)
    x1 = simulate_transport(y_network, flows, _scenario("J2", rate=3.0))
    x2 = simulate_transport(y_network, flows, _scenario("J2", rate=6.0))
    assert x1.values.shape == x2.values.shape
    assert np.array_equal(x2.values, 2 * x1.values)


def test_later_start_delays_signal(y_network: PipeNetwork) -> None:
    flows = solve_flows(y_network)
    early = simulate_transport(y_network, flows, _scenario("J2"))
    late = simulate_transport(y_network, flows, _scenario("J2", start=300.0))
    assert np.flatnonzero(early.values[1])[0] == 0
    assert np.flatnonzero(late.values[1])[0] == 5


def test_injection_after_horizon_leaves_zeros(y_network: PipeNetwork) -> None:
    scenario = _scenario("J2", start=60.0 * 500 + 60.0)
    x = simulate_transport(y_network, solve_flows(y_network), scenario)
    assert x.values.shape == (5, 500)
    assert not x.values.any()


def test_junction_mixes_by_inflow() -> None:
    # two reservoirs feed J3 through branches of different length
    net = PipeNetwork(
        junctions=(
            Junction("J1", 0.0),
            Junction("J2", 0.0),
            Junction("J3", 0.003),
        ),
        reservoirs=(Reservoir("R1", 30.0), Reservoir("R2", 30.0)),
        pipes=(
            Pipe("P1", "R1", "J1", 100, 0.1),
            Pipe("P2", "R2", "J2", 100, 0.1),
            Pipe("P3", "J1", "J3", 100, 0.1),
            Pipe("P4", "J2", "J3", 200, 0.1),
        ),
    )
    flows = solve_flows(net)
    q1, q2 = flows.pipe_flow["P3"], flows.pipe_flow["P4"]
    assert q1 > q2 > 0
    steady = dict(duration=1e6, timestep=10.0, max_steps=1000)
    # injecting at both branch heads at once is the sum of the two runs
    x = (
        simulate_transport(net, flows, _scenario("J1", rate=4.0, **steady)).values
        + simulate_transport(net, flows, _scenario("J2", rate=1.0, **steady)).values
    )
    c1, c2, c3 = x[:, -1]
    assert c1 > 0 and c2 > 0
    assert c3 == pytest.approx((q1 * c1 + q2 * c2) / (q1 + q2), rel=1e-6)


def test_cfl_violation_names_pipe(plug_flow_network: PipeNetwork) -> None:
    sc = _scenario("J1", duration=100.0, timestep=100.0)
    with pytest.raises(CflError) as exc_info:
        simulate_transport(plug_flow_network, solve_flows(plug_flow_network), sc)
    assert exc_info.value.pipe_id == "P1"
    assert "reduce the time step" in exc_info.value.msg


def test_stagnant_pipes_are_skipped(looped_network: PipeNetwork) -> None:
    flows = solve_flows(looped_network)
    sim = TransportSimulation(looped_network, flows, _scenario("J1"))
    # P6 and P7 carry no flow
    assert len(sim.up) == 5
    x = simulate_transport(looped_network, flows, _scenario("J1"))
    assert x.values[3].any()
    assert not x.values[4].any()


def test_source_without_through_flow(looped_network: PipeNetwork) -> None:
    with pytest.raises(ScenarioError) as exc_info:
        simulate_transport(looped_network, solve_flows(looped_network), _scenario("J5"))
    assert "no through-flow" in exc_info.value.msg


def test_source_must_be_junction(y_network: PipeNetwork) -> None:
    with pytest.raises(ScenarioError):
        simulate_transport(y_network, solve_flows(y_network), _scenario("R1"))


def test_max_steps_caps_length(y_network: PipeNetwork) -> None:
    scenario = _scenario("J2", max_steps=7)
    x = simulate_transport(y_network, solve_flows(y_network), scenario)
    assert x.n_steps == 7


def test_data_matrix_csv_round_trip(y_network: PipeNetwork, tmp_path: Path) -> None:
    x = simulate_transport(y_network, solve_flows(y_network), _scenario("J2"))
    csv_path, json_path = x.write(tmp_path / "scenarios" / f"{x.scenario_id}.csv")
    assert json_path.exists()
    assert csv_path.read_text(encoding="utf-8").startswith("t_s,J1,J2,J3,J4,J5\n")
    back = read_data_matrix(csv_path)
    assert back.scenario == x.scenario
    assert back.node_index == x.node_index
    assert np.array_equal(back.values, x.values)


def test_read_data_matrix_missing_file(tmp_path: Path) -> None:
    with pytest.raises(ScenarioError):
        read_data_matrix(tmp_path / "nope.csv")


def test_sweep_order_and_workers(y_network: PipeNetwork) -> None:
    variants = VariantSpec(rates=(1, 2), durations=(60,), timestep=60, max_steps=300)
    serial = run_scenario_sweep(y_network, ["J2", "J4"], variants)
    assert [x.scenario_id for x in serial] == [
        "J2-r1-d60-s0",
        "J2-r2-d60-s0",
        "J4-r1-d60-s0",
        "J4-r2-d60-s0",
    ]
    threaded = run_scenario_sweep(y_network, ["J2", "J4"], variants, max_workers=2)
    for a, b in zip(serial, threaded):
        assert np.array_equal(a.values, b.values)


def test_sweep_error_names_scenario(y_network: PipeNetwork) -> None:
    variants = VariantSpec(rates=(1,), durations=(60,), timestep=60)
    with pytest.raises(ScenarioError) as exc_info:
        run_scenario_sweep(y_network, ["R1"], variants)
    assert exc_info.value.msg.startswith("Scenario R1-r1-d60-s0: ")


def test_sweep_needs_sources(y_network: PipeNetwork) -> None:
    with pytest.raises(ScenarioError):
        run_scenario_sweep(y_network, [], VariantSpec(rates=(1,), durations=(60,)))


def test_sweep_rejects_repeated_sources(y_network: PipeNetwork) -> None:
    variants = VariantSpec(rates=(1,), durations=(60,))
    with pytest.raises(ScenarioError) as exc_info:
        run_scenario_sweep(y_network, ["J2", "J2"], variants)
    assert "twice" in exc_info.value.msg
