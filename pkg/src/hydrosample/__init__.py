from hydrosample.gft import (
    GftOperator,
    RecoveryResult,
    SamplingSet,
    build_gft_operator,
    recover,
    select_sampling_set,
)
from hydrosample.hydraulics import FlowField, solve_flows
from hydrosample.inp import load_network, parse_inp, serialize_inp
from hydrosample.network import (
    InjectionScenario,
    Junction,
    Pipe,
    PipeNetwork,
    Reservoir,
    VariantSpec,
)
from hydrosample.plans import Provenance, SamplingPlan
from hydrosample.transport import DataMatrix, run_scenario_sweep, simulate_transport

__all__ = [
    "DataMatrix",
    "FlowField",
    "GftOperator",
    "InjectionScenario",
    "Junction",
    "Pipe",
    "PipeNetwork",
    "Provenance",
    "RecoveryResult",
    "Reservoir",
    "SamplingPlan",
    "SamplingSet",
    "VariantSpec",
    "build_gft_operator",
    "load_network",
    "parse_inp",
    "recover",
    "run_scenario_sweep",
    "select_sampling_set",
    "serialize_inp",
    "simulate_transport",
    "solve_flows",
]
