"""
Linearized steady-state hydraulics: potential flow on the conductance-weighted
Laplacian, with reservoirs as fixed heads and junction demands as sinks.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from hydrosample.exception import HydraulicsError
from hydrosample.network import PipeNetwork

logger = logging.getLogger(__name__)

IMBALANCE_RTOL = 1e-9


@dataclass(frozen=True)
class FlowField:
    """
    Args:
        node_head (dict[str, float]): Head at every node (reservoirs included).
        pipe_flow (dict[str, float]): Signed flow, m3/s; positive means start->end.
        pipe_velocity (dict[str, float]): Signed mean velocity, m/s.
    """

    node_head: Dict[str, float]
    pipe_flow: Dict[str, float]
    pipe_velocity: Dict[str, float]

    def imbalance(self, net: PipeNetwork) -> dict[str, float]:
        """
        Returns, per junction, (inflow - outflow) - demand.
        """
        balance = {j.id: -j.demand for j in net.junctions}
        for p in net.pipes:
            q = self.pipe_flow[p.id]
            if p.end in balance:
                balance[p.end] += q
            if p.start in balance:
                balance[p.start] -= q
        return balance


def solve_flows(net: PipeNetwork) -> FlowField:
    """
    Solves L_JJ h_J = -d - L_JR h_R for the junction heads, where L is the
    Laplacian weighted by pipe conductance diameter^2 / length. Pipe flow is
    conductance * (head_start - head_end).

    Raises: HydraulicsError if the junction system is singular.
    """
    n = net.n_junctions
    index = net.junction_index
    # heads are solved relative to the first reservoir to limit cancellation
    reference = net.reservoirs[0].head
    res_head = {r.id: r.head - reference for r in net.reservoirs}

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    rhs = -np.array([j.demand for j in net.junctions], dtype=float)
    for p in net.pipes:
        w = p.conductance
        a, b = index.get(p.start), index.get(p.end)
        if a is not None:
            rows.append(a)
            cols.append(a)
            vals.append(w)
        if b is not None:
            rows.append(b)
            cols.append(b)
            vals.append(w)
        if a is not None and b is not None:
            rows.extend((a, b))
            cols.extend((b, a))
            vals.extend((-w, -w))
        elif a is not None:
            rhs[a] += w * res_head[p.end]
        elif b is not None:
            rhs[b] += w * res_head[p.start]
        # pipes between two reservoirs carry flow but add nothing to the system

    lap = sp.csc_matrix((vals, (rows, cols)), shape=(n, n))
    try:
        with np.errstate(all="ignore"):
            heads = np.atleast_1d(spla.spsolve(lap, rhs))
    except RuntimeError as e:
        raise HydraulicsError(
            f"The flow system is singular: {e}",
            title="Hydrosample couldn't solve the network hydraulics.",
        ) from e
    if heads.shape != (n,) or not np.all(np.isfinite(heads)):
        raise HydraulicsError(
            "The flow system is singular; some junctions are not connected to any "
            "reservoir.",
            title="Hydrosample couldn't solve the network hydraulics.",
        )

    relative: dict[str, float] = dict(res_head)
    relative.update({j.id: float(h) for j, h in zip(net.junctions, heads)})
    node_head = {k: v + reference for k, v in relative.items()}
    pipe_flow: dict[str, float] = {}
    pipe_velocity: dict[str, float] = {}
    for p in net.pipes:
        q = p.conductance * (relative[p.start] - relative[p.end])
        pipe_flow[p.id] = q
        pipe_velocity[p.id] = q / p.area

    flows = FlowField(
        node_head=node_head, pipe_flow=pipe_flow, pipe_velocity=pipe_velocity
    )
    worst = max((abs(v) for v in flows.imbalance(net).values()), default=0.0)
    scale = max(net.total_demand, math.fsum(abs(q) for q in pipe_flow.values()))
    logger.debug(
        "Solved flows for %d junctions; worst imbalance %.3g (scale %.3g)",
        n,
        worst,
        scale,
    )
    if worst > IMBALANCE_RTOL * scale:
        raise HydraulicsError(
            f"The flow solution violates mass balance by {worst:.3g} m3/s at a "
            f"junction (tolerance {IMBALANCE_RTOL * scale:.3g} m3/s).",
            title="Hydrosample couldn't solve the network hydraulics.",
        )
    return flows
