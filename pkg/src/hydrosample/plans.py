"""
Sampling plans: the per-source GFT datasets and the general plans derived from
them (GFT-F, GFT-I), the Laplacian and random baselines, and the
injection-specific reduction.
"""
from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Literal, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import scipy.linalg as la

from hydrosample.exception import PlanError
from hydrosample.gft import DEFAULT_RANK_TOL, build_gft_operator, select_sampling_set
from hydrosample.metrics import nrmse
from hydrosample.network import PipeNetwork
from hydrosample.splits import split_by_variant
from hydrosample.transport import DataMatrix

logger = logging.getLogger(__name__)

PlanKind = Literal[
    "gft_specific", "gft_frequent", "gft_important", "laplacian", "random"
]
SCORE_DECIMALS = 10

# |S| x K sensor readings -> N x K reconstruction
Reconstructor = Callable[[np.ndarray], np.ndarray]
DecoderTrainer = Callable[["SamplingPlan", Sequence[DataMatrix]], Reconstructor]


@dataclass(frozen=True)
class Provenance:
    kind: PlanKind
    source: Optional[str] = None
    threshold: Optional[int] = None
    n: Optional[int] = None
    budget: Optional[int] = None
    seed: Optional[int] = None
    accuracy_threshold: Optional[float] = None

    @property
    def label(self) -> str:
        parts: list[str] = [self.kind]
        if self.source is not None:
            parts.append(self.source)
        if self.threshold is not None:
            parts.append(f"t{self.threshold}")
        if self.n is not None:
            parts.append(f"n{self.n}")
        if self.budget is not None:
            parts.append(f"b{self.budget}")
        if self.seed is not None:
            parts.append(f"s{self.seed}")
        if self.accuracy_threshold is not None:
            parts.append(f"reduced{self.accuracy_threshold:g}")
        return "-".join(parts)

    def to_dict(self) -> dict[str, Any]:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass(frozen=True)
class SamplingPlan:
    """
    Args:
        nodes (tuple[int, ...]): Junction indices to monitor, most important
            first.
        provenance (Provenance): How the plan was built; rebuilding from the same
            inputs reproduces it.
        parent (tuple[str, ...]): Plan ids of the GFT datasets it derives from.
        scores (tuple[float, ...]): Importance score per node, where known.
    """

    nodes: Tuple[int, ...]
    provenance: Provenance
    parent: Tuple[str, ...] = ()
    scores: Tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        nodes = tuple(int(i) for i in self.nodes)
        if not nodes:
            raise PlanError("A sampling plan needs at least one node.")
        if len(set(nodes)) != len(nodes):
            raise PlanError(f"Sampling plan {self.provenance.label} repeats nodes.")
        if min(nodes) < 0:
            raise PlanError("Sampling plan node indices must be non-negative.")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "parent", tuple(self.parent))
        object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))

    @property
    def plan_id(self) -> str:
        return self.provenance.label

    @property
    def family(self) -> str:
        return self.provenance.kind

    @property
    def node_set(self) -> frozenset[int]:
        return frozenset(self.nodes)

    def __len__(self) -> int:
        return len(self.nodes)

    def check_against(self, n_nodes: int) -> None:
        if max(self.nodes) >= n_nodes or len(self.nodes) > n_nodes:
            raise PlanError(
                f"Plan {self.plan_id} references node {max(self.nodes)} but the "
                f"network has {n_nodes} junctions.",
                title="Plan does not fit the network.",
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "plan_id": self.plan_id,
            "nodes": list(self.nodes),
            "provenance": self.provenance.to_dict(),
            "parent": list(self.parent),
            "scores": list(self.scores),
        }

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "SamplingPlan":
        try:
            return cls(
                nodes=tuple(raw["nodes"]),
                provenance=Provenance(**raw["provenance"]),
                parent=tuple(raw.get("parent", ())),
                scores=tuple(raw.get("scores", ())),
            )
        except (KeyError, TypeError) as e:
            raise PlanError(
                f"Malformed plan: {e}", title="Hydrosample couldn't load your plan."
            ) from e


def save_plan(path: Path, plan: SamplingPlan) -> None:
    Path(path).write_text(
        json.dumps(plan.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_plan(path: Path) -> SamplingPlan:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise PlanError(
            f"Error reading plan file at {path}. {e}",
            title="Hydrosample couldn't load your plan.",
        ) from e
    return SamplingPlan.from_dict(raw)


def build_gft_dataset(
    x: DataMatrix, rank_tol: float = DEFAULT_RANK_TOL
) -> SamplingPlan:
    """
    The GFT dataset of one scenario: the greedy sampling set of its GFT
    operator, most important node first.
    """
    op = build_gft_operator(x, rank_tol=rank_tol)
    s = select_sampling_set(op, strategy="greedy")
    return SamplingPlan(
        nodes=s.nodes,
        provenance=Provenance(kind="gft_specific", source=x.scenario.source),
        scores=s.scores,
    )


def filter_subset_datasets(
    plans: Sequence[SamplingPlan], junction_index: Mapping[str, int] | None = None
) -> list[SamplingPlan]:
    """
    Drops every GFT dataset whose node set is contained in another one. Among
    identical sets the plan whose source comes first survives: by canonical
    junction index when junction_index is given, else by natural id order
    (J2 before J10). Input order is preserved.
    """
    for p in plans:
        if p.family != "gft_specific":
            raise PlanError(
                f"Only GFT datasets can be filtered, got {p.plan_id}.",
                title="Invalid plan.",
            )

    def _key(i: int) -> tuple[Any, ...]:
        source = plans[i].provenance.source or ""
        if junction_index is not None and source in junction_index:
            return (0, junction_index[source], i)
        return (1, _natural_key(source), i)

    kept: list[SamplingPlan] = []
    for i, p in enumerate(plans):
        dominated = False
        for j, other in enumerate(plans):
            if i == j:
                continue
            if p.node_set < other.node_set or (
                p.node_set == other.node_set and _key(j) < _key(i)
            ):
                dominated = True
                break
        if not dominated:
            kept.append(p)
    logger.info(
        "Kept %d of %d GFT datasets after subset filtering", len(kept), len(plans)
    )
    return kept


def _natural_key(node_id: str) -> tuple[Any, ...]:
    parts = re.split(r"(\d+)", node_id)
    return tuple(int(p) if k % 2 else p for k, p in enumerate(parts))


def _frequency_order(plans: Sequence[SamplingPlan]) -> list[tuple[int, int]]:
    counts = Counter(node for p in plans for node in p.node_set)
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def gft_frequent_plan(plans: Sequence[SamplingPlan], threshold: int) -> SamplingPlan:
    """
    GFT-F: nodes appearing in at least `threshold` GFT datasets, most frequent
    first (ties by ascending index).

    Raises: PlanError if no node reaches the threshold.
    """
    if not plans:
        raise PlanError("GFT-F needs at least one GFT dataset.")
    if threshold < 1:
        raise PlanError(f"GFT-F threshold must be >= 1, got {threshold}.")
    ranked = _frequency_order(plans)
    nodes = [node for node, count in ranked if count >= threshold]
    if not nodes:
        raise PlanError(
            f"No node appears in {threshold} GFT datasets; the largest usable "
            f"threshold is {ranked[0][1]}.",
            title="GFT-F threshold too high.",
        )
    return SamplingPlan(
        nodes=tuple(nodes),
        provenance=Provenance(kind="gft_frequent", threshold=threshold),
        parent=tuple(p.plan_id for p in plans),
        scores=tuple(float(c) for _, c in ranked if c >= threshold),
    )


def _importance_order(plans: Sequence[SamplingPlan]) -> list[tuple[int, int]]:
    best: dict[int, int] = {}
    for p in plans:
        for rank, node in enumerate(p.nodes):
            best[node] = min(rank, best.get(node, rank))
    return sorted(best.items(), key=lambda kv: (kv[1], kv[0]))


def gft_important_plan(plans: Sequence[SamplingPlan], n: int) -> SamplingPlan:
    """
    GFT-I: the union of the n most important nodes of every GFT dataset,
    ordered by the best rank a node reaches in any dataset (ties by index).
    """
    if not plans:
        raise PlanError("GFT-I needs at least one GFT dataset.")
    if n < 1:
        raise PlanError(f"GFT-I n must be >= 1, got {n}.")
    ranked = [(node, rank) for node, rank in _importance_order(plans) if rank < n]
    return SamplingPlan(
        nodes=tuple(node for node, _ in ranked),
        provenance=Provenance(kind="gft_important", n=n),
        parent=tuple(p.plan_id for p in plans),
        scores=tuple(float(rank) for _, rank in ranked),
    )


def _check_budget(budget: int, n_nodes: int) -> None:
    if not 1 <= budget <= n_nodes:
        raise PlanError(
            f"Budget must be between 1 and {n_nodes} junctions, got {budget}.",
            title="Invalid budget.",
        )


def _fill(ordered: list[int], budget: int, n_nodes: int) -> list[int]:
    chosen = ordered[:budget]
    if len(chosen) < budget:
        taken = set(chosen)
        chosen += [i for i in range(n_nodes) if i not in taken][: budget - len(chosen)]
    return chosen


def gft_frequent_budget_plan(
    plans: Sequence[SamplingPlan], budget: int, n_nodes: int
) -> SamplingPlan:
    """
    GFT-F cut to a node budget: the `budget` most frequent nodes. When the
    GFT datasets cover fewer nodes than the budget, the rest is filled with
    uncovered junctions in index order.
    """
    if not plans:
        raise PlanError("GFT-F needs at least one GFT dataset.")
    _check_budget(budget, n_nodes)
    ordered = [node for node, _ in _frequency_order(plans)]
    return SamplingPlan(
        nodes=tuple(_fill(ordered, budget, n_nodes)),
        provenance=Provenance(kind="gft_frequent", budget=budget),
        parent=tuple(p.plan_id for p in plans),
    )


def gft_important_budget_plan(
    plans: Sequence[SamplingPlan], budget: int, n_nodes: int
) -> SamplingPlan:
    """
    GFT-I cut to a node budget, following the GFT-I ordering.
    """
    if not plans:
        raise PlanError("GFT-I needs at least one GFT dataset.")
    _check_budget(budget, n_nodes)
    ordered = [node for node, _ in _importance_order(plans)]
    return SamplingPlan(
        nodes=tuple(_fill(ordered, budget, n_nodes)),
        provenance=Provenance(kind="gft_important", budget=budget),
        parent=tuple(p.plan_id for p in plans),
    )


def laplacian_scores(net: PipeNetwork, budget: int) -> np.ndarray:
    """
    Spectral leverage of every junction on the `budget` lowest nonzero
    eigenvectors of the unweighted junction-graph Laplacian. A degenerate
    eigenvalue cluster cut by the budget contributes its projector diagonal
    pro rata, so the scores do not depend on the eigenbasis chosen.
    """
    n = net.n_junctions
    lap = nx.laplacian_matrix(net.junction_graph(), nodelist=range(n)).toarray()
    evals, evecs = la.eigh(lap.astype(float))
    scale = max(1.0, float(abs(evals).max()))
    nonzero = np.flatnonzero(evals > 1e-9 * scale)
    scores = np.zeros(n)
    remaining = min(budget, nonzero.size)
    i = 0
    while remaining > 0:
        lam = evals[nonzero[i]]
        cluster = [k for k in nonzero[i:] if abs(evals[k] - lam) <= 1e-8 * scale]
        weight = min(1.0, remaining / len(cluster))
        scores += weight * (evecs[:, cluster] ** 2).sum(axis=1)
        remaining -= len(cluster)
        i += len(cluster)
    return scores


def laplacian_plan(net: PipeNetwork, budget: int) -> SamplingPlan:
    """
    Laplacian baseline: the `budget` junctions with the highest spectral
    leverage, ties by ascending index.
    """
    _check_budget(budget, net.n_junctions)
    scores = np.round(laplacian_scores(net, budget), SCORE_DECIMALS)
    order = sorted(range(net.n_junctions), key=lambda i: (-scores[i], i))[:budget]
    return SamplingPlan(
        nodes=tuple(order),
        provenance=Provenance(kind="laplacian", budget=budget),
        scores=tuple(float(scores[i]) for i in order),
    )


def random_plan(net: PipeNetwork, budget: int, seed: int) -> SamplingPlan:
    """
    Random baseline: `budget` junctions drawn uniformly without replacement.
    """
    _check_budget(budget, net.n_junctions)
    rng = np.random.default_rng(seed)
    nodes = rng.choice(net.n_junctions, size=budget, replace=False)
    return SamplingPlan(
        nodes=tuple(int(i) for i in nodes),
        provenance=Provenance(kind="random", budget=budget, seed=seed),
    )


def budget_from_fraction(fraction: float, n_nodes: int) -> int:
    if not 0 < fraction <= 1:
        raise PlanError(f"Budget fractions must lie in (0, 1], got {fraction}.")
    return max(1, min(n_nodes, math.ceil(fraction * n_nodes - 1e-9)))


def evaluate_reconstructor(
    reconstruct: Reconstructor, plan: SamplingPlan, matrices: Sequence[DataMatrix]
) -> float:
    """
    Mean normalized RMSE over every (scenario, junction) pair. A flat junction
    that the reconstruction contaminates has no range to normalize by; its
    RMSE is divided by the scenario peak instead, so false alarms still count.
    """
    values: list[float] = []
    false_alarms = 0
    for x in matrices:
        estimate = reconstruct(x.rows(plan.nodes))
        scale = x.scenario_max
        for i in range(x.n_nodes):
            score = nrmse(x.values[i], estimate[i], scenario_max=scale)
            if not math.isfinite(score):
                false_alarms += 1
                diff = estimate[i] - x.values[i]
                rmse = float(np.sqrt(np.mean(diff**2)))
                score = rmse / scale if scale > 0 else math.inf
            values.append(score)
    if false_alarms:
        logger.debug(
            "%s contaminates %d flat junction series", plan.plan_id, false_alarms
        )
    return float(np.mean(values)) if values else math.inf


def reduce_injection_specific(
    plan: SamplingPlan,
    matrices: Sequence[DataMatrix],
    accuracy_threshold: float,
    trainer: DecoderTrainer,
    split_seed: int = 0,
) -> SamplingPlan:
    """
    Drops the least important node of a GFT dataset one at a time, retraining
    a decoder on each reduced plan, and returns the smallest plan whose
    held-out mean nrmse stays within accuracy_threshold.

    Args:
        plan: The source's GFT dataset.
        matrices: The scenario variants of that source.
        accuracy_threshold: Maximum acceptable mean nrmse.
        trainer: Builds a reconstructor for a plan from training matrices.
        split_seed: Seed of the 80/20 variant split.

    Raises: PlanError if even the full plan misses the threshold.
    """
    if plan.family != "gft_specific":
        raise PlanError(f"Only GFT datasets can be reduced, got {plan.plan_id}.")
    if not accuracy_threshold > 0:
        raise PlanError(
            f"accuracy_threshold must be positive, got {accuracy_threshold}."
        )
    train, test = split_by_variant(matrices, split_seed)

    def _score(candidate: SamplingPlan) -> float:
        reconstruct = trainer(candidate, train)
        return evaluate_reconstructor(reconstruct, candidate, test)

    full_score = _score(plan)
    if full_score > accuracy_threshold:
        raise PlanError(
            f"The full GFT dataset {plan.plan_id} reaches nrmse {full_score:.4g}, "
            f"above the threshold {accuracy_threshold:g}.",
            title="Reduction threshold unreachable.",
        )
    best = plan
    for size in range(len(plan) - 1, 0, -1):
        candidate = replace(
            plan, nodes=plan.nodes[:size], scores=plan.scores[:size]
        )
        score = _score(candidate)
        logger.debug("%s with %d nodes: nrmse %.4g", plan.plan_id, size, score)
        if score > accuracy_threshold:
            break
        best = candidate
    logger.info(
        "Reduced %s from %d to %d nodes at nrmse <= %g",
        plan.plan_id,
        len(plan),
        len(best),
        accuracy_threshold,
    )
    return replace(
        best,
        provenance=replace(plan.provenance, accuracy_threshold=accuracy_threshold),
        parent=(plan.plan_id,),
    )
