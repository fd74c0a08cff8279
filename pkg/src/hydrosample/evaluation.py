"""
Reconstruction quality of a sampling plan: per-junction normalized RMSE and
the sensitivity / specificity of each accuracy tier, pooled over every
(scenario, junction) pair of the test set.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from hydrosample.exception import EvaluationError
from hydrosample.metrics import classify_polluted, nrmse
from hydrosample.mlp import MlpModel
from hydrosample.neural import decoder_reconstructor
from hydrosample.plans import Reconstructor, SamplingPlan
from hydrosample.transport import DataMatrix

logger = logging.getLogger(__name__)

TIERS: Dict[str, float] = {"high": 0.05, "medium": 0.15, "low": 0.30}
PLOT_COLUMNS = (
    "plan",
    "budget_fraction",
    "tier",
    "sensitivity",
    "specificity",
    "mean_nrmse",
)
SERIES_COLUMNS = ("plan", "scenario", "junction", "t_s", "original", "reconstructed")


def _finite_or_none(v: float) -> Optional[float]:
    return v if math.isfinite(v) else None


def _none_to_inf(v: Optional[float]) -> float:
    return math.inf if v is None else float(v)


@dataclass(frozen=True)
class EvalReport:
    """
    Args:
        plan_id (str): The evaluated plan.
        plan_family (str): Provenance kind of the plan.
        budget_fraction (float): Monitored share of the network's junctions.
        scenario_ids (tuple[str, ...]): Test scenarios, in evaluation order.
        per_node_nrmse (dict[str, float]): Junction id to the mean of its finite
            nrmse scores over the test scenarios (inf when none is finite).
        sensitivity (dict[str, float]): Tier to the share of polluted pairs
            reconstructed within the tier's nrmse.
        specificity (dict[str, float]): Tier to the share of clean pairs whose
            reconstruction is also clean.
        mean_nrmse (float): Mean of every finite pair nrmse.
        n_polluted (int): Polluted (scenario, junction) pairs.
        n_clean (int): Clean (scenario, junction) pairs.
    """

    plan_id: str
    plan_family: str
    budget_fraction: float
    scenario_ids: Tuple[str, ...]
    per_node_nrmse: Dict[str, float]
    sensitivity: Dict[str, float]
    specificity: Dict[str, float]
    mean_nrmse: float
    n_polluted: int = 0
    n_clean: int = 0
    tiers: Dict[str, float] = field(default_factory=lambda: dict(TIERS))

    def to_dict(self) -> dict[str, Any]:
        return {
            "plan_id": self.plan_id,
            "plan_family": self.plan_family,
            "budget_fraction": self.budget_fraction,
            "scenario_ids": list(self.scenario_ids),
            "per_node_nrmse": {
                k: _finite_or_none(v) for k, v in self.per_node_nrmse.items()
            },
            "tiers": self.tiers,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "mean_nrmse": _finite_or_none(self.mean_nrmse),
            "n_polluted": self.n_polluted,
            "n_clean": self.n_clean,
        }

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "EvalReport":
        try:
            return cls(
                plan_id=raw["plan_id"],
                plan_family=raw["plan_family"],
                budget_fraction=float(raw["budget_fraction"]),
                scenario_ids=tuple(raw["scenario_ids"]),
                per_node_nrmse={
                    k: _none_to_inf(v) for k, v in raw["per_node_nrmse"].items()
                },
                sensitivity={k: float(v) for k, v in raw["sensitivity"].items()},
                specificity={k: float(v) for k, v in raw["specificity"].items()},
                mean_nrmse=_none_to_inf(raw["mean_nrmse"]),
                n_polluted=int(raw.get("n_polluted", 0)),
                n_clean=int(raw.get("n_clean", 0)),
                tiers={k: float(v) for k, v in raw.get("tiers", TIERS).items()},
            )
        except (KeyError, TypeError, ValueError) as e:
            raise EvaluationError(
                f"Malformed report: {e}", title="Hydrosample couldn't load your report."
            ) from e


def save_report(path: Path, report: EvalReport) -> None:
    Path(path).write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_report(path: Path) -> EvalReport:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise EvaluationError(
            f"Error reading report at {path}. {e}",
            title="Hydrosample couldn't load your report.",
        ) from e
    return EvalReport.from_dict(raw)


def _reconstructor(
    model: Union[MlpModel, Reconstructor], plan: SamplingPlan
) -> Callable[[np.ndarray], np.ndarray]:
    return decoder_reconstructor(model, plan) if isinstance(model, MlpModel) else model


def evaluate_plan(
    plan: SamplingPlan,
    model: Union[MlpModel, Reconstructor],
    test_matrices: Sequence[DataMatrix],
) -> EvalReport:
    """
    Scores a plan on held-out scenarios. `model` is either a trained decoder or
    any callable mapping the plan's |S| x K sensor rows to an N x K estimate.

    Raises: EvaluationError for an empty test set, a clean scenario (peak 0),
        or a reconstruction of the wrong shape.
    """
    if not test_matrices:
        raise EvaluationError("Cannot evaluate a plan on an empty test set.")
    reconstruct = _reconstructor(model, plan)
    n_nodes = test_matrices[0].n_nodes
    plan.check_against(n_nodes)
    node_ids = test_matrices[0].node_index

    hits = {tier: 0 for tier in TIERS}
    clean_hits = 0
    n_polluted = 0
    n_clean = 0
    pair_scores: list[float] = []
    per_node: list[list[float]] = [[] for _ in range(n_nodes)]
    for x in test_matrices:
        if x.node_index != node_ids:
            raise EvaluationError(
                f"Scenario {x.scenario_id} uses a different junction indexing."
            )
        scale = x.scenario_max
        if not scale > 0:
            raise EvaluationError(
                f"Scenario {x.scenario_id} never shows any contamination."
            )
        estimate = np.asarray(reconstruct(x.rows(plan.nodes)))
        if estimate.shape != x.values.shape:
            raise EvaluationError(
                f"Reconstruction of {x.scenario_id} has shape {estimate.shape}, "
                f"expected {x.values.shape}."
            )
        for i in range(n_nodes):
            score = nrmse(x.values[i], estimate[i], scenario_max=scale)
            if math.isfinite(score):
                pair_scores.append(score)
                per_node[i].append(score)
            if classify_polluted(x.values[i], scale):
                n_polluted += 1
                for tier, limit in TIERS.items():
                    if score <= limit:
                        hits[tier] += 1
            else:
                n_clean += 1
                if not classify_polluted(estimate[i], scale):
                    clean_hits += 1

    sensitivity = {
        tier: (hits[tier] / n_polluted if n_polluted else 1.0) for tier in TIERS
    }
    specificity = {tier: (clean_hits / n_clean if n_clean else 1.0) for tier in TIERS}
    report = EvalReport(
        plan_id=plan.plan_id,
        plan_family=plan.family,
        budget_fraction=len(plan) / n_nodes,
        scenario_ids=tuple(x.scenario_id for x in test_matrices),
        per_node_nrmse={
            node_ids[i]: (float(np.mean(s)) if s else math.inf)
            for i, s in enumerate(per_node)
        },
        sensitivity=sensitivity,
        specificity=specificity,
        mean_nrmse=float(np.mean(pair_scores)) if pair_scores else math.inf,
        n_polluted=n_polluted,
        n_clean=n_clean,
    )
    logger.info(
        "%s: sensitivity %s, specificity %s",
        plan.plan_id,
        " / ".join(f"{sensitivity[t]:.2f}" for t in TIERS),
        f"{specificity['high']:.2f}",
    )
    return report


def plot_frame(reports: Sequence[EvalReport]) -> pd.DataFrame:
    tier_order = {tier: k for k, tier in enumerate(TIERS)}
    rows = [
        {
            "plan": r.plan_id,
            "budget_fraction": r.budget_fraction,
            "tier": tier,
            "sensitivity": r.sensitivity[tier],
            "specificity": r.specificity[tier],
            "mean_nrmse": r.mean_nrmse,
            "_tier": tier_order[tier],
        }
        for r in reports
        for tier in TIERS
    ]
    frame = pd.DataFrame(rows)
    frame = frame.sort_values(["plan", "budget_fraction", "_tier"], kind="mergesort")
    return frame.loc[:, list(PLOT_COLUMNS)].reset_index(drop=True)


def export_plot_data(reports: Sequence[EvalReport]) -> str:
    """
    Long-format CSV of every report: one row per (report, tier), sorted by
    plan id, budget fraction, then tier (high, medium, low).
    Floats keep full precision.
    """
    if not reports:
        raise EvaluationError("Nothing to export: no reports given.")
    return str(plot_frame(reports).to_csv(index=False, lineterminator="\n"))


def read_plot_data(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def select_series_junctions(
    plan: SamplingPlan,
    x: DataMatrix,
    requested: Sequence[str] = (),
    count: int = 2,
) -> list[int]:
    """
    The unmonitored junctions whose time series are worth plotting for a plan.
    With `requested` ids, those the plan does not monitor, in the given order;
    otherwise the `count` unmonitored junctions with the highest peak in x,
    ties by index.
    """
    monitored = plan.node_set
    if requested:
        index = {node_id: i for i, node_id in enumerate(x.node_index)}
        unknown = [j for j in requested if j not in index]
        if unknown:
            raise EvaluationError(
                f"Cannot plot {', '.join(unknown)}: not a junction of "
                f"{x.scenario_id}."
            )
        return [index[j] for j in requested if index[j] not in monitored]
    peaks = x.values.max(axis=1) if x.n_steps else np.zeros(x.n_nodes)
    free = [i for i in range(x.n_nodes) if i not in monitored]
    free.sort(key=lambda i: (-peaks[i], i))
    return free[:count]


def series_frame(
    plan: SamplingPlan,
    model: Union[MlpModel, Reconstructor],
    x: DataMatrix,
    junctions: Sequence[int],
) -> pd.DataFrame:
    """
    Long-format original and reconstructed series of `junctions` in one
    scenario: one row per (junction, time step).
    """
    estimate = np.asarray(_reconstructor(model, plan)(x.rows(plan.nodes)))
    if estimate.shape != x.values.shape:
        raise EvaluationError(
            f"Reconstruction of {x.scenario_id} has shape {estimate.shape}, "
            f"expected {x.values.shape}."
        )
    frames = [
        pd.DataFrame(
            {
                "plan": plan.plan_id,
                "scenario": x.scenario_id,
                "junction": x.node_index[i],
                "t_s": x.times,
                "original": x.values[i],
                "reconstructed": estimate[i],
            },
            columns=list(SERIES_COLUMNS),
        )
        for i in junctions
    ]
    if not frames:
        return pd.DataFrame(columns=list(SERIES_COLUMNS))
    return pd.concat(frames, ignore_index=True)


def export_series(
    plan: SamplingPlan,
    model: Union[MlpModel, Reconstructor],
    x: DataMatrix,
    junctions: Sequence[int],
) -> str:
    return str(
        series_frame(plan, model, x, junctions).to_csv(
            index=False, lineterminator="\n"
        )
    )
