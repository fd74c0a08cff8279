"""
End-to-end experiment: sweep -> GFT datasets -> subset filtering -> plans ->
decoder training -> evaluation -> plot data. Every artifact goes through one
ManifestWriter so a rerun with the same config reproduces the manifest byte
for byte.
"""
from __future__ import annotations

import hashlib
import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List

import numpy as np

from hydrosample.config import PipelineConfig
from hydrosample.evaluation import (
    TIERS,
    EvalReport,
    evaluate_plan,
    export_plot_data,
    export_series,
    load_report,
    select_series_junctions,
)
from hydrosample.exception import HydroSampleError, PipelineError, PlanError
from hydrosample.hydraulics import solve_flows
from hydrosample.inp import load_network
from hydrosample.mlp import MlpModel
from hydrosample.network import PipeNetwork, VariantSpec
from hydrosample.neural import TrainingParams, decoder_trainer, train_decoder
from hydrosample.plans import (
    SamplingPlan,
    budget_from_fraction,
    build_gft_dataset,
    filter_subset_datasets,
    gft_frequent_budget_plan,
    gft_frequent_plan,
    gft_important_budget_plan,
    gft_important_plan,
    laplacian_plan,
    random_plan,
    reduce_injection_specific,
)
from hydrosample.splits import split_by_variant
from hydrosample.sweep_cache import get_cached_sweep, get_sweep_hash, update_sweep_cache
from hydrosample.transport import DataMatrix, read_data_matrix, run_scenario_sweep

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def _dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


class ManifestWriter:
    """
    Writes text artifacts under out_dir and records their sha256. The manifest
    lists files by relative path, so it does not depend on where out_dir is.
    """

    def __init__(self, out_dir: Path, config_hash: str) -> None:
        self.out_dir = Path(out_dir)
        self.config_hash = config_hash
        self.files: dict[str, str] = {}

    def write_text(self, relpath: str, text: str) -> Path:
        path = self.out_dir / relpath
        path.parent.mkdir(parents=True, exist_ok=True)
        data = text.encode("utf-8")
        path.write_bytes(data)
        self.files[relpath] = hashlib.sha256(data).hexdigest()
        return path

    def write_json(self, relpath: str, obj: Any) -> Path:
        return self.write_text(relpath, _dumps(obj))

    def write_matrix(self, relpath: str, x: DataMatrix) -> Path:
        self.write_json(relpath[: -len(".csv")] + ".json", x.sidecar())
        return self.write_text(relpath, x.to_csv())

    def finalize(self, partial: bool = False) -> Path:
        path = self.out_dir / MANIFEST_NAME
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path.write_text(
            _dumps(
                {
                    "config_hash": self.config_hash,
                    "files": dict(sorted(self.files.items())),
                    "partial": partial,
                }
            ),
            encoding="utf-8",
        )
        return path


@dataclass
class ExperimentBundle:
    out_dir: Path
    manifest_path: Path
    config_hash: str
    scenario_ids: List[str] = field(default_factory=list)
    gft_datasets: List[SamplingPlan] = field(default_factory=list)
    plans: List[SamplingPlan] = field(default_factory=list)
    reports: List[EvalReport] = field(default_factory=list)
    reductions: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    def manifest(self) -> dict[str, Any]:
        return dict(json.loads(self.manifest_path.read_text(encoding="utf-8")))


@contextmanager
def _stage(name: str, writer: ManifestWriter) -> Iterator[None]:
    logger.info("Stage %s", name)
    try:
        yield
    except PipelineError:
        raise
    except (HydroSampleError, OSError) as e:
        msg = e.msg if isinstance(e, HydroSampleError) else f"I/O error: {e}"
        partial = bool(writer.files)
        try:
            writer.finalize(partial=True)
        except OSError as write_error:
            logger.error("Could not write the partial manifest: %s", write_error)
            partial = False
        raise PipelineError(msg, stage=name, partial_manifest=partial) from e


def _simulate(config: PipelineConfig, net: PipeNetwork) -> list[DataMatrix]:
    variants = VariantSpec(
        rates=config.rates,
        durations=config.durations,
        starts=config.starts,
        timestep=config.timestep,
        max_steps=config.max_steps,
    )
    sweep_hash = get_sweep_hash(net, config.sources, variants)
    if config.use_cache:
        cached = get_cached_sweep(sweep_hash)
        if cached is not None:
            return cached
    matrices = run_scenario_sweep(net, config.sources, variants, solve_flows(net))
    if config.use_cache:
        update_sweep_cache(sweep_hash, matrices)
    return matrices


def source_matrix(group: List[DataMatrix]) -> DataMatrix:
    """
    All variants of one source side by side in time, so the source's GFT
    dataset covers every rate, duration and start of the sweep.
    """
    if len(group) == 1:
        return group[0]
    return DataMatrix(
        values=np.hstack([x.values for x in group]),
        node_index=group[0].node_index,
        timestep=group[0].timestep,
        scenario=group[0].scenario,
    )


def general_plans(
    config: PipelineConfig, net: PipeNetwork, datasets: List[SamplingPlan]
) -> list[SamplingPlan]:
    """
    The general plans of an experiment, deduplicated by plan id: GFT-F per
    threshold, GFT-I per n, then for every budget GFT-F, GFT-I, Laplacian and
    one random plan per seed.
    """
    plans: list[SamplingPlan] = []
    for threshold in config.frequent_thresholds:
        try:
            plans.append(gft_frequent_plan(datasets, threshold))
        except PlanError as e:
            logger.warning("Skipping GFT-F threshold %d: %s", threshold, e.msg)
    for n in config.important_n:
        plans.append(gft_important_plan(datasets, n))
    n_nodes = net.n_junctions
    for fraction in config.budgets:
        budget = budget_from_fraction(fraction, n_nodes)
        plans.append(gft_frequent_budget_plan(datasets, budget, n_nodes))
        plans.append(gft_important_budget_plan(datasets, budget, n_nodes))
        plans.append(laplacian_plan(net, budget))
        for seed in config.seeds:
            plans.append(random_plan(net, budget, seed))
    unique: dict[str, SamplingPlan] = {}
    for p in plans:
        unique.setdefault(p.plan_id, p)
    return list(unique.values())


def run_pipeline(config: PipelineConfig, out_dir: Path) -> ExperimentBundle:
    """
    Runs a complete experiment and writes under out_dir:

        config.json, scenarios/<id>.csv + .json, gft/<plan>.json,
        plans/<plan>.json, models/<plan>.json, reports/<plan>.json,
        reductions.json (when reduce_tier is set), plot_data.csv,
        plots/<plan>.csv (original vs reconstructed series at unmonitored
        junctions of the first test scenario), manifest.json

    Raises: PipelineError naming the failing stage; a partial manifest is
        written before raising.
    """
    out_dir = Path(out_dir)
    writer = ManifestWriter(out_dir, config.config_hash())
    params = TrainingParams(
        hidden_layers=config.hidden_layers,
        epochs=config.epochs,
        learning_rate=config.learning_rate,
        batch_size=config.batch_size,
        seed=config.seed,
    )

    with _stage("load", writer):
        net = load_network(config.network)
        settings = config.to_dict()
        settings.pop("use_cache")
        writer.write_json("config.json", settings)

    with _stage("sweep", writer):
        matrices = _simulate(config, net)
        for x in matrices:
            writer.write_matrix(f"scenarios/{x.scenario_id}.csv", x)

    with _stage("gft", writer):
        by_source: dict[str, list[DataMatrix]] = {}
        for x in matrices:
            by_source.setdefault(x.scenario.source, []).append(x)
        datasets = [
            build_gft_dataset(source_matrix(group), rank_tol=config.rank_tol)
            for group in by_source.values()
        ]
        for d in datasets:
            writer.write_json(f"gft/{d.plan_id}.json", d.to_dict())

    with _stage("filter", writer):
        kept = filter_subset_datasets(datasets, net.junction_index)

    with _stage("plans", writer):
        plans = general_plans(config, net, kept)
        for p in plans:
            writer.write_json(f"plans/{p.plan_id}.json", p.to_dict())

    reductions: dict[str, dict[str, Any]] = {}
    reduced_tests: dict[str, list[DataMatrix]] = {}
    if config.reduce_tier is not None:
        with _stage("reduce", writer):
            threshold = TIERS[config.reduce_tier]
            trainer = decoder_trainer(params)
            for d in kept:
                assert d.provenance.source is not None
                group = by_source[d.provenance.source]
                reduced = reduce_injection_specific(
                    d, group, threshold, trainer, split_seed=config.split_seed
                )
                plans.append(reduced)
                writer.write_json(f"plans/{reduced.plan_id}.json", reduced.to_dict())
                reduced_tests[reduced.plan_id] = split_by_variant(
                    group, config.split_seed
                )[1]
                reductions[reduced.plan_id] = {
                    "source": d.provenance.source,
                    "gft_dataset": d.plan_id,
                    "gft_size": len(d),
                    "reduced_size": len(reduced),
                    "retained_fraction": len(reduced) / len(d),
                    "accuracy_threshold": threshold,
                }
            writer.write_json("reductions.json", reductions)

    models: dict[str, MlpModel] = {}
    with _stage("train", writer):
        for p in plans:
            train_set = (
                by_source[p.provenance.source]
                if p.plan_id in reduced_tests and p.provenance.source is not None
                else matrices
            )
            models[p.plan_id] = train_decoder(p, train_set, config.split_seed, params)
            writer.write_json(f"models/{p.plan_id}.json", models[p.plan_id].to_dict())

    reports: list[EvalReport] = []
    with _stage("evaluate", writer):
        _, test = split_by_variant(matrices, config.split_seed)
        for p in plans:
            report = evaluate_plan(
                p, models[p.plan_id], reduced_tests.get(p.plan_id, test)
            )
            reports.append(report)
            writer.write_json(f"reports/{p.plan_id}.json", report.to_dict())

    with _stage("export", writer):
        writer.write_text("plot_data.csv", export_plot_data(reports))
        for p in plans:
            x = reduced_tests.get(p.plan_id, test)[0]
            junctions = select_series_junctions(
                p, x, config.series_junctions, config.series_count
            )
            if junctions:
                writer.write_text(
                    f"plots/{p.plan_id}.csv",
                    export_series(p, models[p.plan_id], x, junctions),
                )

    manifest_path = writer.finalize()
    logger.info("Wrote %d artifacts to %s", len(writer.files), out_dir)
    return ExperimentBundle(
        out_dir=out_dir,
        manifest_path=manifest_path,
        config_hash=writer.config_hash,
        scenario_ids=[x.scenario_id for x in matrices],
        gft_datasets=datasets,
        plans=plans,
        reports=reports,
        reductions=reductions,
    )


def load_bundle_reports(out_dir: Path) -> list[EvalReport]:
    return [load_report(p) for p in sorted((Path(out_dir) / "reports").glob("*.json"))]


def scenario_matrices(out_dir: Path) -> list[DataMatrix]:
    return [
        read_data_matrix(p) for p in sorted((Path(out_dir) / "scenarios").glob("*.csv"))
    ]

