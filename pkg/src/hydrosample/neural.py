"""
The two trained roles of the MLP engine: a decoder that reconstructs every
junction from the plan's sensors, and an encoder that flags the junctions a
scenario's GFT dataset would monitor.

Both are memoryless: each time step of each scenario is one sample.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Literal, Optional, Sequence

import numpy as np

from hydrosample.exception import ModelFormatError, PlanError, TrainingError
from hydrosample.mlp import (
    MlpModel,
    TrainingSet,
    forward_batch,
    init_mlp,
    mlp_train,
)
from hydrosample.plans import DecoderTrainer, Reconstructor, SamplingPlan
from hydrosample.splits import split_by_variant
from hydrosample.transport import DataMatrix

logger = logging.getLogger(__name__)

ZeroRows = Literal["drop", "negative"]
IMPORTANT_PROBABILITY = 0.5


@dataclass(frozen=True)
class TrainingParams:
    hidden_layers: int = 1
    epochs: int = 200
    learning_rate: float = 1e-2
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        if self.hidden_layers < 0:
            raise TrainingError(
                f"hidden_layers must be >= 0, got {self.hidden_layers}."
            )
        if self.epochs < 1 or self.batch_size < 1 or not self.learning_rate > 0:
            raise TrainingError(
                "epochs, batch_size and learning_rate must all be positive."
            )


def _check_matrices(matrices: Sequence[DataMatrix]) -> int:
    if not matrices:
        raise TrainingError("Training needs at least one data matrix.")
    index = matrices[0].node_index
    for x in matrices[1:]:
        if x.node_index != index:
            raise TrainingError(
                f"Scenario {x.scenario_id} uses a different junction indexing than "
                f"{matrices[0].scenario_id}."
            )
    return len(index)


def _decoder_samples(
    plan: SamplingPlan, matrices: Sequence[DataMatrix]
) -> tuple[np.ndarray, np.ndarray]:
    inputs = np.hstack([x.rows(plan.nodes) for x in matrices]).T
    targets = np.hstack([x.values for x in matrices]).T
    return inputs, targets


def fit_decoder(
    plan: SamplingPlan,
    train: Sequence[DataMatrix],
    validation: Sequence[DataMatrix] = (),
    params: TrainingParams = TrainingParams(),
) -> MlpModel:
    """
    Trains an m -> ceil((m + n) / 2) -> n decoder on every time step of `train`.
    Normalization is fitted on the training samples only.
    """
    n = _check_matrices(list(train) + list(validation))
    plan.check_against(n)
    m = len(plan)
    inputs, targets = _decoder_samples(plan, train)
    if inputs.shape[0] == 0:
        raise TrainingError("The training scenarios contain no time steps.")
    data = TrainingSet.fitted(inputs, targets)
    val: Optional[TrainingSet] = None
    if validation:
        v_in, v_out = _decoder_samples(plan, validation)
        val = TrainingSet(v_in, v_out, data.input_norm, data.target_norm)
    width = math.ceil((m + n) / 2)
    sizes = (m, *([width] * params.hidden_layers), n)
    model = init_mlp(sizes, seed=params.seed, role="decoder")
    trained = mlp_train(
        model,
        data,
        epochs=params.epochs,
        learning_rate=params.learning_rate,
        batch_size=params.batch_size,
        seed=params.seed,
        validation=val,
    )
    logger.debug(
        "Decoder for %s: train loss %.4g, val loss %s",
        plan.plan_id,
        trained.train_meta["final_train_loss"],
        trained.train_meta["final_val_loss"],
    )
    return _with_nodes(trained, plan.nodes)


def _with_nodes(model: MlpModel, nodes: Sequence[int]) -> MlpModel:
    return replace(model, input_nodes=tuple(nodes))


def train_decoder(
    plan: SamplingPlan,
    matrices: Sequence[DataMatrix],
    split_seed: int,
    params: TrainingParams = TrainingParams(),
) -> MlpModel:
    """
    Splits the scenarios 80/20 by variant with split_seed and trains a decoder
    on the 80%, reporting the validation loss on the 20%.

    Raises: PlanError if the plan does not fit the network; TrainingError for
        empty or inconsistent matrices.
    """
    _check_matrices(matrices)
    train, held_out = split_by_variant(matrices, split_seed)
    validation = [] if held_out == train else held_out
    model = fit_decoder(plan, train, validation, params)
    meta = dict(model.train_meta, split_seed=split_seed)
    return replace(model, train_meta=meta)


def predict_dynamics(
    model: MlpModel, plan: SamplingPlan, sensor_rows: np.ndarray
) -> np.ndarray:
    """
    Reconstructs all N junction series from the |S| x K sensor readings.
    Outputs are clamped to be non-negative.

    Raises: ModelFormatError if the model carries no normalization; PlanError
        if it was trained for a different plan.
    """
    if model.input_norm is None or model.target_norm is None:
        raise ModelFormatError(
            "The model has no normalization metadata; it was not trained by "
            "hydrosample.",
            title="Hydrosample couldn't use your model.",
        )
    if model.input_nodes and model.input_nodes != plan.nodes:
        raise PlanError(
            f"The model was trained on nodes {list(model.input_nodes)}, not on plan "
            f"{plan.plan_id}.",
            title="Model and plan do not match.",
        )
    rows = np.asarray(sensor_rows, dtype=float)
    if rows.ndim == 1:
        rows = rows[:, None]
    if rows.shape[0] != model.n_inputs:
        raise PlanError(
            f"Expected {model.n_inputs} sensor rows, got {rows.shape[0]}."
        )
    if rows.shape[1] == 0:
        return np.zeros((model.n_outputs, 0))
    out = forward_batch(model, model.input_norm.normalize(rows.T))
    return np.maximum(model.target_norm.denormalize(out), 0.0).T


def decoder_reconstructor(model: MlpModel, plan: SamplingPlan) -> Reconstructor:
    def _reconstruct(rows: np.ndarray) -> np.ndarray:
        return predict_dynamics(model, plan, rows)

    return _reconstruct


def decoder_trainer(params: TrainingParams = TrainingParams()) -> DecoderTrainer:
    """
    A trainer callback for reduce_injection_specific.
    """

    def _train(plan: SamplingPlan, train: Sequence[DataMatrix]) -> Reconstructor:
        return decoder_reconstructor(fit_decoder(plan, train, params=params), plan)

    return _train


def _encoder_samples(
    matrices: Sequence[DataMatrix],
    plans: Sequence[SamplingPlan],
    zero_rows: ZeroRows,
) -> tuple[np.ndarray, np.ndarray]:
    n = matrices[0].n_nodes
    inputs: list[np.ndarray] = []
    targets: list[np.ndarray] = []
    for x, plan in zip(matrices, plans):
        label = np.zeros(n)
        label[list(plan.nodes)] = 1.0
        rows = x.values.T
        zero = ~np.any(rows != 0.0, axis=1)
        labels = np.tile(label, (rows.shape[0], 1))
        if zero_rows == "drop":
            rows, labels = rows[~zero], labels[~zero]
        else:
            labels[zero] = 0.0
        inputs.append(rows)
        targets.append(labels)
    return np.vstack(inputs), np.vstack(targets)


def train_encoder(
    matrices: Sequence[DataMatrix],
    plans: Sequence[SamplingPlan],
    split_seed: int,
    params: TrainingParams = TrainingParams(),
    zero_rows: ZeroRows = "drop",
) -> MlpModel:
    """
    Trains the N -> N -> N sigmoid classifier mapping a time step of junction
    concentrations to the membership vector of its scenario's GFT dataset.

    zero_rows: "drop" removes time steps where every junction is clean;
        "negative" keeps them labelled with the empty set.

    Raises: PlanError if plans and matrices do not pair up.
    """
    if len(plans) != len(matrices):
        raise PlanError(
            f"train_encoder needs one plan per data matrix, got {len(plans)} plans "
            f"for {len(matrices)} matrices."
        )
    n = _check_matrices(matrices)
    if zero_rows not in ("drop", "negative"):
        raise TrainingError(f"Unknown zero_rows policy {zero_rows!r}.")
    for p in plans:
        p.check_against(n)
    plan_of = {id(x): p for x, p in zip(matrices, plans)}
    train, held_out = split_by_variant(matrices, split_seed)
    tr_in, tr_out = _encoder_samples(train, [plan_of[id(x)] for x in train], zero_rows)
    if tr_in.shape[0] == 0:
        raise TrainingError("Every training time step is clean; nothing to learn.")
    data = TrainingSet.fitted(tr_in, tr_out, scale_targets=False)
    val: Optional[TrainingSet] = None
    if held_out != train:
        v_in, v_out = _encoder_samples(
            held_out, [plan_of[id(x)] for x in held_out], zero_rows
        )
        if v_in.shape[0]:
            val = TrainingSet(v_in, v_out, data.input_norm, data.target_norm)
    sizes = (n, *([n] * params.hidden_layers), n)
    model = init_mlp(
        sizes, seed=params.seed, output_activation="sigmoid", role="encoder"
    )
    trained = mlp_train(
        model,
        data,
        epochs=params.epochs,
        learning_rate=params.learning_rate,
        batch_size=params.batch_size,
        seed=params.seed,
        validation=val,
    )
    return replace(
        trained,
        train_meta=dict(trained.train_meta, split_seed=split_seed, zero_rows=zero_rows),
    )


def encoder_probabilities(model: MlpModel, x: DataMatrix) -> np.ndarray:
    """
    Per-junction importance probability averaged over the scenario's time
    steps. Under the "drop" policy clean time steps are left out of the mean.
    """
    if model.role != "encoder" or model.input_norm is None:
        raise ModelFormatError(
            "Node importance needs a trained encoder model.",
            title="Hydrosample couldn't use your model.",
        )
    if x.n_nodes != model.n_inputs:
        raise PlanError(
            f"The encoder expects {model.n_inputs} junctions, the scenario has "
            f"{x.n_nodes}."
        )
    rows = x.values.T
    if model.train_meta.get("zero_rows", "drop") == "drop":
        active = rows[np.any(rows != 0.0, axis=1)]
        if active.shape[0]:
            rows = active
    if rows.shape[0] == 0:
        return np.zeros(model.n_outputs)
    probs = forward_batch(model, model.input_norm.normalize(rows))
    return np.asarray(probs.mean(axis=0))


def predict_important_nodes(model: MlpModel, x: DataMatrix) -> tuple[int, ...]:
    """
    Junction indices (ascending) whose averaged encoder output exceeds 0.5.
    """
    probs = encoder_probabilities(model, x)
    return tuple(int(i) for i in np.flatnonzero(probs > IMPORTANT_PROBABILITY))
