"""
A small dense feed-forward network: ReLU hidden layers, identity or sigmoid
output, trained with mini-batch Adam on mean squared error or binary
cross-entropy.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from hydrosample.exception import ModelFormatError, TrainingError

logger = logging.getLogger(__name__)

MODEL_VERSION = "hydrosample-mlp-v1"

OutputActivation = Literal["identity", "sigmoid"]
Role = Literal["decoder", "encoder", "generic"]


@dataclass(frozen=True, eq=False)
class Normalization:
    """
    Per-feature min-max scaling: normalize(v) = (v - shift) / scale.
    """

    shift: np.ndarray
    scale: np.ndarray

    def __post_init__(self) -> None:
        shift = np.asarray(self.shift, dtype=float)
        scale = np.asarray(self.scale, dtype=float)
        if shift.shape != scale.shape or shift.ndim != 1:
            raise ModelFormatError(
                "Normalization shift and scale must be equal-length vectors."
            )
        if not (np.all(np.isfinite(shift)) and np.all(np.isfinite(scale))):
            raise ModelFormatError("Normalization vectors must be finite.")
        if np.any(scale <= 0):
            raise ModelFormatError("Normalization scales must be positive.")
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "scale", scale)

    @classmethod
    def fit(cls, values: np.ndarray) -> "Normalization":
        values = np.asarray(values, dtype=float)
        lo = values.min(axis=0)
        span = values.max(axis=0) - lo
        return cls(shift=lo, scale=np.where(span > 0, span, 1.0))

    @classmethod
    def identity(cls, width: int) -> "Normalization":
        return cls(shift=np.zeros(width), scale=np.ones(width))

    @property
    def width(self) -> int:
        return int(self.shift.size)

    def normalize(self, values: np.ndarray) -> np.ndarray:
        return np.asarray((values - self.shift) / self.scale)

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values * self.scale + self.shift)

    def to_dict(self) -> dict[str, Any]:
        return {"shift": self.shift.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "Normalization":
        return cls(shift=np.asarray(raw["shift"]), scale=np.asarray(raw["scale"]))


def _norm_to_dict(norm: Normalization | None) -> dict[str, Any] | None:
    return None if norm is None else norm.to_dict()


def _norm_from_dict(raw: dict[str, Any] | None) -> Normalization | None:
    return Normalization.from_dict(raw) if raw else None


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """
    Raw samples (one per row) plus the normalization applied before training.
    """

    inputs: np.ndarray
    targets: np.ndarray
    input_norm: Normalization
    target_norm: Normalization

    def __post_init__(self) -> None:
        inputs = np.asarray(self.inputs, dtype=float)
        targets = np.asarray(self.targets, dtype=float)
        if inputs.ndim != 2 or targets.ndim != 2 or inputs.shape[0] != targets.shape[0]:
            raise TrainingError(
                f"Training inputs {inputs.shape} and targets {targets.shape} do not "
                "pair up row by row."
            )
        if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(targets))):
            raise TrainingError("Training data contains non-finite values.")
        if (
            inputs.shape[1] != self.input_norm.width
            or targets.shape[1] != self.target_norm.width
        ):
            raise TrainingError("Normalization widths do not match the training data.")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    @classmethod
    def fitted(
        cls, inputs: np.ndarray, targets: np.ndarray, scale_targets: bool = True
    ) -> "TrainingSet":
        inputs = np.asarray(inputs, dtype=float)
        targets = np.asarray(targets, dtype=float)
        if inputs.shape[0] == 0:
            raise TrainingError("Cannot fit a normalization on zero samples.")
        if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(targets))):
            raise TrainingError("Training data contains non-finite values.")
        return cls(
            inputs=inputs,
            targets=targets,
            input_norm=Normalization.fit(inputs),
            target_norm=(
                Normalization.fit(targets)
                if scale_targets
                else Normalization.identity(targets.shape[1])
            ),
        )

    def __len__(self) -> int:
        return int(self.inputs.shape[0])

    def normalized(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            self.input_norm.normalize(self.inputs),
            self.target_norm.normalize(self.targets),
        )

    def with_norms_of(self, other: "TrainingSet") -> "TrainingSet":
        return replace(self, input_norm=other.input_norm, target_norm=other.target_norm)


@dataclass(frozen=True, eq=False)
class MlpModel:
    """
    Args:
        layer_sizes (tuple[int, ...]): Widths from input to output.
        weights (list[np.ndarray]): One (fan_in x fan_out) matrix per layer.
        biases (list[np.ndarray]): One fan_out vector per layer.
        output_activation (str): "identity" or "sigmoid".
        role (str): "decoder", "encoder" or "generic".
        input_norm (Normalization | None): Applied to raw inputs.
        target_norm (Normalization | None): Inverted on raw outputs.
        input_nodes (tuple[int, ...]): Junction indices feeding the input layer.
        train_meta (dict): Hyperparameters and final losses of the last training.
    """

    layer_sizes: Tuple[int, ...]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    hidden_activation: Literal["relu"] = "relu"
    output_activation: OutputActivation = "identity"
    role: Role = "generic"
    input_norm: Optional[Normalization] = None
    target_norm: Optional[Normalization] = None
    input_nodes: Tuple[int, ...] = ()
    train_meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ModelFormatError(f"Invalid layer sizes {sizes}.")
        n_layers = len(sizes) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise ModelFormatError(
                f"Expected {n_layers} weight matrices and bias vectors."
            )
        weights = [np.asarray(w, dtype=float) for w in self.weights]
        biases = [np.asarray(b, dtype=float) for b in self.biases]
        for k, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (sizes[k], sizes[k + 1]) or b.shape != (sizes[k + 1],):
                raise ModelFormatError(
                    f"Layer {k} has weights {w.shape} and bias {b.shape}, expected "
                    f"({sizes[k]}, {sizes[k + 1]}) and ({sizes[k + 1]},)."
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ModelFormatError(f"Layer {k} has non-finite parameters.")
        if self.hidden_activation != "relu":
            raise ModelFormatError(
                f"Unsupported hidden activation {self.hidden_activation!r}."
            )
        if self.output_activation not in ("identity", "sigmoid"):
            raise ModelFormatError(
                f"Unsupported output activation {self.output_activation!r}."
            )
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)
        object.__setattr__(self, "input_nodes", tuple(int(i) for i in self.input_nodes))

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": MODEL_VERSION,
            "role": self.role,
            "layer_sizes": list(self.layer_sizes),
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
            "weights": [
                {
                    "rows": int(w.shape[0]),
                    "cols": int(w.shape[1]),
                    "data": w.ravel().tolist(),
                }
                for w in self.weights
            ],
            "biases": [b.tolist() for b in self.biases],
            "normalization": {
                "input": _norm_to_dict(self.input_norm),
                "target": _norm_to_dict(self.target_norm),
            },
            "input_nodes": list(self.input_nodes),
            "train_meta": self.train_meta,
        }

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "MlpModel":
        if raw.get("version") != MODEL_VERSION:
            raise ModelFormatError(
                f"Unsupported model version {raw.get('version')!r}; expected "
                f"{MODEL_VERSION!r}.",
                title="Hydrosample couldn't load your model.",
            )
        try:
            norms = raw.get("normalization") or {}
            return cls(
                layer_sizes=tuple(raw["layer_sizes"]),
                weights=[
                    np.asarray(w["data"], dtype=float).reshape(w["rows"], w["cols"])
                    for w in raw["weights"]
                ],
                biases=[np.asarray(b, dtype=float) for b in raw["biases"]],
                hidden_activation=raw.get("hidden_activation", "relu"),
                output_activation=raw["output_activation"],
                role=raw.get("role", "generic"),
                input_norm=_norm_from_dict(norms.get("input")),
                target_norm=_norm_from_dict(norms.get("target")),
                input_nodes=tuple(raw.get("input_nodes", ())),
                train_meta=dict(raw.get("train_meta", {})),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(
                f"Malformed model file: {e}",
                title="Hydrosample couldn't load your model.",
            ) from e


def init_mlp(
    layer_sizes: Sequence[int],
    seed: int,
    output_activation: OutputActivation = "identity",
    role: Role = "generic",
) -> MlpModel:
    """
    He-initialized weights, zero biases.
    """
    rng = np.random.default_rng(seed)
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or min(sizes) < 1:
        raise ModelFormatError(f"Invalid layer sizes {sizes}.")
    weights = [
        rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:])
    ]
    biases = [np.zeros(fan_out) for fan_out in sizes[1:]]
    return MlpModel(
        layer_sizes=sizes,
        weights=weights,
        biases=biases,
        output_activation=output_activation,
        role=role,
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return np.asarray(0.5 * (1.0 + np.tanh(0.5 * z)))


def _forward_pass(
    model: MlpModel, inputs: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    activations = [inputs]
    a = inputs
    last = len(model.weights) - 1
    z = a
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        if k < last:
            a = np.maximum(z, 0.0)
            activations.append(a)
    return activations, z


def forward_batch(model: MlpModel, inputs: np.ndarray) -> np.ndarray:
    """
    Forward pass over a batch (one sample per row), in the model's own
    (normalized) units.
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2 or inputs.shape[1] != model.n_inputs:
        raise ModelFormatError(
            f"Model expects {model.n_inputs} inputs per sample, "
            f"got shape {inputs.shape}."
        )
    _, logits = _forward_pass(model, inputs)
    if model.output_activation == "sigmoid":
        return _sigmoid(logits)
    return logits


def mlp_forward(model: MlpModel, sample: Sequence[float] | np.ndarray) -> np.ndarray:
    x = np.asarray(sample, dtype=float)
    if x.ndim != 1 or x.size != model.n_inputs:
        raise ModelFormatError(
            f"Model expects an input vector of length {model.n_inputs}, got shape "
            f"{x.shape}."
        )
    return forward_batch(model, x[None, :])[0]


def loss_and_gradients(
    model: MlpModel, inputs: np.ndarray, targets: np.ndarray
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """
    Mean loss over every output of the batch and its gradients: squared error
    for identity outputs, binary cross-entropy (computed from the logits) for
    sigmoid outputs.
    """
    activations, logits = _forward_pass(model, inputs)
    denom = float(targets.size)
    if model.output_activation == "sigmoid":
        loss = float(np.mean(np.logaddexp(0.0, logits) - targets * logits))
        delta = (_sigmoid(logits) - targets) / denom
    else:
        residual = logits - targets
        loss = float(np.mean(residual**2))
        delta = 2.0 * residual / denom

    grad_w: list[np.ndarray] = [np.empty(0)] * len(model.weights)
    grad_b: list[np.ndarray] = [np.empty(0)] * len(model.weights)
    for k in range(len(model.weights) - 1, -1, -1):
        grad_w[k] = activations[k].T @ delta
        grad_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ model.weights[k].T) * (activations[k] > 0)
    return loss, grad_w, grad_b


def _batch_loss(model: MlpModel, inputs: np.ndarray, targets: np.ndarray) -> float:
    _, logits = _forward_pass(model, inputs)
    if model.output_activation == "sigmoid":
        return float(np.mean(np.logaddexp(0.0, logits) - targets * logits))
    return float(np.mean((logits - targets) ** 2))


def mlp_train(
    model: MlpModel,
    data: TrainingSet,
    epochs: int,
    learning_rate: float,
    batch_size: int,
    seed: int,
    validation: TrainingSet | None = None,
) -> MlpModel:
    """
    Mini-batch Adam on the normalized training set. Samples are reshuffled
    every epoch from a generator seeded with `seed`, so the loss history is
    reproducible.

    Returns a new model carrying the data's normalization and train_meta.

    Raises: TrainingError on bad hyperparameters, an empty set, or a
        non-finite loss (with the epoch it happened in).
    """
    if len(data) == 0:
        raise TrainingError("Cannot train on an empty training set.")
    if epochs < 1 or batch_size < 1 or not learning_rate > 0:
        raise TrainingError(
            f"epochs, batch_size and learning_rate must be positive, got {epochs}, "
            f"{batch_size} and {learning_rate}."
        )
    if (
        data.inputs.shape[1] != model.n_inputs
        or data.targets.shape[1] != model.n_outputs
    ):
        raise TrainingError(
            f"Model {model.layer_sizes} does not fit data with "
            f"{data.inputs.shape[1]} inputs and {data.targets.shape[1]} targets."
        )
    inputs, targets = data.normalized()
    val: tuple[np.ndarray, np.ndarray] | None = None
    if validation is not None and len(validation) > 0:
        val = validation.with_norms_of(data).normalized()

    beta1, beta2, eps = 0.9, 0.999, 1e-8
    weights = [w.copy() for w in model.weights]
    biases = [b.copy() for b in model.biases]
    params = weights + biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    rng = np.random.default_rng(seed)
    work = replace(model, weights=weights, biases=biases)
    t = 0
    epoch_loss = math.nan
    for epoch in range(epochs):
        order = rng.permutation(len(data))
        total = 0.0
        for lo in range(0, len(data), batch_size):
            idx = order[lo : lo + batch_size]
            loss, gw, gb = loss_and_gradients(work, inputs[idx], targets[idx])
            if not math.isfinite(loss):
                raise TrainingError(
                    f"Training loss became non-finite at epoch {epoch}.", epoch=epoch
                )
            total += loss * idx.size
            t += 1
            for p, g, mi, vi in zip(params, gw + gb, m, v):
                mi *= beta1
                mi += (1 - beta1) * g
                vi *= beta2
                vi += (1 - beta2) * g * g
                m_hat = mi / (1 - beta1**t)
                v_hat = vi / (1 - beta2**t)
                p -= learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        epoch_loss = total / len(data)
        if not math.isfinite(epoch_loss) or not all(
            np.all(np.isfinite(p)) for p in params
        ):
            raise TrainingError(
                f"Training diverged at epoch {epoch}.", epoch=epoch
            )
        if epoch % 100 == 0:
            logger.debug("epoch %d: train loss %.6g", epoch, epoch_loss)

    final_train = _batch_loss(work, inputs, targets)
    final_val = None if val is None else _batch_loss(work, *val)
    meta = {
        "epochs": epochs,
        "learning_rate": learning_rate,
        "batch_size": batch_size,
        "seed": seed,
        "final_train_loss": final_train,
        "final_val_loss": final_val,
    }
    return replace(
        work,
        weights=[w.copy() for w in weights],
        biases=[b.copy() for b in biases],
        input_norm=data.input_norm,
        target_norm=data.target_norm,
        train_meta=meta,
    )


def save_model(path: Path, model: MlpModel) -> None:
    Path(path).write_text(
        json.dumps(model.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_model(path: Path) -> MlpModel:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise ModelFormatError(
            f"Error reading model file at {path}. {e}",
            title="Hydrosample couldn't load your model.",
        ) from e
    return MlpModel.from_dict(raw)
