from __future__ import annotations

from dataclasses import replace
from pathlib import Path
from typing import Callable

import numpy as np
import pytest
from hydrosample.exception import ModelFormatError, TrainingError
from hydrosample.mlp import (
    MlpModel,
    Normalization,
    OutputActivation,
    TrainingSet,
    forward_batch,
    init_mlp,
    load_model,
    loss_and_gradients,
    mlp_forward,
    mlp_train,
    save_model,
)

EPS = 1e-5


def _xor_model() -> MlpModel:
    return MlpModel(
        layer_sizes=(2, 2, 1),
        weights=[np.array([[1.0, 1.0], [1.0, 1.0]]), np.array([[1.0], [-2.0]])],
        biases=[np.array([0.0, -1.0]), np.array([0.0])],
    )


def _randomized(
    sizes: tuple[int, ...], activation: OutputActivation = "identity"
) -> MlpModel:
    model = init_mlp(sizes, seed=2, output_activation=activation)
    rng = np.random.default_rng(5)
    return replace(model, biases=[rng.normal(0, 0.3, b.shape) for b in model.biases])


def test_init_shapes_and_determinism() -> None:
    model = init_mlp([3, 5, 2], seed=0)
    assert [w.shape for w in model.weights] == [(3, 5), (5, 2)]
    assert all(not b.any() for b in model.biases)
    again = init_mlp([3, 5, 2], seed=0)
    for a, b in zip(model.weights, again.weights):
        np.testing.assert_array_equal(a, b)
    with pytest.raises(ModelFormatError):
        init_mlp([3], seed=0)


def test_xor_forward() -> None:
    model = _xor_model()
    for sample, expected in [((0, 0), 0), ((1, 0), 1), ((0, 1), 1), ((1, 1), 0)]:
        assert mlp_forward(model, sample)[0] == pytest.approx(expected)


def test_forward_rejects_wrong_width() -> None:
    with pytest.raises(ModelFormatError):
        mlp_forward(_xor_model(), [1.0, 2.0, 3.0])
    with pytest.raises(ModelFormatError):
        forward_batch(_xor_model(), np.ones((4, 3)))


def test_sigmoid_output_is_probability() -> None:
    model = _randomized((3, 4, 3), "sigmoid")
    out = forward_batch(model, np.random.default_rng(0).normal(0, 5, (20, 3)))
    assert np.all((out >= 0) & (out <= 1))


@pytest.mark.parametrize(
    "sizes,activation",
    [((3, 4, 2), "identity"), ((3, 4, 4, 2), "identity"), ((3, 4, 3), "sigmoid")],
)
def test_gradients_match_central_differences(
    sizes: tuple[int, ...], activation: OutputActivation
) -> None:
    model = _randomized(sizes, activation)
    rng = np.random.default_rng(9)
    inputs = rng.normal(size=(6, sizes[0]))
    if activation == "sigmoid":
        targets = (rng.uniform(size=(6, sizes[-1])) > 0.5).astype(float)
    else:
        targets = rng.normal(size=(6, sizes[-1]))
    _, grad_w, grad_b = loss_and_gradients(model, inputs, targets)

    def _loss(weights: list[np.ndarray], biases: list[np.ndarray]) -> float:
        perturbed = replace(model, weights=weights, biases=biases)
        return loss_and_gradients(perturbed, inputs, targets)[0]

    for group, grads in (("w", grad_w), ("b", grad_b)):
        params = model.weights if group == "w" else model.biases
        for k, p in enumerate(params):
            for idx in np.ndindex(p.shape):
                plus = [q.copy() for q in params]
                minus = [q.copy() for q in params]
                plus[k][idx] += EPS
                minus[k][idx] -= EPS
                if group == "w":
                    numeric = (
                        _loss(plus, model.biases) - _loss(minus, model.biases)
                    ) / (2 * EPS)
                else:
                    numeric = (
                        _loss(model.weights, plus) - _loss(model.weights, minus)
                    ) / (2 * EPS)
                analytic = grads[k][idx]
                err = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-7)
                assert err < 1e-4, (group, k, idx, analytic, numeric)


def test_normalization() -> None:
    values = np.array([[0.0, 5.0, 2.0], [4.0, 5.0, 3.0]])
    norm = Normalization.fit(values)
    np.testing.assert_array_equal(norm.shift, [0.0, 5.0, 2.0])
    # constant columns keep a unit scale
    np.testing.assert_array_equal(norm.scale, [4.0, 1.0, 1.0])
    np.testing.assert_allclose(norm.denormalize(norm.normalize(values)), values)
    with pytest.raises(ModelFormatError):
        Normalization(shift=np.zeros(2), scale=np.array([1.0, 0.0]))


def test_training_set_validation() -> None:
    with pytest.raises(TrainingError):
        TrainingSet.fitted(np.ones((3, 2)), np.ones((4, 1)))
    with pytest.raises(TrainingError):
        TrainingSet.fitted(np.array([[np.nan]]), np.ones((1, 1)))
    with pytest.raises(TrainingError):
        TrainingSet.fitted(np.ones((0, 2)), np.ones((0, 1)))


def test_identity_fit() -> None:
    seed = next(
        s for s in range(100) if (init_mlp([1, 4, 1], seed=s).weights[0] > 0).any()
    )
    x = np.linspace(0, 1, 64)[:, None]
    data = TrainingSet.fitted(x, x)
    model = mlp_train(
        init_mlp([1, 4, 1], seed=seed),
        data,
        epochs=500,
        learning_rate=0.01,
        batch_size=16,
        seed=0,
    )
    assert model.train_meta["final_train_loss"] < 1e-3
    assert model.train_meta["final_val_loss"] is None
    assert model.input_norm is data.input_norm


def test_training_reduces_loss_and_is_reproducible() -> None:
    rng = np.random.default_rng(4)
    inputs = rng.uniform(size=(80, 3))
    targets = inputs @ rng.normal(size=(3, 2))
    data = TrainingSet.fitted(inputs, targets)
    model = init_mlp([3, 6, 2], seed=1)
    norm_in, norm_out = data.normalized()
    before = loss_and_gradients(model, norm_in, norm_out)[0]
    kwargs: dict = dict(epochs=50, learning_rate=0.01, batch_size=16, seed=3)
    a = mlp_train(model, data, **kwargs)
    b = mlp_train(model, data, **kwargs)
    assert a.train_meta["final_train_loss"] < before
    for wa, wb in zip(a.weights, b.weights):
        np.testing.assert_array_equal(wa, wb)
    # the input model is left untouched
    fresh = init_mlp([3, 6, 2], seed=1)
    np.testing.assert_array_equal(model.weights[0], fresh.weights[0])


def test_validation_loss_is_reported() -> None:
    rng = np.random.default_rng(4)
    inputs = rng.uniform(size=(40, 2))
    data = TrainingSet.fitted(inputs, inputs.sum(axis=1, keepdims=True))
    val_in = rng.uniform(size=(10, 2))
    val = TrainingSet.fitted(val_in, val_in.sum(axis=1, keepdims=True))
    model = mlp_train(
        init_mlp([2, 3, 1], seed=0),
        data,
        epochs=5,
        learning_rate=0.01,
        batch_size=8,
        seed=0,
        validation=val,
    )
    assert model.train_meta["final_val_loss"] is not None
    assert model.train_meta["epochs"] == 5


def test_xor_is_learned() -> None:
    inputs = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    targets = np.array([[0.0], [1.0], [1.0], [0.0]])
    data = TrainingSet.fitted(inputs, targets, scale_targets=False)
    model = mlp_train(
        init_mlp([2, 8, 1], seed=0, output_activation="sigmoid"),
        data,
        epochs=2000,
        learning_rate=0.05,
        batch_size=4,
        seed=0,
    )
    assert model.input_norm is not None
    out = forward_batch(model, model.input_norm.normalize(inputs))
    assert np.array_equal(out > 0.5, targets > 0.5)


def test_divergence_raises_with_epoch() -> None:
    x = np.linspace(0, 1, 8)[:, None]
    data = TrainingSet.fitted(x, x)
    with pytest.raises(TrainingError) as exc_info:
        mlp_train(
            init_mlp([1, 4, 1], seed=0),
            data,
            epochs=20,
            learning_rate=1e200,
            batch_size=8,
            seed=0,
        )
    assert exc_info.value.epoch is not None


@pytest.mark.parametrize(
    "kwargs",
    [
        {"epochs": 0, "learning_rate": 0.01, "batch_size": 4},
        {"epochs": 5, "learning_rate": 0.0, "batch_size": 4},
        {"epochs": 5, "learning_rate": 0.01, "batch_size": 0},
    ],
)
def test_bad_hyperparameters(kwargs: dict) -> None:
    data = TrainingSet.fitted(np.ones((4, 1)), np.ones((4, 1)))
    with pytest.raises(TrainingError):
        mlp_train(init_mlp([1, 2, 1], seed=0), data, seed=0, **kwargs)


def test_model_must_fit_data() -> None:
    data = TrainingSet.fitted(np.ones((4, 2)), np.ones((4, 1)))
    with pytest.raises(TrainingError):
        mlp_train(init_mlp([3, 2, 1], seed=0), data, 1, 0.01, 4, 0)


def test_model_file(tmp_path: Path) -> None:
    x = np.linspace(0, 1, 8)[:, None]
    model = mlp_train(
        init_mlp([1, 3, 1], seed=0), TrainingSet.fitted(x, 2 * x), 3, 0.01, 4, 0
    )
    path = tmp_path / "model.json"
    save_model(path, model)
    back = load_model(path)
    assert back.layer_sizes == model.layer_sizes
    assert back.train_meta == model.train_meta
    assert back.input_norm is not None
    np.testing.assert_array_equal(
        forward_batch(back, x), forward_batch(model, x)
    )


@pytest.mark.parametrize(
    "mutate,word",
    [
        (lambda raw: raw.update(version="other-v9"), "version"),
        (lambda raw: raw.pop("weights"), "Malformed"),
        (lambda raw: raw["biases"].pop(), "Expected"),
        (lambda raw: raw.update(output_activation="softmax"), "softmax"),
    ],
)
def test_bad_model_dict(mutate: Callable[[dict], object], word: str) -> None:
    raw = _xor_model().to_dict()
    mutate(raw)
    with pytest.raises(ModelFormatError) as exc_info:
        MlpModel.from_dict(raw)
    assert word in exc_info.value.msg


def test_load_model_errors(tmp_path: Path) -> None:
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("not json")
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "bad.json")
