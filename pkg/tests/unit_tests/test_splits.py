from __future__ import annotations

from typing import Callable

import numpy as np
import pytest
from hydrosample.exception import ScenarioError
from hydrosample.splits import split_by_variant, variant_key
from hydrosample.transport import DataMatrix


@pytest.fixture
def sweep(matrix_factory: Callable[..., DataMatrix]) -> list[DataMatrix]:
    values = np.ones((3, 4))
    return [
        matrix_factory(values, source=source, rate=rate, duration=duration)
        for source in ("J1", "J2", "J3")
        for rate in (1.0, 2.0, 5.0)
        for duration in (60.0, 120.0, 180.0)
    ]


def test_split_holds_out_whole_variants(sweep: list[DataMatrix]) -> None:
    train, test = split_by_variant(sweep, seed=0)
    # 9 variants: round(0.2 * 9) = 2 held out
    assert len({variant_key(x) for x in test}) == 2
    assert len(test) == 6
    assert len(train) == 21
    assert not {variant_key(x) for x in train} & {variant_key(x) for x in test}
    for side in (train, test):
        assert {x.scenario.source for x in side} == {"J1", "J2", "J3"}


def test_split_is_seeded(sweep: list[DataMatrix]) -> None:
    a = split_by_variant(sweep, seed=3)
    b = split_by_variant(sweep, seed=3)
    assert [x.scenario_id for x in a[1]] == [x.scenario_id for x in b[1]]
    held_out = {
        tuple(sorted({variant_key(x) for x in split_by_variant(sweep, seed=s)[1]}))
        for s in range(10)
    }
    assert len(held_out) > 1


def test_split_keeps_input_order(sweep: list[DataMatrix]) -> None:
    train, test = split_by_variant(sweep, seed=1)
    position = {id(x): i for i, x in enumerate(sweep)}
    for side in (train, test):
        indices = [position[id(x)] for x in side]
        assert indices == sorted(indices)


def test_split_fraction(sweep: list[DataMatrix]) -> None:
    _, test = split_by_variant(sweep, seed=0, fraction=0.5)
    assert len({variant_key(x) for x in test}) == 4
    # always leaves at least one variant for training
    train, _ = split_by_variant(sweep, seed=0, fraction=0.01)
    assert train


def test_single_variant_is_shared(
    matrix_factory: Callable[..., DataMatrix], caplog: pytest.LogCaptureFixture
) -> None:
    matrices = [matrix_factory(np.ones((2, 3)), source=s) for s in ("J1", "J2")]
    train, test = split_by_variant(matrices, seed=0)
    assert train == matrices
    assert test == matrices
    assert "coincide" in caplog.text


@pytest.mark.parametrize("fraction", [0.0, 1.2])
def test_split_rejects(sweep: list[DataMatrix], fraction: float) -> None:
    with pytest.raises(ScenarioError):
        split_by_variant(sweep, seed=0, fraction=fraction)
    with pytest.raises(ScenarioError):
        split_by_variant([], seed=0)
