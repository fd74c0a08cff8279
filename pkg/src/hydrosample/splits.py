from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from hydrosample.exception import ScenarioError
from hydrosample.transport import DataMatrix

logger = logging.getLogger(__name__)

VariantKey = tuple[float, float, float]


def variant_key(x: DataMatrix) -> VariantKey:
    sc = x.scenario
    return (sc.rate, sc.duration, sc.start)


def split_by_variant(
    matrices: Sequence[DataMatrix], seed: int, fraction: float = 0.8
) -> tuple[list[DataMatrix], list[DataMatrix]]:
    """
    Splits scenarios into train and held-out sets by variant (rate, duration,
    start), so every source appears on both sides with different variants.

    The distinct variants are shuffled with `seed`; round((1 - fraction) * V)
    of them, at least one, are held out. With a single variant there is nothing
    to hold out and both sides get every matrix.
    """
    if not matrices:
        raise ScenarioError("Cannot split an empty list of scenarios.")
    if not 0 < fraction <= 1:
        raise ScenarioError(f"Train fraction must lie in (0, 1], got {fraction}.")
    variants = sorted({variant_key(x) for x in matrices})
    if len(variants) < 2 or fraction == 1:
        logger.warning(
            "Only %d scenario variant(s); training and held-out sets coincide",
            len(variants),
        )
        return list(matrices), list(matrices)
    n_test = min(len(variants) - 1, max(1, round((1 - fraction) * len(variants))))
    order = np.random.default_rng(seed).permutation(len(variants))
    held_out = {variants[i] for i in order[:n_test]}
    train = [x for x in matrices if variant_key(x) not in held_out]
    test = [x for x in matrices if variant_key(x) in held_out]
    logger.debug(
        "Split %d scenarios into %d train / %d held-out (seed %d)",
        len(matrices),
        len(train),
        len(test),
        seed,
    )
    return train, test
