from __future__ import annotations

import hashlib
import json
import logging
import pickle
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from platformdirs import user_cache_dir

from hydrosample.inp import serialize_inp
from hydrosample.network import PipeNetwork, VariantSpec
from hydrosample.transport import DataMatrix

logger = logging.getLogger(__name__)

CACHE_VERSION = 1


class PermissiveEncoder(json.JSONEncoder):
    def default(self, obj: Any) -> Any:
        if isinstance(obj, Path):
            return str(obj)
        # Never raise a TypeError, just use the repr
        try:
            return str(obj)
        except TypeError:
            return ""


@dataclass
class SweepCacheEntry:
    sweep_hash: str
    matrices: list[DataMatrix]


def get_sweep_hash(
    net: PipeNetwork, sources: Sequence[str], variants: VariantSpec
) -> str:
    return (
        hashlib.md5(
            json.dumps(
                {
                    "version": CACHE_VERSION,
                    "network": serialize_inp(net),
                    "sources": list(sources),
                    "variants": variants,
                },
                cls=PermissiveEncoder,
            ).encode("utf-8")
        )
        .digest()
        .hex()
    )


def get_cached_sweep(sweep_hash: str) -> list[DataMatrix] | None:
    entry = _load_cache(sweep_hash)
    if entry is None or entry.sweep_hash != sweep_hash:
        logger.debug("Sweep cache miss for %s", sweep_hash)
        return None
    logger.debug("Sweep cache hit for %s", sweep_hash)
    return entry.matrices


def update_sweep_cache(sweep_hash: str, matrices: Sequence[DataMatrix]) -> None:
    try:
        _write_cache(SweepCacheEntry(sweep_hash=sweep_hash, matrices=list(matrices)))
    except OSError as e:
        logger.warning("Could not write the sweep cache: %s", e)


def get_cache_dir() -> Path:
    """
    Returns the directory holding one pickle per cached sweep
    """
    return Path(user_cache_dir(appname="hydrosample")) / "sweeps"


def _get_cache_file(sweep_hash: str) -> Path:
    return get_cache_dir() / f"sweep-{CACHE_VERSION}-{sweep_hash}.pickle"


def _load_cache(sweep_hash: str) -> SweepCacheEntry | None:
    """
    Returns a cached sweep by loading its pickle from disk
    """
    cache_file = _get_cache_file(sweep_hash)
    try:
        with cache_file.open("rb") as f:
            entry = pickle.load(f)
    except FileNotFoundError:
        return None
    except (
        pickle.UnpicklingError,
        OSError,
        ImportError,
        TypeError,
        ValueError,
        IndexError,
        EOFError,
        AttributeError,
    ) as e:
        logger.warning("Ignoring unreadable sweep cache file %s: %s", cache_file, e)
        return None
    if not isinstance(entry, SweepCacheEntry) or entry.sweep_hash != sweep_hash:
        logger.warning("Ignoring stale sweep cache file %s", cache_file)
        return None
    return entry


def _write_cache(entry: SweepCacheEntry) -> None:
    cache_file = _get_cache_file(entry.sweep_hash)
    cache_file.parent.mkdir(parents=True, exist_ok=True)
    with open(cache_file, "wb") as f:
        pickle.dump(entry, f)
