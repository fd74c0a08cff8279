from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from hydrosample.exception import ConfigError

if sys.version_info < (3, 11):
    import tomli as tomllib
else:
    import tomllib

CONFIG_FILENAMES = ("pyproject.toml", ".hydrosample.toml")  # order matters!
SEARCH_DIRS = (Path.home(), Path.cwd())
TIER_NAMES = ("high", "medium", "low")

Profile = Dict[str, Union[bool, int, float, List[Any], str, Path, None]]
Config = Dict[str, Union[str, Dict[str, Profile]]]


def get_config_for_profile(config_path: Path | None, profile: str | None) -> Profile:
    config = load_config(config_path)
    active_profile = profile or config.get("default_profile", None)
    if active_profile is None or active_profile == "None":
        return {}
    elif active_profile not in config.get("profiles", {}):
        raise ConfigError(
            f"Could not load the profile named {active_profile} because it does not "
            "exist in any discovered config files.",
            title="Hydrosample couldn't load your profile.",
        )
    else:
        return config["profiles"][active_profile]  # type: ignore


def load_config(config_path: Path | None) -> Config:
    paths = _find_config_files(config_path)
    config = _merge_config_files(paths)
    _raise_on_bad_schema(config)
    return config


def _find_config_files(config_path: Path | None) -> list[Path]:
    found_files: list[Path] = []
    if config_path is None:
        for filename in CONFIG_FILENAMES:
            for p in [p / filename for p in SEARCH_DIRS]:
                if p.exists():
                    found_files.append(p)
    elif config_path.exists():
        found_files.append(config_path)
    else:
        raise ConfigError(
            f"Config file could not be found at specified path: {config_path}",
            title="Hydrosample couldn't load your config file.",
        )
    return found_files


def _merge_config_files(paths: list[Path]) -> Config:
    config: Config = {}
    for p in paths:
        try:
            with open(p, "rb") as f:
                raw_config = tomllib.load(f)
        except OSError as e:
            raise ConfigError(
                f"Error opening config file at {p}. {e}",
                title="Hydrosample couldn't load your config file.",
            ) from e
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(
                f"Error decoding config file at {p}. Check for invalid TOML. {e}",
                title="Hydrosample couldn't load your config file.",
            ) from e
        relevant_config = (
            raw_config
            if p.stem != "pyproject"
            else raw_config.get("tool", {}).get("hydrosample", {})
        )
        config.update(relevant_config)
    return config


def _raise_on_bad_schema(config: Config) -> None:
    TOP_LEVEL_KEYS = ("default_profile", "profiles")
    if not config:
        return

    for k in config.keys():
        if k not in TOP_LEVEL_KEYS:
            raise ConfigError(
                f"Found unexpected key in config: {k}.\n"
                f"Allowed values are {TOP_LEVEL_KEYS}.",
                title="Hydrosample couldn't load your config file.",
            )
    profiles = config.get("profiles", None)
    if profiles is None:
        pass
    elif not isinstance(profiles, dict):
        raise ConfigError(
            "The profiles key must define a table.",
            title="Hydrosample couldn't load your config file.",
        )
    elif not all(isinstance(v, dict) for v in profiles.values()):
        raise ConfigError(
            "The members of the profiles table must be tables.",
            title="Hydrosample couldn't load your config file.",
        )
    elif any(k == "None" for k in profiles.keys()):
        raise ConfigError(
            "Config file defines a profile named 'None', which is not allowed.",
            title="Hydrosample couldn't load your config file.",
        )
    else:
        for profile_name, opt_dict in profiles.items():
            for option_name in opt_dict.keys():
                if "-" in option_name:
                    raise ConfigError(
                        f"Profile {profile_name} defines an option '{option_name}', "
                        "which is an invalid name for an option. Did you mean "
                        f"""'{option_name.strip("-").replace("-", "_")}'?""",
                        title="Hydrosample couldn't load your config file.",
                    )

    default = config.get("default_profile", None)
    if default is not None and not isinstance(default, str):
        raise ConfigError(
            f"Config file sets default_profile to {default}, but that value "
            "must be a string.",
            title="Hydrosample couldn't load your config file.",
        )
    elif (
        default is not None
        and default != "None"
        and (not isinstance(profiles, dict) or profiles.get(default, None) is None)
    ):
        raise ConfigError(
            f"Config file sets default_profile to {default}, but does not define a "
            "profile with that name.",
            title="Hydrosample couldn't load your config file.",
        )


def _bad_value(key: str, value: Any, expected: str) -> ConfigError:
    return ConfigError(
        f"Option {key} received a bad value: {value!r}. Expected {expected}.",
        title="Hydrosample couldn't load your configuration.",
    )


def _as_float_tuple(key: str, value: Any, positive: bool = False) -> Tuple[float, ...]:
    items = value if isinstance(value, (list, tuple)) else [value]
    out: list[float] = []
    for v in items:
        if (
            isinstance(v, bool)
            or not isinstance(v, (int, float))
            or not math.isfinite(v)
        ):
            raise _bad_value(key, value, "a list of numbers")
        if positive and v <= 0:
            raise _bad_value(key, value, "a list of positive numbers")
        out.append(float(v))
    if not out:
        raise _bad_value(key, value, "a non-empty list")
    return tuple(out)


def _as_int_tuple(key: str, value: Any, minimum: int = 0) -> Tuple[int, ...]:
    items = value if isinstance(value, (list, tuple)) else [value]
    out: list[int] = []
    for v in items:
        if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
            raise _bad_value(key, value, f"a list of integers >= {minimum}")
        out.append(v)
    return tuple(out)


def _as_int(key: str, value: Any, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise _bad_value(key, value, f"an integer >= {minimum}")
    return value


def _as_float(key: str, value: Any, lo: float, hi: float = math.inf) -> float:
    if (
        isinstance(value, bool)
        or not isinstance(value, (int, float))
        or not lo < value < hi
    ):
        raise _bad_value(key, value, f"a number in ({lo}, {hi})")
    return float(value)


@dataclass(frozen=True)
class PipelineConfig:
    """
    Every option of an end-to-end experiment. Build one from a profile with
    `PipelineConfig.from_profile`; CLI options are passed as overrides.
    """

    network: Path
    sources: Tuple[str, ...]
    rates: Tuple[float, ...] = (5.0, 10.0)
    durations: Tuple[float, ...] = (600.0, 1200.0)
    starts: Tuple[float, ...] = (0.0,)
    timestep: float = 60.0
    max_steps: int = 2000
    rank_tol: float = 1e-10
    frequent_thresholds: Tuple[int, ...] = (1, 2)
    important_n: Tuple[int, ...] = (1, 2)
    budgets: Tuple[float, ...] = (0.1, 0.3, 0.5, 0.75)
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    seed: int = 0
    split_seed: int = 0
    hidden_layers: int = 1
    epochs: int = 200
    learning_rate: float = 1e-2
    batch_size: int = 64
    reduce_tier: Optional[str] = None
    series_junctions: Tuple[str, ...] = ()
    series_count: int = 2
    use_cache: bool = True

    @classmethod
    def option_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_profile(cls, profile: Profile, **overrides: Any) -> "PipelineConfig":
        raw: dict[str, Any] = dict(profile)
        raw.update({k: v for k, v in overrides.items() if v is not None})
        allowed = cls.option_names()
        for k in raw:
            if k not in allowed:
                raise ConfigError(
                    f"Found unexpected option: {k}.\nAllowed options are {allowed}.",
                    title="Hydrosample couldn't load your configuration.",
                )
        for required in ("network", "sources"):
            if required not in raw:
                raise ConfigError(
                    f"The pipeline needs the {required} option.",
                    title="Hydrosample couldn't load your configuration.",
                )
        sources = raw["sources"]
        if isinstance(sources, str):
            sources = [s for s in sources.split(",") if s]
        if not isinstance(sources, (list, tuple)) or not sources:
            raise _bad_value(
                "sources", raw["sources"], "a non-empty list of junction ids"
            )

        kwargs: dict[str, Any] = {
            "network": Path(str(raw["network"])),
            "sources": tuple(str(s) for s in sources),
        }
        for key in ("rates", "durations"):
            if key in raw:
                kwargs[key] = _as_float_tuple(key, raw[key], positive=True)
        if "starts" in raw:
            kwargs["starts"] = _as_float_tuple("starts", raw["starts"])
            if min(kwargs["starts"]) < 0:
                raise _bad_value("starts", raw["starts"], "non-negative start times")
        if "budgets" in raw:
            kwargs["budgets"] = _as_float_tuple(
                "budgets", raw["budgets"], positive=True
            )
            if max(kwargs["budgets"]) > 1:
                raise _bad_value("budgets", raw["budgets"], "fractions in (0, 1]")
        if "timestep" in raw:
            kwargs["timestep"] = _as_float("timestep", raw["timestep"], 0.0)
        if "rank_tol" in raw:
            kwargs["rank_tol"] = _as_float("rank_tol", raw["rank_tol"], 0.0, 1.0)
        if "learning_rate" in raw:
            kwargs["learning_rate"] = _as_float(
                "learning_rate", raw["learning_rate"], 0.0
            )
        for key, minimum in (
            ("max_steps", 1),
            ("seed", 0),
            ("split_seed", 0),
            ("hidden_layers", 0),
            ("epochs", 1),
            ("batch_size", 1),
            ("series_count", 0),
        ):
            if key in raw:
                kwargs[key] = _as_int(key, raw[key], minimum)
        for key, minimum in (
            ("frequent_thresholds", 1),
            ("important_n", 1),
            ("seeds", 0),
        ):
            if key in raw:
                kwargs[key] = _as_int_tuple(key, raw[key], minimum)
        if "series_junctions" in raw:
            series = raw["series_junctions"]
            if isinstance(series, str):
                series = [s for s in series.split(",") if s]
            if not isinstance(series, (list, tuple)) or not all(
                isinstance(s, str) for s in series
            ):
                raise _bad_value("series_junctions", series, "a list of junction ids")
            kwargs["series_junctions"] = tuple(series)
        if raw.get("reduce_tier") is not None:
            if raw["reduce_tier"] not in TIER_NAMES:
                raise _bad_value(
                    "reduce_tier", raw["reduce_tier"], f"one of {TIER_NAMES}"
                )
            kwargs["reduce_tier"] = raw["reduce_tier"]
        if "use_cache" in raw:
            if not isinstance(raw["use_cache"], bool):
                raise _bad_value("use_cache", raw["use_cache"], "true or false")
            kwargs["use_cache"] = raw["use_cache"]
        return cls(**kwargs)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["network"] = str(self.network)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def config_hash(self) -> str:
        """
        md5 of every option that changes results; use_cache is left out.
        """
        d = self.to_dict()
        d.pop("use_cache")
        return hashlib.md5(json.dumps(d, sort_keys=True).encode("utf-8")).hexdigest()
