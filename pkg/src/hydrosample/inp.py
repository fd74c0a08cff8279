"""
Reader and writer for the subset of the EPANET INP format that hydrosample
understands: [JUNCTIONS], [RESERVOIRS] and [PIPES], in SI units.
"""
from __future__ import annotations

import sys
from pathlib import Path
from typing import Any

from hydrosample.exception import (
    NetworkParseError,
    NetworkValidationError,
    ScenarioError,
)
from hydrosample.network import (
    InjectionScenario,
    Junction,
    Pipe,
    PipeNetwork,
    Reservoir,
)

if sys.version_info < (3, 11):
    import tomli as tomllib
else:
    import tomllib

SUPPORTED_SECTIONS = ("[JUNCTIONS]", "[RESERVOIRS]", "[PIPES]")
_COLUMNS = {"[JUNCTIONS]": 2, "[RESERVOIRS]": 2, "[PIPES]": 5}

_JUNC_ENTRY = " {id:20s} {demand:>20s}\n"
_JUNC_LABEL = "{:21s} {:>20s}\n"
_RES_ENTRY = " {id:20s} {head:>20s}\n"
_RES_LABEL = "{:21s} {:>20s}\n"
_PIPE_ENTRY = " {id:20s} {start:20s} {end:20s} {length:>20s} {diameter:>20s}\n"
_PIPE_LABEL = "{:21s} {:20s} {:20s} {:>20s} {:>20s}\n"

SCENARIO_KEYS = (
    "source",
    "rate_mg_s",
    "start_s",
    "duration_s",
    "timestep_s",
    "max_steps",
)


def _split_line(line: str) -> list[str]:
    return line.split(";", 1)[0].split()


def _to_float(raw: str, what: str, lnum: int) -> float:
    try:
        return float(raw)
    except ValueError as e:
        raise NetworkParseError(f"Cannot read {what} from {raw!r}.", line=lnum) from e


def parse_inp(text: str) -> PipeNetwork:
    """
    Parses INP text into a PipeNetwork. Junction order in the file defines the
    canonical node indexing.

    Raises: NetworkParseError (with the offending line number) for syntax
        errors, duplicate ids, unknown node references and unsupported
        sections; NetworkValidationError for topological problems (disconnected
        graph, no reservoir).
    """
    sections: dict[str, list[tuple[int, list[str]]]] = {
        s: [] for s in SUPPORTED_SECTIONS
    }
    seen_sections: set[str] = set()
    section: str | None = None
    for lnum, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith(";"):
            continue
        if line.startswith("["):
            sec = line.split(None, 1)[0].upper()
            if not sec.endswith("]"):
                raise NetworkParseError(f"Malformed section header {line!r}.", lnum)
            if sec == "[END]":
                break
            if sec not in SUPPORTED_SECTIONS:
                raise NetworkParseError(
                    f"Unsupported section {sec}. Only {', '.join(SUPPORTED_SECTIONS)} "
                    "are supported.",
                    lnum,
                )
            if sec in seen_sections:
                raise NetworkParseError(f"Section {sec} appears twice.", lnum)
            seen_sections.add(sec)
            section = sec
            continue
        if section is None:
            raise NetworkParseError("Data found outside of any section.", lnum)
        vals = _split_line(line)
        if not vals:
            continue
        if len(vals) != _COLUMNS[section]:
            raise NetworkParseError(
                f"{section} rows need {_COLUMNS[section]} columns, found {len(vals)}.",
                lnum,
            )
        sections[section].append((lnum, vals))

    missing = [s for s in SUPPORTED_SECTIONS if s not in seen_sections]
    if missing:
        raise NetworkParseError(f"Missing required section(s): {', '.join(missing)}.")

    node_lines: dict[str, int] = {}

    def _declare(node_id: str, lnum: int) -> None:
        if node_id in node_lines:
            raise NetworkParseError(
                f"Duplicate node id {node_id} (first declared on line "
                f"{node_lines[node_id]}).",
                lnum,
            )
        node_lines[node_id] = lnum

    junctions: list[Junction] = []
    for lnum, (node_id, demand) in sections["[JUNCTIONS]"]:
        _declare(node_id, lnum)
        value = _to_float(demand, "a demand", lnum)
        if value < 0:
            raise NetworkParseError(f"Junction {node_id} has a negative demand.", lnum)
        junctions.append(Junction(id=node_id, demand=value))

    reservoirs: list[Reservoir] = []
    for lnum, (node_id, head) in sections["[RESERVOIRS]"]:
        _declare(node_id, lnum)
        reservoirs.append(Reservoir(id=node_id, head=_to_float(head, "a head", lnum)))

    pipes: list[Pipe] = []
    pipe_lines: dict[str, int] = {}
    for lnum, (pipe_id, start, end, length, diameter) in sections["[PIPES]"]:
        if pipe_id in pipe_lines:
            raise NetworkParseError(
                f"Duplicate pipe id {pipe_id} (first declared on line "
                f"{pipe_lines[pipe_id]}).",
                lnum,
            )
        pipe_lines[pipe_id] = lnum
        for node_id in (start, end):
            if node_id not in node_lines:
                raise NetworkParseError(
                    f"Pipe {pipe_id} references undeclared node {node_id}.", lnum
                )
        if start == end:
            raise NetworkParseError(f"Pipe {pipe_id} is a self-loop.", lnum)
        length_m = _to_float(length, "a length", lnum)
        diameter_m = _to_float(diameter, "a diameter", lnum)
        if length_m <= 0 or diameter_m <= 0:
            raise NetworkParseError(
                f"Pipe {pipe_id} must have a positive length and diameter.", lnum
            )
        pipes.append(
            Pipe(
                id=pipe_id,
                start=start,
                end=end,
                length=length_m,
                diameter=diameter_m,
            )
        )

    try:
        return PipeNetwork(
            junctions=tuple(junctions),
            reservoirs=tuple(reservoirs),
            pipes=tuple(pipes),
        )
    except NetworkValidationError as e:
        raise NetworkValidationError(
            e.msg, title="Hydrosample couldn't load your network file."
        ) from e


def _fmt(x: float) -> str:
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def serialize_inp(net: PipeNetwork) -> str:
    """
    Writes a PipeNetwork as INP text. parse_inp(serialize_inp(net)) == net.
    """
    out: list[str] = []
    out.append("[JUNCTIONS]\n")
    out.append(_JUNC_LABEL.format(";ID", "Demand"))
    for j in net.junctions:
        out.append(_JUNC_ENTRY.format(id=j.id, demand=_fmt(j.demand)))
    out.append("\n[RESERVOIRS]\n")
    out.append(_RES_LABEL.format(";ID", "Head"))
    for r in net.reservoirs:
        out.append(_RES_ENTRY.format(id=r.id, head=_fmt(r.head)))
    out.append("\n[PIPES]\n")
    out.append(_PIPE_LABEL.format(";ID", "Node1", "Node2", "Length", "Diameter"))
    for p in net.pipes:
        out.append(
            _PIPE_ENTRY.format(
                id=p.id,
                start=p.start,
                end=p.end,
                length=_fmt(p.length),
                diameter=_fmt(p.diameter),
            )
        )
    out.append("\n[END]\n")
    return "".join(out)


def load_network(path: Path) -> PipeNetwork:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise NetworkParseError(
            f"Error opening network file at {path}. {e}",
            title="Hydrosample couldn't load your network file.",
        ) from e
    return parse_inp(text)


def parse_scenario(text: str) -> InjectionScenario:
    """
    Parses a flat key/value scenario file (TOML syntax):

        source = "J3"
        rate_mg_s = 10.0
        start_s = 0
        duration_s = 600
        timestep_s = 60
        max_steps = 500
    """
    try:
        raw: dict[str, Any] = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ScenarioError(
            f"Error decoding scenario file. Check for invalid TOML. {e}",
            title="Hydrosample couldn't load your scenario.",
        ) from e
    extra = sorted(set(raw) - set(SCENARIO_KEYS))
    if extra:
        raise ScenarioError(
            f"Found unexpected key in scenario: {extra[0]}.\n"
            f"Allowed values are {SCENARIO_KEYS}.",
            title="Hydrosample couldn't load your scenario.",
        )
    missing = [k for k in SCENARIO_KEYS if k not in raw]
    if missing:
        raise ScenarioError(
            f"Scenario is missing key(s): {', '.join(missing)}.",
            title="Hydrosample couldn't load your scenario.",
        )
    max_steps = raw["max_steps"]
    if (
        isinstance(max_steps, bool)
        or not isinstance(max_steps, (int, float))
        or not float(max_steps).is_integer()
    ):
        raise ScenarioError(
            f"max_steps must be a whole number of steps, got {max_steps!r}.",
            title="Hydrosample couldn't load your scenario.",
        )
    try:
        return InjectionScenario(
            source=str(raw["source"]),
            rate=float(raw["rate_mg_s"]),
            start=float(raw["start_s"]),
            duration=float(raw["duration_s"]),
            timestep=float(raw["timestep_s"]),
            max_steps=int(max_steps),
        )
    except (TypeError, ValueError) as e:
        raise ScenarioError(
            f"Scenario received a bad value: {e}",
            title="Hydrosample couldn't load your scenario.",
        ) from e


def load_scenario(path: Path) -> InjectionScenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioError(
            f"Error opening scenario file at {path}. {e}",
            title="Hydrosample couldn't load your scenario.",
        ) from e
    return parse_scenario(text)
