"""YAML scenario configuration: schema, defaults, validation and object building.

Every field has a default except that the ``radar``, ``cbsd`` and ``region``
sections must be present (they may be empty mappings). Unknown keys, wrong
types and out-of-range values raise :class:`ConfigError` carrying the dotted
field name and the 1-based source line where one is known.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .antenna import RadarAntenna
from .interference import ChannelMode
from .propagation import FadingModel
from .radar import FdrProfile, RadarParams
from .scenario import (
    Boresight,
    CbsdParams,
    CoverageBudget,
    DeploymentRule,
    Region,
    Scenario,
    default_coverage_budget,
)

REQUIRED_SECTIONS = ("radar", "cbsd", "region")
COMMANDS = ("sinr-sweep", "cdf-single", "allocate", "density-plan", "verify")

FLOAT, INT, BOOL, STR = "float", "int", "bool", "str"
OPT_FLOAT = "float?"
FLOAT_LIST = "list[float]"
OPT_FLOAT_LIST = "list[float]?"
FDR_TABLE = "fdr-table"

# section -> field -> (kind, default); nested dicts are sub-sections
SCHEMA: dict[str, Any] = {
    "radar": {
        "frequency_mhz": (FLOAT, 3600.0),
        "wavelength_m": (FLOAT, 0.083),
        "tx_power_w": (FLOAT, 1.32e6),
        "height_m": (FLOAT, 8.0),
        "bandwidth_hz": (FLOAT, 10e6),
        "noise_figure_db": (FLOAT, 3.0),
        "rcs_m2": (FLOAT, 100.0),
        "inr_threshold_db": (FLOAT, -6.0),
        "temperature_k": (FLOAT, 290.0),
        "i_th_override_dbm": (OPT_FLOAT, None),
        "antenna": {
            "peak_gain_dbi": (FLOAT, 33.5),
            "beamwidth_3db_deg": (FLOAT, 0.81),
            "sidelobe_level_dbi": (FLOAT, 7.3),
        },
    },
    "cbsd": {
        "max_power_dbm": (FLOAT, 30.0),
        "min_power_dbm": (FLOAT, 20.0),
        "height_m": (FLOAT, 30.0),
        "bandwidth_hz": (FLOAT, 10e6),
    },
    "region": {
        "protection_distance_km": (FLOAT, 30.0),
        "max_distance_km": (FLOAT, 100.0),
        "angular_extent_deg": (FLOAT, 120.0),
        "axis_azimuth_deg": (FLOAT, 0.0),
        "land_only": (BOOL, True),
    },
    "deployment": {
        "cbsd_limit_dbm": (FLOAT, -62.0),
        "site_spacing_m": (OPT_FLOAT, 700.0),
        "jitter_fraction": (FLOAT, 0.25),
        "seed": (INT, 0),
    },
    "boresight": {
        "mode": (STR, "centroid"),
        "azimuth_deg": (FLOAT, 0.0),
    },
    "propagation": {
        "shadowing_sigma_db": (FLOAT, 8.0),
        "sea_path_fraction": (FLOAT, 0.0),
        "sea_adjustment_db_per_km": (FLOAT, 0.0),
    },
    "channel": {
        "mode": (STR, "co_channel"),
        "fdr_offset_mhz": (FLOAT, 10.0),
        "fdr_table": (FDR_TABLE, None),
    },
    "simulation": {
        "trials": (INT, 10_000),
        "seed": (INT, 0),
        "target_ranges_km": (FLOAT_LIST, [50.0]),
        "r_min_km": (OPT_FLOAT_LIST, None),  # null: region.protection_distance_km
        "workers": (INT, 1),
        "grid_start_db": (FLOAT, -20.0),
        "grid_stop_db": (FLOAT, 60.0),
        "grid_step_db": (FLOAT, 0.1),
    },
    "power_control": {
        "method": (INT, 1),
        "i_th_dbm": (FLOAT, -117.0),
        "power_step_db": (FLOAT, 1.0),
        "sectors": (INT, 20),
        "user_height_m": (FLOAT, 1.5),
        "edge_signal_dbm": (OPT_FLOAT, None),
        "coverage_samples": (INT, 10_000),
    },
}


class ConfigError(ValueError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = f" ({field}" + (f", line {line}" if line else "") + ")" if field else ""
        super().__init__(message + where)
        self.message = message
        self.field = field
        self.line = line

    def to_record(self) -> dict:
        return {"error": "config", "field": self.field, "line": self.line, "message": self.message}


# -- parsing ---------------------------------------------------------------------


def _line_map(node, path=(), out=None) -> dict[tuple, int]:
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            p = path + (str(key.value),)
            out[p] = key.start_mark.line + 1
            _line_map(value, p, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, value in enumerate(node.value):
            out[path + (i,)] = value.start_mark.line + 1
            _line_map(value, path + (i,), out)
    return out


def parse_text(text: str) -> tuple[dict, dict[tuple, int]]:
    try:
        loader = yaml.SafeLoader(text)
        try:
            node = loader.get_single_node()
            data = loader.construct_document(node) if node is not None else None
        finally:
            loader.dispose()
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed YAML: {getattr(exc, 'problem', exc)}", "<document>", mark.line + 1 if mark else None)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", "<document>", 1)
    return data, _line_map(node) if node is not None else {}


def _coerce(kind: str, value, name: str, line):
    def bad(expected):
        return ConfigError(f"expected {expected}, got {value!r}", name, line)

    if kind in (OPT_FLOAT, OPT_FLOAT_LIST) and value is None:
        return None
    if kind in (FLOAT, OPT_FLOAT):
        if isinstance(value, bool):
            raise bad("a number")
        if isinstance(value, str):
            # YAML 1.1 reads 1e6 as a string
            try:
                value = float(value)
            except ValueError:
                raise bad("a number") from None
        if not isinstance(value, (int, float)) or not math.isfinite(value):
            raise bad("a finite number")
        return float(value)
    if kind == INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad("an integer")
        return int(value)
    if kind == BOOL:
        if not isinstance(value, bool):
            raise bad("true or false")
        return value
    if kind == STR:
        if not isinstance(value, str):
            raise bad("a string")
        return value
    if kind in (FLOAT_LIST, OPT_FLOAT_LIST):
        items = value if isinstance(value, list) else [value]
        if not items:
            raise bad("a non-empty list of numbers")
        return [_coerce(FLOAT, v, name, line) for v in items]
    if kind == FDR_TABLE:
        if value is None:
            return None
        if not isinstance(value, list) or not value:
            raise bad("a list of [offset_mhz, rejection_db] pairs")
        rows = []
        for row in value:
            if not isinstance(row, list) or len(row) != 2:
                raise bad("a list of [offset_mhz, rejection_db] pairs")
            rows.append([_coerce(FLOAT, v, name, line) for v in row])
        return rows
    raise AssertionError(kind)


def _resolve(schema: dict, data, lines: dict, path: tuple) -> dict:
    dotted = ".".join(path)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("expected a mapping", dotted, lines.get(path))
    for key in data:
        if key not in schema:
            raise ConfigError(f"unknown field {key!r}", ".".join(path + (str(key),)), lines.get(path + (str(key),)))
    out = {}
    for key, spec in schema.items():
        p = path + (key,)
        if isinstance(spec, dict):
            out[key] = _resolve(spec, data.get(key), lines, p)
            continue
        kind, default = spec
        if key in data:
            out[key] = _coerce(kind, data[key], ".".join(p), lines.get(p))
        else:
            out[key] = copy.deepcopy(default)
    return out


def resolve(data: dict, lines: dict | None = None) -> dict:
    """Fill defaults and validate types; returns the full resolved mapping."""
    lines = lines or {}
    for section in REQUIRED_SECTIONS:
        if section not in data:
            raise ConfigError(f"missing required section '{section}'", section, None)
    command = data.get("command")
    if command is not None and command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}", "command", lines.get(("command",)))
    body = {k: v for k, v in data.items() if k != "command"}
    resolved = _resolve(SCHEMA, body, lines, ())
    resolved["command"] = command
    return resolved


def load_resolved(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", "<file>", None) from None
    data, lines = parse_text(text)
    return resolve(data, lines)


# -- building --------------------------------------------------------------------


@dataclass(frozen=True)
class RunSettings:
    """Everything a command needs, built from one resolved mapping."""

    scenario: Scenario
    command: str | None
    trials: int
    seed: int
    deployment_seed: int
    target_ranges_m: tuple[float, ...]
    r_min_km: tuple[float, ...]
    workers: int
    grid: tuple[float, float, float]
    mode: ChannelMode
    fdr: FdrProfile | None
    i_th_override_dbm: float | None
    method: int
    power_i_th_dbm: float
    power_step_db: float
    sectors: int
    user_height_m: float
    edge_signal_dbm: float | None
    coverage_samples: int

    def coverage_budget(self, scenario: Scenario) -> CoverageBudget:
        if self.edge_signal_dbm is None:
            return default_coverage_budget(scenario, self.user_height_m)
        return CoverageBudget(
            edge_signal_dbm=self.edge_signal_dbm,
            user_height_m=self.user_height_m,
            frequency_mhz=scenario.radar.frequency_mhz,
        )


def _check(condition: bool, message: str, field: str):
    if not condition:
        raise ConfigError(message, field, None)


def build(resolved: dict) -> RunSettings:
    """Turn a resolved mapping into domain objects; model errors become ConfigErrors."""
    r, c, g = resolved["radar"], resolved["cbsd"], resolved["region"]
    d, b, p = resolved["deployment"], resolved["boresight"], resolved["propagation"]
    ch, sim, pc = resolved["channel"], resolved["simulation"], resolved["power_control"]

    _check(sim["trials"] >= 1, "trials must be >= 1", "simulation.trials")
    _check(sim["seed"] >= 0, "seed must be >= 0", "simulation.seed")
    _check(sim["workers"] >= 1, "workers must be >= 1", "simulation.workers")
    _check(sim["grid_step_db"] > 0 and sim["grid_stop_db"] > sim["grid_start_db"], "grid must be increasing", "simulation.grid_step_db")
    _check(all(v > 0 for v in sim["target_ranges_km"]), "target ranges must be positive", "simulation.target_ranges_km")
    r_min = sim["r_min_km"] if sim["r_min_km"] is not None else [g["protection_distance_km"]]
    _check(all(v >= 0 for v in r_min), "protection distances must be >= 0", "simulation.r_min_km")
    _check(pc["method"] in (1, 2), "method must be 1 or 2", "power_control.method")
    _check(pc["sectors"] >= 1, "sectors must be >= 1", "power_control.sectors")
    _check(pc["power_step_db"] > 0, "power step must be positive", "power_control.power_step_db")
    _check(pc["coverage_samples"] >= 1, "coverage_samples must be >= 1", "power_control.coverage_samples")

    def make(section, fn):
        try:
            return fn()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc), section, None) from None

    antenna = make("radar.antenna", lambda: RadarAntenna(**r["antenna"]))
    radar_fields = {k: v for k, v in r.items() if k not in ("antenna", "i_th_override_dbm")}
    radar = make("radar", lambda: RadarParams(antenna=antenna, **radar_fields))
    cbsd = make("cbsd", lambda: CbsdParams(**c))
    region = make("region", lambda: Region(**g))
    rule = make(
        "deployment",
        lambda: DeploymentRule(d["cbsd_limit_dbm"], d["site_spacing_m"], d["jitter_fraction"]),
    )
    boresight = make("boresight", lambda: Boresight(**b))
    shadowing = make("propagation", lambda: FadingModel(p["shadowing_sigma_db"]))
    _check(0.0 <= p["sea_path_fraction"] <= 1.0, "must lie in [0, 1]", "propagation.sea_path_fraction")
    mode = make("channel.mode", lambda: ChannelMode(ch["mode"]))
    fdr = None
    if ch["fdr_table"] is not None:
        rows = tuple((o, x) for o, x in ch["fdr_table"])
        fdr = make("channel.fdr_table", lambda: FdrProfile(rows, ch["fdr_offset_mhz"]))
    if mode is ChannelMode.ADJACENT and fdr is None:
        raise ConfigError("adjacent-channel mode needs an FDR table", "channel.fdr_table", None)

    scenario = Scenario(
        radar=radar,
        cbsd_params=cbsd,
        region=region,
        rule=rule,
        boresight=boresight,
        shadowing=shadowing,
        sea_path_fraction=p["sea_path_fraction"],
        sea_adjustment_db_per_km=p["sea_adjustment_db_per_km"],
    )
    return RunSettings(
        scenario=scenario,
        command=resolved.get("command"),
        trials=sim["trials"],
        seed=sim["seed"],
        deployment_seed=d["seed"],
        target_ranges_m=tuple(v * 1e3 for v in sim["target_ranges_km"]),
        r_min_km=tuple(r_min),
        workers=sim["workers"],
        grid=(sim["grid_start_db"], sim["grid_stop_db"], sim["grid_step_db"]),
        mode=mode,
        fdr=fdr,
        i_th_override_dbm=r["i_th_override_dbm"],
        method=pc["method"],
        power_i_th_dbm=pc["i_th_dbm"],
        power_step_db=pc["power_step_db"],
        sectors=pc["sectors"],
        user_height_m=pc["user_height_m"],
        edge_signal_dbm=pc["edge_signal_dbm"],
        coverage_samples=pc["coverage_samples"],
    )


def default_resolved() -> dict:
    """Resolved mapping with every default (the shipped example config)."""
    return resolve({s: {} for s in REQUIRED_SECTIONS})


def dump_yaml(resolved: dict) -> str:
    body = {k: v for k, v in resolved.items() if k != "command" or v is not None}
    return yaml.safe_dump(body, sort_keys=False, default_flow_style=None)


__all__ = [
    "COMMANDS",
    "ConfigError",
    "RunSettings",
    "SCHEMA",
    "build",
    "default_resolved",
    "dump_yaml",
    "load_resolved",
    "parse_text",
    "resolve",
]
