"""YAML scenario files: validation, canonical form and sweep expansion.

A scenario names the fiber path, the hardware (a shipped baseline with
optional overrides, or a full inline parameter set), the protocol, the
performance target and optionally an optimizer or sweep stanza. Loading
fails with one of three distinct errors: the document does not match the
schema, it refers to something that does not exist, or a value is out of
range.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import jsonschema
import yaml

from .engine import NetworkTopology, Node, ProtocolConfig, Segment
from .hardware import BASELINES, PARAMETER_KINDS, HardwareParams, load_baseline
from .optimizer import GAConfig, improve_parameter
from .targetmetric import PerformanceTarget

STANDARD_ATTENUATION = 0.2  # dB/km


class ConfigError(ValueError):
    def __init__(self, message: str, path: str = "", line: Optional[int] = None):
        self.path = path
        self.line = line
        where = f" at {path or '<root>'}" + (f" (line {line})" if line else "")
        super().__init__(message + where)

    def to_json(self) -> dict:
        return {"error": type(self).__name__, "message": str(self), "path": self.path, "line": self.line}


class ConfigSchemaError(ConfigError):
    pass


class ConfigReferenceError(ConfigError):
    pass


class ConfigRangeError(ConfigError):
    pass


def _schema() -> dict:
    text = resources.files("repeaterforge.data").joinpath("config.schema.json").read_text()
    return json.loads(text)


def _line_index(text: str) -> dict[tuple, int]:
    """Map key paths of a YAML document to 1-based line numbers."""
    out: dict[tuple, int] = {}

    def walk(node, path):
        out[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                walk(v, path + (k.value,))
                out[path + (k.value,)] = k.start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, path + (i,))

    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out
    if root is not None:
        walk(root, ())
    return out


def _fmt(path) -> str:
    return ".".join(str(p) for p in path)


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    topology: NetworkTopology
    hardware: HardwareParams
    protocol: ProtocolConfig
    target: Optional[PerformanceTarget]
    n_runs: int
    seed: int
    ga: Optional[GAConfig]
    improvable: Optional[tuple[str, ...]]
    sweep: Optional[SweepSpec]
    canonical: dict

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.canonical, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    def dump(self) -> str:
        return yaml.safe_dump(self.canonical, sort_keys=True)


def _num(v):
    """YAML-safe number: infinities become null where the schema allows it."""
    return None if isinstance(v, float) and math.isinf(v) else v


def _canonical(doc: dict) -> dict:
    """Fully resolved document: baselines expanded, defaults filled."""
    doc = copy.deepcopy(doc)
    hw = doc["hardware"]
    if "baseline" in hw:
        name = hw["baseline"]
        if name not in BASELINES:
            raise ConfigReferenceError(f"unknown baseline {name!r}", "hardware.baseline")
        base = load_baseline(name)
        values = dict(base.values)
        platform = base.platform.value
    else:
        values = dict(hw["values"])
        platform = hw["platform"]
    for k, v in hw.get("overrides", {}).items():
        if k not in values:
            raise ConfigReferenceError(f"override of unknown parameter {k!r}", f"hardware.overrides.{k}")
        values[k] = v
    k = hw.get("improvement_factor", 1.0)
    if k != 1.0:
        if k < 1:
            raise ConfigRangeError("improvement factor must be at least 1", "hardware.improvement_factor")
        values = {
            n: improve_parameter(v, PARAMETER_KINDS[n], k) if n in PARAMETER_KINDS else v for n, v in values.items()
        }
    doc["hardware"] = {"platform": platform, "values": {n: float(v) for n, v in sorted(values.items())}}
    proto = {f.name: f.default for f in fields(ProtocolConfig)}
    proto["detector_mode"] = proto["detector_mode"].value
    proto.update(doc.get("protocol", {}))
    for key in ("cutoff_time", "time_horizon"):
        proto[key] = _num(math.inf if proto[key] is None else proto[key])
    proto.pop("seed", None)
    doc["protocol"] = proto
    doc.setdefault("name", "scenario")
    doc.setdefault("seed", 0)
    doc.setdefault("n_runs", proto["n_pairs"])
    doc.setdefault("standard_scenario", False)
    doc["topology"].setdefault("refractive_index", 1.44)
    for i, seg in enumerate(doc["topology"]["segments"]):
        if "attenuation_db_per_km" not in seg:
            if not doc["standard_scenario"]:
                raise ConfigSchemaError(
                    "attenuation_db_per_km is required unless standard_scenario is true",
                    f"topology.segments.{i}",
                )
            seg["attenuation_db_per_km"] = STANDARD_ATTENUATION
    if "target" in doc:
        doc["target"].setdefault("server_T", 100.0)
    return doc


def _build(doc: dict) -> ScenarioConfig:
    canon = _canonical(doc)
    topo = canon["topology"]
    names = {n["name"] for n in topo["nodes"]}
    for i, seg in enumerate(topo["segments"]):
        for end in ("from", "to"):
            if seg[end] not in names:
                raise ConfigReferenceError(f"segment refers to unknown node {seg[end]!r}", f"topology.segments.{i}.{end}")
    section = "topology"
    try:
        topology = NetworkTopology(
            nodes=tuple(Node(n["name"], n["role"]) for n in topo["nodes"]),
            segments=tuple(
                Segment(s["from"], s["to"], s["length_km"], s["attenuation_db_per_km"]) for s in topo["segments"]
            ),
            refractive_index=topo["refractive_index"],
        )
        section = "hardware"
        hardware = HardwareParams(canon["hardware"]["platform"], canon["hardware"]["values"])
        section = "protocol"
        proto = dict(canon["protocol"])
        for key in ("cutoff_time", "time_horizon"):
            proto[key] = math.inf if proto[key] is None else proto[key]
        protocol = ProtocolConfig(seed=canon["seed"], **proto)
        section = "target"
        target = PerformanceTarget(**canon["target"]) if "target" in canon else None
        section = "optimizer"
        opt = dict(canon.get("optimizer", {}))
        improvable = opt.pop("improvable", None)
        if improvable is not None:
            for name in improvable:
                if name not in hardware.values or name not in PARAMETER_KINDS:
                    raise ConfigReferenceError(f"{name!r} is not an improvable parameter", "optimizer.improvable")
            improvable = tuple(improvable)
        ga = GAConfig(n_runs=canon["n_runs"], seed=canon["seed"], **opt) if "optimizer" in canon else None
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigRangeError(str(exc), section) from exc
    sweep = None
    if "sweep" in canon:
        sweep = SweepSpec(canon["sweep"]["parameter"], tuple(canon["sweep"]["values"]))
        _check_sweep_target(canon, sweep.parameter)
    return ScenarioConfig(
        name=canon["name"],
        topology=topology,
        hardware=hardware,
        protocol=protocol,
        target=target,
        n_runs=canon["n_runs"],
        seed=canon["seed"],
        ga=ga,
        improvable=improvable,
        sweep=sweep,
        canonical=canon,
    )


def _check_sweep_target(canon: dict, parameter: str) -> None:
    section, key = parameter.split(".", 1)
    if section == "hardware":
        if key != "improvement_factor" and key not in canon["hardware"]["values"]:
            raise ConfigReferenceError(f"sweep over unknown hardware parameter {key!r}", "sweep.parameter")
    elif section not in canon or key not in canon[section]:
        raise ConfigReferenceError(f"sweep over unknown field {parameter!r}", "sweep.parameter")


def parse_config(doc: Any, text: str = "") -> ScenarioConfig:
    lines = _line_index(text) if text else {}
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = tuple(err.absolute_path)
        if err.validator == "additionalProperties":
            extra = [k for k in err.instance if k not in err.schema.get("properties", {})]
            if extra:
                path = path + (extra[0],)
                msg = f"unknown field {extra[0]!r}"
            else:
                msg = err.message
        else:
            msg = err.message
        raise ConfigSchemaError(msg, _fmt(path), lines.get(path))
    try:
        return _build(doc)
    except ConfigError as exc:
        if exc.line is None and exc.path:
            parts = tuple(int(p) if p.isdigit() else p for p in exc.path.split("."))
            exc.line = lines.get(parts)
        raise


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigReferenceError(f"config file {str(path)!r} not found")
    text = path.read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigSchemaError(f"invalid YAML: {exc}", line=mark.line + 1 if mark else None) from exc
    return parse_config(doc, text)


def _set(doc: dict, parameter: str, value) -> None:
    section, key = parameter.split(".", 1)
    if section == "hardware":
        if key == "improvement_factor":
            doc["hardware"]["improvement_factor"] = value
        else:
            doc["hardware"]["values"][key] = value
    else:
        doc[section][key] = value


def expand_sweep(cfg: ScenarioConfig) -> list[ScenarioConfig]:
    """One fully resolved config per sweep value; the sweep stanza is dropped."""
    if cfg.sweep is None:
        return [cfg]
    out = []
    for value in cfg.sweep.values:
        doc = copy.deepcopy(cfg.canonical)
        doc.pop("sweep")
        _set(doc, cfg.sweep.parameter, value)
        out.append(parse_config(doc))
    return out
