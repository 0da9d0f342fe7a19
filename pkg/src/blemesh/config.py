"""Scenario configuration: an INI file with one section per concern.

Durations are written in seconds and held internally as integer
microseconds. ``dumps(loads(text))`` is stable, and
``loads(dumps(cfg)) == cfg`` for every valid config.
"""

from __future__ import annotations

import configparser
import dataclasses
import enum
import io
import types
import typing
from dataclasses import dataclass, field, fields, replace
from typing import Any, Mapping

from .channel import ChannelParams
from .engine import seconds
from .mac import MacConfig
from .metrics import EnergyModel
from .network import (
    FLOODING,
    PROPOSED,
    DiscoveryConfig,
    FloodingConfig,
    NetConfig,
    RecoveryConfig,
    RoutingConfig,
)

SCENARIOS = ("case1", "case2", "case3", "custom")
PRELIMINARY = ("simulate", "preinstalled")

# integer-microsecond fields that appear in the file as seconds
TIME_FIELDS = frozenset(
    {
        "adv_interval", "head_adv_interval", "adv_random_delay_max", "scan_interval", "scan_window",
        "failure_declare_window", "t_ifs", "conn_setup", "timer", "rediscovery_timer", "wake_window",
        "broadcast_timer", "start", "window", "at", "duration", "power_window",
    }
)


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""


@dataclass(frozen=True)
class RunConfig:
    name: str = "custom"
    protocol: str = PROPOSED
    preliminary: str = "preinstalled"
    seed: int = 1
    runs: int = 1
    duration: int = seconds(60.0)
    power_window: int | None = None
    out: str = "results"
    ideal_reception: bool = False

    def __post_init__(self):
        if self.name not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.protocol not in (PROPOSED, FLOODING):
            raise ValueError(f"protocol must be {PROPOSED!r} or {FLOODING!r}")
        if self.preliminary not in PRELIMINARY:
            raise ValueError(f"preliminary must be one of {PRELIMINARY}")
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.duration <= 0 or (self.power_window is not None and self.power_window <= 0):
            raise ValueError("durations must be positive")


@dataclass(frozen=True)
class TrafficConfig:
    packets: int = 0
    ack: str = "none"  # none | all | probability in [0, 1]
    start: int = seconds(1.0)
    window: int = seconds(1.0)
    sources: str = "random"  # random | comma-separated node ids
    source_hop: int | None = None

    def __post_init__(self):
        if self.packets < 0:
            raise ValueError("packets must be non-negative")
        if self.window <= 0 or self.start < 0:
            raise ValueError("traffic window must be positive")
        self.ack_probability()
        self.source_ids()

    def ack_probability(self) -> float:
        if self.ack == "none":
            return 0.0
        if self.ack == "all":
            return 1.0
        try:
            p = float(self.ack)
        except ValueError:
            raise ValueError(f"ack must be none, all or a probability, got {self.ack!r}") from None
        if not 0.0 <= p <= 1.0:
            raise ValueError("ack probability must lie in [0, 1]")
        return p

    def source_ids(self) -> list[int] | None:
        if self.sources == "random":
            return None
        try:
            return [int(s) for s in self.sources.split(",") if s.strip()]
        except ValueError:
            raise ValueError(f"sources must be 'random' or node ids, got {self.sources!r}") from None


@dataclass(frozen=True)
class FailureConfig:
    node: int | None = None
    x: int | None = None  # hops from the traffic source along its first path
    at: int = seconds(1.0)

    def __post_init__(self):
        if self.node is not None and self.x is not None:
            raise ValueError("give either a failed node id or a hop placement, not both")
        if self.x is not None and self.x < 1:
            raise ValueError("failure placement must be at least 1 hop from the source")
        if self.at < 0:
            raise ValueError("failure time must be non-negative")


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: RunConfig = field(default_factory=RunConfig)
    topology: Mapping[str, str] = field(default_factory=lambda: {"preset": "paper-3floor"})
    channel: ChannelParams = field(default_factory=ChannelParams)
    mac: MacConfig = field(default_factory=MacConfig)
    discovery: DiscoveryConfig = field(default_factory=DiscoveryConfig)
    routing: RoutingConfig = field(default_factory=RoutingConfig)
    recovery: RecoveryConfig = field(default_factory=RecoveryConfig)
    flooding: FloodingConfig = field(default_factory=FloodingConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    failure: FailureConfig = field(default_factory=FailureConfig)
    energy: EnergyModel = field(default_factory=EnergyModel)

    def net_config(self) -> NetConfig:
        return NetConfig(
            protocol=self.scenario.protocol,
            channel=self.channel,
            mac=self.mac,
            discovery=self.discovery,
            routing=self.routing,
            recovery=self.recovery,
            flooding=self.flooding,
            energy=self.energy,
            ideal_reception=self.scenario.ideal_reception,
        )

    def with_overrides(self, **run_changes) -> "ScenarioConfig":
        changes = {k: v for k, v in run_changes.items() if v is not None}
        try:
            return replace(self, scenario=replace(self.scenario, **changes))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def defaults(name: str) -> ScenarioConfig:
    """Built-in settings for the named experiment."""
    if name == "case1":
        run = RunConfig(name="case1", preliminary="simulate", duration=seconds(300.0))
        return ScenarioConfig(scenario=run)
    if name == "case2":
        run = RunConfig(name="case2", duration=seconds(60.0), power_window=seconds(60.0))
        return ScenarioConfig(scenario=run, traffic=TrafficConfig(packets=3, ack="all"))
    if name == "case3":
        run = RunConfig(name="case3", duration=seconds(60.0), power_window=seconds(60.0))
        return ScenarioConfig(
            scenario=run,
            topology={"preset": "corridor"},
            traffic=TrafficConfig(packets=1, ack="none", source_hop=5),
            failure=FailureConfig(x=4),
        )
    if name == "custom":
        return ScenarioConfig()
    raise ConfigError(f"unknown scenario {name!r}")


_SECTIONS = {
    "scenario": RunConfig,
    "channel": ChannelParams,
    "mac": MacConfig,
    "discovery": DiscoveryConfig,
    "routing": RoutingConfig,
    "recovery": RecoveryConfig,
    "flooding": FloodingConfig,
    "traffic": TrafficConfig,
    "failure": FailureConfig,
    "energy": EnergyModel,
}


def _hints(cls) -> dict[str, Any]:
    return typing.get_type_hints(cls)


def _base_type(tp) -> tuple[type, bool]:
    """Strip ``X | None``; returns (X, optional)."""
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        return args[0], True
    return tp, False


def _format(name: str, tp, value) -> str:
    if value is None:
        return "none"
    if isinstance(value, enum.Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if name in TIME_FIELDS:
        return repr(value / 1_000_000)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(section: str, name: str, tp, raw: str):
    base, optional = _base_type(tp)
    text = raw.strip()
    if optional and text.lower() in ("none", ""):
        return None
    try:
        if base is bool:
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if isinstance(base, type) and issubclass(base, enum.Enum):
            return base(text)
        if base is int:
            if name in TIME_FIELDS:
                return seconds(float(text))
            return int(text)
        if base is float:
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"[{section}] {name}: {exc}") from None


def _build(section: str, cls, values: Mapping[str, str], base):
    hints = _hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"[{section}] unknown key(s): {', '.join(sorted(unknown))}")
    kwargs = {k: _parse(section, k, hints[k], v) for k, v in values.items()}
    try:
        return replace(base, **kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def loads(text: str) -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str  # keep key case (node ids)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    unknown = set(parser.sections()) - set(_SECTIONS) - {"topology"}
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    name = parser.get("scenario", "name", fallback="custom").strip()
    if name not in SCENARIOS:
        raise ConfigError(f"[scenario] name: must be one of {', '.join(SCENARIOS)}")
    cfg = defaults(name)
    changes: dict[str, Any] = {}
    for section, cls in _SECTIONS.items():
        if parser.has_section(section):
            changes[section] = _build(section, cls, dict(parser.items(section)), getattr(cfg, section))
    if parser.has_section("topology"):
        changes["topology"] = dict(parser.items("topology"))
    cfg = replace(cfg, **changes)
    validate(cfg)
    return cfg


def load(path: str) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror or exc}") from None
    return loads(text)


def dumps(cfg: ScenarioConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    for section, cls in _SECTIONS.items():
        obj = getattr(cfg, section)
        hints = _hints(cls)
        parser[section] = {f.name: _format(f.name, hints[f.name], getattr(obj, f.name)) for f in fields(cls)}
    parser["topology"] = dict(cfg.topology)
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def validate(cfg: ScenarioConfig) -> None:
    """Cross-section checks: topology parses and referenced node ids exist."""
    from .topology import load_topology

    try:
        nodes = load_topology(cfg.topology)
    except ValueError as exc:
        raise ConfigError(f"[topology] {exc}") from None
    ids = {n.id for n in nodes}
    if cfg.failure.node is not None and cfg.failure.node not in ids:
        raise ConfigError(f"[failure] node {cfg.failure.node} does not exist")
    for sid in cfg.traffic.source_ids() or ():
        if sid not in ids:
            raise ConfigError(f"[traffic] source {sid} does not exist")
    heads = {n.id for n in nodes if n.is_head}
    if cfg.failure.node in heads:
        raise ConfigError("[failure] the head cannot be the failed node")
    if cfg.failure.x is not None and cfg.traffic.packets < 1:
        raise ConfigError("[failure] hop placement needs at least one traffic packet")


def as_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    return dataclasses.asdict(cfg)
