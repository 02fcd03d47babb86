"""Scenario files: loading, validation and the bundled set.

A scenario is one canonical-JSON object::

    {"name": "...", "duration": 40, "seed": 0,
     "machines": [{"id": "d1", "boot_score": 100, "position": [0, 0, 0]}, ...],
     "timeline": [{"at": 8, "action": "ramp_resources", "machine": "d1",
                   "field": "battery", "from": 100, "to": 75, "over": 10}, ...]}

Optional sections: ``timers``, ``scoring``, ``stack_delays``, ``link``,
``controller``, ``subnet``, ``phases`` and ``random_leader``.

Coordinates are x north, y east, z up; velocities are (vn, ve, vd) with vd
positive downward.
"""
from __future__ import annotations

import ipaddress
import json
import random
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

from ..cellsim import LinkModel, StackDelays
from ..controller import ControllerConfig
from ..domain import (
    DEFAULT_SUBNET,
    ConfigError,
    MachineId,
    Position,
    ResourceProfile,
    ScoringParams,
    TimerConfig,
)
from ..messages import canonical_json

ACTIONS = ("set_velocity", "set_resources", "ramp_resources", "inject_fault", "command")
FAULTS = ("kill", "ss_blackout", "drop_all_from", "restore")
MACHINE_COMMANDS = ("exit", "enter")
RESOURCE_FIELDS = ("memory", "battery", "processor")


@dataclass(frozen=True)
class MachineSpec:
    machine: MachineId
    boot_score: float
    position: Position = Position()
    resources: ResourceProfile = ResourceProfile()
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    boot: bool = True

    @property
    def id(self) -> str:
        return self.machine.id


@dataclass(frozen=True)
class TimelineAction:
    at: float
    action: str
    machine: Optional[str] = None
    args: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Phase:
    name: str
    start: float
    end: float


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    machines: tuple[MachineSpec, ...]
    duration: float
    seed: int = 0
    timeline: tuple[TimelineAction, ...] = ()
    timers: TimerConfig = field(default_factory=TimerConfig)
    scoring: ScoringParams = field(default_factory=ScoringParams)
    stack_delays: StackDelays = field(default_factory=StackDelays)
    link: LinkModel = field(default_factory=LinkModel)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    subnet: ipaddress.IPv4Network = DEFAULT_SUBNET
    phases: tuple[Phase, ...] = ()
    random_leader: bool = False

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigError("duration", "must be > 0")
        if not self.machines:
            raise ConfigError("machines", "at least one machine is required")
        ids = [m.id for m in self.machines]
        if len(set(ids)) != len(ids):
            raise ConfigError("machines", "machine ids must be unique")
        leaders = [m for m in self.machines if m.boot_score == 100]
        if len(leaders) != 1:
            raise ConfigError("machines", "exactly one machine must have boot_score 100")
        if not leaders[0].boot:
            raise ConfigError("machines", "the score-100 machine must boot at t=0")
        ats = [a.at for a in self.timeline]
        if ats != sorted(ats):
            raise ConfigError("timeline", "must be sorted by time")
        if any(a < 0 for a in ats):
            raise ConfigError("timeline", "times must be >= 0")
        known = set(ids)
        for a in self.timeline:
            if a.machine is not None and a.machine not in known:
                raise ConfigError("timeline", f"unknown machine {a.machine!r}")

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)

    def resolved(self) -> "ScenarioConfig":
        """Apply ``random_leader``: the seeded draw picks the score-100 machine."""
        if not self.random_leader:
            return self
        pick = random.Random(self.seed).randrange(len(self.machines))
        machines = tuple(
            replace(m, boot_score=100.0 if i == pick else (0.0 if m.boot_score == 100 else m.boot_score),
                    boot=True if i == pick else m.boot)
            for i, m in enumerate(self.machines)
        )
        return replace(self, machines=machines, random_leader=False)

    def machine_controller_config(self) -> ControllerConfig:
        return replace(self.controller, timers=self.timers, scoring=self.scoring, subnet=self.subnet)


# ---------------------------------------------------------------- parsing

def _default_imei(index: int) -> str:
    return f"35{index:013d}"


def _triple(value: Any, name: str) -> tuple[float, float, float]:
    if isinstance(value, dict):
        value = [value.get(k, 0.0) for k in ("x", "y", "z")]
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError(name, "expected three numbers")
    try:
        return tuple(float(v) for v in value)  # type: ignore[return-value]
    except (TypeError, ValueError):
        raise ConfigError(name, "expected three numbers") from None


def _build(cls, raw: Optional[dict], name: str, **extra):
    raw = dict(raw or {})
    allowed = {f.name for f in fields(cls)}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(name, f"unknown keys {sorted(unknown)}")
    try:
        return cls(**raw, **extra)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(name, str(exc)) from None


def _resources(raw: Any, name: str) -> ResourceProfile:
    if raw is None:
        return ResourceProfile()
    if isinstance(raw, (list, tuple)):
        if len(raw) != 3:
            raise ConfigError(name, "expected [memory, battery, processor]")
        raw = dict(zip(RESOURCE_FIELDS, raw))
    if not isinstance(raw, dict) or set(raw) - set(RESOURCE_FIELDS):
        raise ConfigError(name, "expected memory/battery/processor percentages")
    try:
        return ResourceProfile(
            float(raw.get("memory", 100)), float(raw.get("battery", 100)),
            float(raw.get("processor", 100)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, str(exc)) from None


def _machine(raw: dict, index: int) -> MachineSpec:
    name = f"machines[{index}]"
    if not isinstance(raw, dict):
        raise ConfigError(name, "expected an object")
    try:
        mid = MachineId(raw.get("id"), raw.get("imei", _default_imei(index)))
    except ValueError as exc:
        raise ConfigError(f"{name}.id", str(exc)) from None
    score = raw.get("boot_score", 0)
    if not isinstance(score, (int, float)) or not 0 <= score <= 100:
        raise ConfigError(f"{name}.boot_score", "must be a number in [0, 100]")
    try:
        pos = Position(*_triple(raw.get("position", [0, 0, 0]), f"{name}.position"))
    except ValueError as exc:
        raise ConfigError(f"{name}.position", str(exc)) from None
    return MachineSpec(
        machine=mid,
        boot_score=float(score),
        position=pos,
        resources=_resources(raw.get("resources"), f"{name}.resources"),
        velocity=_triple(raw.get("velocity", [0, 0, 0]), f"{name}.velocity"),
        boot=bool(raw.get("boot", True)),
    )


def _action(raw: dict, index: int) -> TimelineAction:
    name = f"timeline[{index}]"
    if not isinstance(raw, dict):
        raise ConfigError(name, "expected an object")
    raw = dict(raw)
    at = raw.pop("at", None)
    action = raw.pop("action", None)
    machine = raw.pop("machine", None)
    if not isinstance(at, (int, float)):
        raise ConfigError(f"{name}.at", "must be a number")
    if action not in ACTIONS:
        raise ConfigError(f"{name}.action", f"must be one of {ACTIONS}")
    needs_machine = action != "inject_fault"
    if needs_machine and machine is None:
        raise ConfigError(f"{name}.machine", "required")
    if action == "set_velocity":
        _require(raw, name, ("vn", "ve", "vd"), numeric=True)
    elif action == "set_resources":
        _require(raw, name, RESOURCE_FIELDS, numeric=True)
        _resources(raw, name)
    elif action == "ramp_resources":
        _require(raw, name, ("field", "from", "to", "over"))
        if raw["field"] not in RESOURCE_FIELDS:
            raise ConfigError(f"{name}.field", f"must be one of {RESOURCE_FIELDS}")
        for k in ("from", "to"):
            if not isinstance(raw[k], (int, float)) or not 0 <= raw[k] <= 100:
                raise ConfigError(f"{name}.{k}", "must be a percentage")
        if not isinstance(raw["over"], (int, float)) or raw["over"] <= 0:
            raise ConfigError(f"{name}.over", "must be > 0")
    elif action == "inject_fault":
        _require(raw, name, ("fault",))
        if raw["fault"] not in FAULTS:
            raise ConfigError(f"{name}.fault", f"must be one of {FAULTS}")
        if machine is None and raw["fault"] in ("kill", "drop_all_from"):
            raise ConfigError(f"{name}.machine", "required for this fault")
    elif action == "command":
        _require(raw, name, ("kind",))
        if raw["kind"] not in MACHINE_COMMANDS:
            raise ConfigError(f"{name}.kind", f"must be one of {MACHINE_COMMANDS}")
    return TimelineAction(float(at), action, machine, raw)


def _require(raw: dict, name: str, keys, numeric: bool = False) -> None:
    extra = set(raw) - set(keys)
    if extra:
        raise ConfigError(name, f"unexpected keys {sorted(extra)}")
    for k in keys:
        if k not in raw:
            raise ConfigError(f"{name}.{k}", "required")
        if numeric and not isinstance(raw[k], (int, float)):
            raise ConfigError(f"{name}.{k}", "must be a number")


TOP_KEYS = {
    "name", "duration", "seed", "machines", "timeline", "timers", "scoring",
    "stack_delays", "link", "controller", "subnet", "phases", "random_leader",
}


def parse_scenario(obj: dict) -> ScenarioConfig:
    if not isinstance(obj, dict):
        raise ConfigError("scenario", "expected a JSON object")
    unknown = set(obj) - TOP_KEYS
    if unknown:
        raise ConfigError("scenario", f"unknown keys {sorted(unknown)}")
    machines = obj.get("machines")
    if not isinstance(machines, list):
        raise ConfigError("machines", "expected a list")
    timeline = obj.get("timeline", [])
    if not isinstance(timeline, list):
        raise ConfigError("timeline", "expected a list")
    try:
        subnet = ipaddress.IPv4Network(obj.get("subnet", str(DEFAULT_SUBNET)))
    except ValueError as exc:
        raise ConfigError("subnet", str(exc)) from None
    duration = obj.get("duration")
    if not isinstance(duration, (int, float)):
        raise ConfigError("duration", "must be a number")
    seed = obj.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed", "must be an integer")
    phases = []
    for i, p in enumerate(obj.get("phases", [])):
        try:
            phases.append(Phase(str(p["name"]), float(p["start"]), float(p["end"])))
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"phases[{i}]", "expected name/start/end") from None
    return ScenarioConfig(
        name=str(obj.get("name", "scenario")),
        machines=tuple(_machine(m, i) for i, m in enumerate(machines)),
        duration=float(duration),
        seed=seed,
        timeline=tuple(_action(a, i) for i, a in enumerate(timeline)),
        timers=_build(TimerConfig, obj.get("timers"), "timers"),
        scoring=_build(ScoringParams, obj.get("scoring"), "scoring"),
        stack_delays=_build(StackDelays, obj.get("stack_delays"), "stack_delays"),
        link=_build(LinkModel, obj.get("link"), "link"),
        controller=_build(ControllerConfig, obj.get("controller"), "controller"),
        subnet=subnet,
        phases=tuple(phases),
        random_leader=bool(obj.get("random_leader", False)),
    )


def load_scenario(source: Union[str, Path]) -> ScenarioConfig:
    """Load a scenario file, or a bundled scenario by bare name."""
    path = Path(source)
    if not path.exists() and str(source) in bundled_names():
        text = _bundled_dir().joinpath(f"{source}.json").read_text()
    else:
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError("scenario", f"cannot read {source}: {exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("scenario", f"invalid JSON: {exc}") from None
    return parse_scenario(obj)


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    def section(obj, defaults):
        return {f.name: getattr(obj, f.name) for f in fields(obj)
                if getattr(obj, f.name) != getattr(defaults, f.name)}

    ctrl = {f.name: getattr(cfg.controller, f.name) for f in fields(cfg.controller)
            if f.name not in ("timers", "scoring", "subnet")
            and getattr(cfg.controller, f.name) != getattr(ControllerConfig(), f.name)}
    out: dict = {
        "name": cfg.name,
        "duration": cfg.duration,
        "seed": cfg.seed,
        "machines": [
            {"id": m.id, "imei": m.machine.imei, "boot_score": m.boot_score,
             "position": list(m.position),
             "resources": [m.resources.memory_pct, m.resources.battery_pct, m.resources.processor_pct],
             "velocity": list(m.velocity), "boot": m.boot}
            for m in cfg.machines
        ],
        "timeline": [
            {"at": a.at, "action": a.action, **({"machine": a.machine} if a.machine else {}), **a.args}
            for a in cfg.timeline
        ],
    }
    for key, obj, default in (
        ("timers", cfg.timers, TimerConfig()),
        ("scoring", cfg.scoring, ScoringParams()),
        ("stack_delays", cfg.stack_delays, StackDelays()),
        ("link", cfg.link, LinkModel()),
    ):
        sec = section(obj, default)
        if sec:
            out[key] = sec
    if ctrl:
        out["controller"] = ctrl
    if cfg.subnet != DEFAULT_SUBNET:
        out["subnet"] = str(cfg.subnet)
    if cfg.phases:
        out["phases"] = [{"name": p.name, "start": p.start, "end": p.end} for p in cfg.phases]
    if cfg.random_leader:
        out["random_leader"] = True
    return out


def dump_scenario(cfg: ScenarioConfig) -> bytes:
    return canonical_json(scenario_to_dict(cfg))


def _bundled_dir():
    return resources.files("swarmnet").joinpath("scenarios")


def bundled_names() -> list[str]:
    return sorted(p.name[:-5] for p in _bundled_dir().iterdir() if p.name.endswith(".json"))


def bundled(name: str) -> ScenarioConfig:
    if name not in bundled_names():
        raise ConfigError("scenario", f"no bundled scenario named {name!r}")
    return load_scenario(name)
