"""C&C message types and their canonical wire encoding.

Every message is a flat UTF-8 JSON object with a ``type`` discriminator,
keys sorted, no whitespace. Floats that hold an integral value are written
as integers so the encoding is the shortest decimal that round-trips;
decoding coerces them back to float for float-typed fields.
"""
from __future__ import annotations

import ipaddress
import json
import math
from dataclasses import dataclass, fields
from typing import Any, ClassVar, Union

from .domain import (
    MachineId,
    NetworkTableEntry,
    Position,
    Role,
    is_valid_imei,
)

BROADCAST = "*"

ENTRY_CAUSES = frozenset({"initial", "reconnection"})
EXIT_CAUSES = frozenset({"normal", "failure_alert"})
TRANSITION_CAUSES = frozenset({"scheduled", "emergency"})
FAILURE_CAUSES = frozenset({"not_top_score", "illegitimate", "busy"})


class MessageError(ValueError):
    pass


class InvalidMessage(MessageError):
    """Raised by encode for a message that breaks its type invariants."""


class MalformedMessage(MessageError):
    """Bytes are not a UTF-8 JSON object."""


class UnknownType(MessageError):
    pass


class SchemaViolation(MessageError):
    """Missing/extra fields, wrong primitive kinds, or invariant breach."""


# field kinds used by the schema table below
ID, DEST, FLOAT, INT, STR, IMEI, IP, ROLE, ENTRIES = (
    "id", "dest", "float", "int", "str", "imei", "ip", "role", "entries",
)


@dataclass(frozen=True)
class _Header:
    source_machine_id: str
    destination_machine_id: str
    timestamp: float


@dataclass(frozen=True)
class EntryNotification(_Header):
    imei: str
    role: Role
    performance: float
    ip_address: ipaddress.IPv4Address
    gps_x: float
    gps_y: float
    gps_z: float
    cause: str

    type_name: ClassVar[str] = "entry_notification"
    schema: ClassVar[dict] = {
        "imei": IMEI, "role": ROLE, "performance": FLOAT, "ip_address": IP,
        "gps_x": FLOAT, "gps_y": FLOAT, "gps_z": FLOAT, "cause": ENTRY_CAUSES,
    }

    def _check(self):
        _score_range("performance", self.performance)


@dataclass(frozen=True)
class EntryNotificationReply(_Header):
    selection_timer_interval: float
    heartbeat_timer_interval: float
    evaluation_timer_interval: float
    estimated_performance: float
    estimated_leader_selection: float
    network_table_entries: tuple[NetworkTableEntry, ...]

    type_name: ClassVar[str] = "entry_notification_reply"
    schema: ClassVar[dict] = {
        "selection_timer_interval": FLOAT, "heartbeat_timer_interval": FLOAT,
        "evaluation_timer_interval": FLOAT, "estimated_performance": FLOAT,
        "estimated_leader_selection": FLOAT, "network_table_entries": ENTRIES,
    }

    def _check(self):
        for name in ("selection_timer_interval", "heartbeat_timer_interval",
                     "evaluation_timer_interval"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.estimated_performance <= self.evaluation_timer_interval:
            raise ValueError("estimated_performance outside [0, evaluation interval]")
        if not 0 <= self.estimated_leader_selection <= self.selection_timer_interval:
            raise ValueError("estimated_leader_selection outside [0, selection interval]")


@dataclass(frozen=True)
class ExitNotification(_Header):
    role: Role
    cause: str

    type_name: ClassVar[str] = "exit_notification"
    schema: ClassVar[dict] = {"role": ROLE, "cause": EXIT_CAUSES}

    def _check(self):
        if self.cause == "failure_alert" and self.role is not Role.LEADER:
            raise ValueError("failure_alert exit is only permitted from a Leader")


@dataclass(frozen=True)
class PerformanceReport(_Header):
    performance_score: float

    type_name: ClassVar[str] = "performance_report"
    schema: ClassVar[dict] = {"performance_score": FLOAT}

    def _check(self):
        _score_range("performance_score", self.performance_score)


@dataclass(frozen=True)
class HeartbeatNotification(_Header):
    cellular_status: int
    vehicle_type: int
    autopilot: int
    base_mode: int
    system_status: int
    vn: float
    ve: float
    vd: float
    x: float
    y: float
    z: float
    heading: float

    type_name: ClassVar[str] = "heartbeat_notification"
    schema: ClassVar[dict] = {
        "cellular_status": INT, "vehicle_type": INT, "autopilot": INT,
        "base_mode": INT, "system_status": INT,
        "vn": FLOAT, "ve": FLOAT, "vd": FLOAT,
        "x": FLOAT, "y": FLOAT, "z": FLOAT, "heading": FLOAT,
    }

    def _check(self):
        if not 0.0 <= self.heading < 360.0:
            raise ValueError(f"heading must be in [0, 360), got {self.heading}")

    @property
    def position(self) -> Position:
        return Position(self.x, self.y, self.z)


@dataclass(frozen=True)
class TransitionRequest(_Header):
    candidate_score: float
    cause: str
    network_status: str
    transition_plan: str

    type_name: ClassVar[str] = "transition_request"
    schema: ClassVar[dict] = {
        "candidate_score": FLOAT, "cause": TRANSITION_CAUSES,
        "network_status": STR, "transition_plan": STR,
    }

    def _check(self):
        _score_range("candidate_score", self.candidate_score)


@dataclass(frozen=True)
class TransitionAlert(_Header):
    approved_candidate_id: str
    transition_start_time: float
    network_configuration_change: str

    type_name: ClassVar[str] = "transition_alert"
    schema: ClassVar[dict] = {
        "approved_candidate_id": ID, "transition_start_time": FLOAT,
        "network_configuration_change": STR,
    }

    def _check(self):
        if self.transition_start_time < self.timestamp:
            raise ValueError("transition_start_time precedes timestamp")


@dataclass(frozen=True)
class TransitionFailure(_Header):
    failure_cause: str
    retry_policy: str
    suggestive_action: str
    supporting_data: str

    type_name: ClassVar[str] = "transition_failure"
    schema: ClassVar[dict] = {
        "failure_cause": FAILURE_CAUSES, "retry_policy": STR,
        "suggestive_action": STR, "supporting_data": STR,
    }


Message = Union[
    EntryNotification, EntryNotificationReply, ExitNotification,
    PerformanceReport, HeartbeatNotification, TransitionRequest,
    TransitionAlert, TransitionFailure,
]

MESSAGE_TYPES: dict[str, type] = {
    cls.type_name: cls
    for cls in (
        EntryNotification, EntryNotificationReply, ExitNotification,
        PerformanceReport, HeartbeatNotification, TransitionRequest,
        TransitionAlert, TransitionFailure,
    )
}

_HEADER_SCHEMA = {"source_machine_id": ID, "destination_machine_id": DEST, "timestamp": FLOAT}


def _score_range(name: str, value: float) -> None:
    if not 0.0 <= value <= 100.0:
        raise ValueError(f"{name} must be in [0, 100], got {value}")


def _full_schema(cls) -> dict:
    return {**_HEADER_SCHEMA, **cls.schema}


# ---------------------------------------------------------------- validation

def validate(msg: Message) -> None:
    """Raise ValueError if ``msg`` breaks a field kind or type invariant."""
    cls = type(msg)
    if cls.type_name not in MESSAGE_TYPES:
        raise ValueError(f"not a C&C message: {cls.__name__}")
    for name, kind in _full_schema(cls).items():
        _check_kind(name, kind, getattr(msg, name))
    if msg.timestamp < 0:
        raise ValueError("timestamp must be >= 0")
    check = getattr(msg, "_check", None)
    if check is not None:
        check()


def _check_kind(name: str, kind, value) -> None:
    if kind in (ID, DEST):
        if not isinstance(value, str):
            raise ValueError(f"{name} must be a string")
        if not (kind == DEST and value == BROADCAST):
            MachineId(value)
    elif kind == FLOAT:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{name} must be a number")
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite")
    elif kind == INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"{name} must be an integer")
        if not 0 <= value <= 255:
            raise ValueError(f"{name} must be a small status code in [0, 255]")
    elif kind == STR:
        if not isinstance(value, str):
            raise ValueError(f"{name} must be a string")
    elif kind == IMEI:
        if not is_valid_imei(value):
            raise ValueError(f"{name} must be 15 decimal digits")
    elif kind == IP:
        if not isinstance(value, ipaddress.IPv4Address):
            raise ValueError(f"{name} must be an IPv4 address")
    elif kind == ROLE:
        if not isinstance(value, Role):
            raise ValueError(f"{name} must be a Role")
    elif kind == ENTRIES:
        if not isinstance(value, tuple) or not all(
            isinstance(e, NetworkTableEntry) for e in value
        ):
            raise ValueError(f"{name} must be a tuple of NetworkTableEntry")
    elif isinstance(kind, frozenset):
        if value not in kind:
            raise ValueError(f"{name} must be one of {sorted(kind)}, got {value!r}")
    else:  # pragma: no cover
        raise AssertionError(kind)


# ---------------------------------------------------------------- encoding

def _num(v: float):
    v = float(v)
    if v.is_integer() and abs(v) < 2**53:
        return int(v)
    return v


def _entry_to_wire(e: NetworkTableEntry) -> dict:
    return {
        "machine": {"id": e.machine.id, "imei": e.machine.imei},
        "session_ip": None if e.session_ip is None else str(e.session_ip),
        "coords": {"x": _num(e.coords.x), "y": _num(e.coords.y), "z": _num(e.coords.z)},
        "role": e.role.wire,
        "score": _num(e.score),
    }


def to_wire(msg: Message) -> dict:
    out: dict[str, Any] = {"type": msg.type_name}
    for name, kind in _full_schema(type(msg)).items():
        value = getattr(msg, name)
        if kind == FLOAT:
            value = _num(value)
        elif kind == IP:
            value = str(value)
        elif kind == ROLE:
            value = value.wire
        elif kind == ENTRIES:
            value = [_entry_to_wire(e) for e in value]
        out[name] = value
    return out


def canonical_json(obj) -> bytes:
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    ).encode("utf-8")


def encode(msg: Message) -> bytes:
    try:
        validate(msg)
    except ValueError as exc:
        raise InvalidMessage(str(exc)) from exc
    return canonical_json(to_wire(msg))


# ---------------------------------------------------------------- decoding

def _parse_entry(raw) -> NetworkTableEntry:
    if not isinstance(raw, dict) or set(raw) != {"machine", "session_ip", "coords", "role", "score"}:
        raise SchemaViolation("malformed network table entry")
    machine, coords = raw["machine"], raw["coords"]
    if not isinstance(machine, dict) or set(machine) != {"id", "imei"}:
        raise SchemaViolation("malformed entry machine")
    if not isinstance(coords, dict) or set(coords) != {"x", "y", "z"}:
        raise SchemaViolation("malformed entry coords")
    ip = raw["session_ip"]
    try:
        return NetworkTableEntry(
            machine=MachineId(_expect_str(machine["id"]),
                              None if machine["imei"] is None else _expect_str(machine["imei"])),
            session_ip=None if ip is None else ipaddress.IPv4Address(_expect_str(ip)),
            coords=Position(*(_expect_float(coords[k]) for k in "xyz")),
            role=Role.from_wire(_expect_int(raw["role"])),
            score=_expect_float(raw["score"]),
        )
    except (ValueError, TypeError) as exc:
        raise SchemaViolation(f"bad network table entry: {exc}") from exc


def _expect_str(v):
    if not isinstance(v, str):
        raise TypeError("expected string")
    return v


def _expect_float(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError("expected number")
    return float(v)


def _expect_int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError("expected integer")
    return v


def from_wire(obj) -> Message:
    if not isinstance(obj, dict):
        raise MalformedMessage("top-level JSON value must be an object")
    if "type" not in obj:
        raise SchemaViolation("missing 'type'")
    type_name = obj["type"]
    if not isinstance(type_name, str) or type_name not in MESSAGE_TYPES:
        raise UnknownType(f"unknown message type {type_name!r}")
    cls = MESSAGE_TYPES[type_name]
    schema = _full_schema(cls)
    keys = set(obj) - {"type"}
    if keys != set(schema):
        missing, extra = set(schema) - keys, keys - set(schema)
        raise SchemaViolation(f"{type_name}: missing {sorted(missing)}, unexpected {sorted(extra)}")
    kwargs = {}
    try:
        for name, kind in schema.items():
            raw = obj[name]
            if kind == FLOAT:
                kwargs[name] = _expect_float(raw)
            elif kind == IP:
                kwargs[name] = ipaddress.IPv4Address(_expect_str(raw))
            elif kind == ROLE:
                kwargs[name] = Role.from_wire(_expect_int(raw))
            elif kind == ENTRIES:
                if not isinstance(raw, list):
                    raise TypeError("expected list of entries")
                kwargs[name] = tuple(_parse_entry(e) for e in raw)
            else:
                kwargs[name] = raw
        msg = cls(**kwargs)
        validate(msg)
    except SchemaViolation:
        raise
    except (ValueError, TypeError) as exc:
        raise SchemaViolation(f"{type_name}: {exc}") from exc
    return msg


def decode(data: bytes) -> Message:
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedMessage(str(exc)) from exc
    return from_wire(obj)


def validate_reentry(msg: EntryNotification) -> bool:
    """A reconnecting machine must announce itself with a zero score."""
    return msg.cause != "reconnection" or msg.performance == 0


def message_fields(cls) -> list[str]:
    return [f.name for f in fields(cls)]
