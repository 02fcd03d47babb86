"""Core value types shared across the simulator.

Positions are meters in a local frame, resources and scores are
percentages. Machine identity is keyed by the short alphanumeric id;
the IMEI rides along once it has been learned.
"""
from __future__ import annotations

import enum
import ipaddress
import math
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional

DEFAULT_SUBNET = ipaddress.IPv4Network("10.45.0.0/24")

_IMEI_RE = re.compile(r"^[0-9]{15}$")
_ID_RE = re.compile(r"^[A-Za-z0-9_-]{1,32}$")


class ConfigError(ValueError):
    """Raised for invalid scenario or controller configuration."""

    def __init__(self, field_name: str, reason: str):
        super().__init__(f"{field_name}: {reason}")
        self.field = field_name
        self.reason = reason


def is_valid_imei(value: str) -> bool:
    return isinstance(value, str) and bool(_IMEI_RE.match(value))


@dataclass(frozen=True)
class MachineId:
    id: str
    imei: Optional[str] = None  # unknown until learned from an Entry Notification

    def __post_init__(self):
        if not isinstance(self.id, str) or not _ID_RE.match(self.id):
            raise ValueError(f"bad machine id {self.id!r}")
        if self.imei is not None and not is_valid_imei(self.imei):
            raise ValueError(f"imei must be 15 decimal digits, got {self.imei!r}")


class Role(enum.Enum):
    NULL = "Null"
    LEADER = "Leader"
    FOLLOWER = "Follower"

    @property
    def wire(self) -> int:
        return _ROLE_TO_WIRE[self]

    @classmethod
    def from_wire(cls, code: int) -> "Role":
        try:
            return _WIRE_TO_ROLE[code]
        except KeyError:
            raise ValueError(f"unknown role code {code!r}") from None


_ROLE_TO_WIRE = {Role.LEADER: 1, Role.FOLLOWER: 0, Role.NULL: -1}
_WIRE_TO_ROLE = {v: k for k, v in _ROLE_TO_WIRE.items()}


@dataclass(frozen=True)
class Position:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise ValueError(f"non-finite position {self}")

    def __iter__(self) -> Iterator[float]:
        yield self.x
        yield self.y
        yield self.z

    def distance(self, other: "Position") -> float:
        return math.dist(tuple(self), tuple(other))

    def translated(self, dx: float, dy: float, dz: float) -> "Position":
        return Position(self.x + dx, self.y + dy, self.z + dz)


def _check_pct(name: str, value: float) -> None:
    if not (0.0 <= value <= 100.0):
        raise ValueError(f"{name} must be in [0, 100], got {value}")


@dataclass(frozen=True)
class ResourceProfile:
    memory_pct: float = 100.0
    battery_pct: float = 100.0
    processor_pct: float = 100.0

    def __post_init__(self):
        _check_pct("memory_pct", self.memory_pct)
        _check_pct("battery_pct", self.battery_pct)
        _check_pct("processor_pct", self.processor_pct)


@dataclass(frozen=True)
class ScoringParams:
    intensity_a: float = 0.1
    m_thres: float = 80.0
    b_thres: float = 80.0
    p_thres: float = 80.0
    score_thres: float = 2.0

    def __post_init__(self):
        if not (0.0 < self.intensity_a < 1.0):
            raise ValueError(f"intensity_a must be in (0, 1), got {self.intensity_a}")
        for name in ("m_thres", "b_thres", "p_thres"):
            _check_pct(name, getattr(self, name))
        if self.score_thres < 0:
            raise ValueError("score_thres must be >= 0")


@dataclass(frozen=True)
class TimerConfig:
    t_heartbeat: float = 3.0
    t_performance: float = 6.0
    t_selection: float = 26.0
    heartbeat_timeout_factor: float = 2.5

    def __post_init__(self):
        if not (0 < self.t_heartbeat < self.t_performance < self.t_selection):
            raise ValueError(
                "timers must satisfy 0 < t_heartbeat < t_performance < t_selection"
            )
        if self.heartbeat_timeout_factor <= 1.0:
            raise ValueError("heartbeat_timeout_factor must exceed 1")

    @property
    def heartbeat_timeout(self) -> float:
        return self.heartbeat_timeout_factor * self.t_heartbeat


@dataclass(frozen=True)
class NetworkTableEntry:
    machine: MachineId
    session_ip: Optional[ipaddress.IPv4Address]  # None while a PDU address is pending
    coords: Position
    role: Role
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 100.0) or not math.isfinite(self.score):
            raise ValueError(f"score must be in [0, 100], got {self.score}")

    @property
    def id(self) -> str:
        return self.machine.id


@dataclass
class NetworkTable:
    """Replicated membership view, keyed by machine id.

    Equality is dict equality, so insertion order never matters.
    """

    entries: dict[str, NetworkTableEntry] = field(default_factory=dict)

    def __contains__(self, machine_id: str) -> bool:
        return machine_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[NetworkTableEntry]:
        return iter(self.entries.values())

    def get(self, machine_id: str) -> Optional[NetworkTableEntry]:
        return self.entries.get(machine_id)

    def copy(self) -> "NetworkTable":
        return NetworkTable(dict(self.entries))

    def upsert(self, entry: NetworkTableEntry) -> None:
        # The leader hands out session IPs, so a newer claim on an address
        # means any other holder lost it.
        if entry.session_ip is not None:
            for other in list(self.entries.values()):
                if other.id != entry.id and other.session_ip == entry.session_ip:
                    self.entries[other.id] = replace(other, session_ip=None)
        if entry.role is Role.LEADER:
            self._demote_all_but(entry.id)
        self.entries[entry.id] = entry

    def update(self, machine_id: str, **changes) -> None:
        entry = self.entries[machine_id]
        self.upsert(replace(entry, **changes))

    def remove(self, machine_id: str) -> Optional[NetworkTableEntry]:
        return self.entries.pop(machine_id, None)

    def leader(self) -> Optional[NetworkTableEntry]:
        for entry in self.entries.values():
            if entry.role is Role.LEADER:
                return entry
        return None

    def set_leader(self, machine_id: str, clear_ips: bool = False) -> None:
        """Mark one entry Leader and every other entry Follower."""
        for mid, entry in list(self.entries.items()):
            role = Role.LEADER if mid == machine_id else Role.FOLLOWER
            ip = None if clear_ips else entry.session_ip
            self.entries[mid] = replace(entry, role=role, session_ip=ip)

    def _demote_all_but(self, machine_id: str) -> None:
        for mid, entry in list(self.entries.items()):
            if mid != machine_id and entry.role is Role.LEADER:
                self.entries[mid] = replace(entry, role=Role.FOLLOWER)

    def peers(self, me: str) -> list[str]:
        return sorted(mid for mid in self.entries if mid != me)

    def argmax(self, exclude: Iterable[str] = ()) -> Optional[NetworkTableEntry]:
        """Highest score; ties go to the lowest machine id."""
        skip = set(exclude)
        best = None
        for mid in sorted(self.entries):
            if mid in skip:
                continue
            entry = self.entries[mid]
            if best is None or entry.score > best.score:
                best = entry
        return best


@dataclass
class HeartbeatRecords:
    last_seen: dict[str, float] = field(default_factory=dict)

    def saw(self, machine_id: str, t: float) -> None:
        prev = self.last_seen.get(machine_id)
        if prev is None or t > prev:
            self.last_seen[machine_id] = t

    def forget(self, machine_id: str) -> None:
        self.last_seen.pop(machine_id, None)


def validate_table(
    table: NetworkTable, subnet: Optional[ipaddress.IPv4Network] = None
) -> list[str]:
    violations = []
    leaders = [e for e in table if e.role is Role.LEADER]
    if len(leaders) > 1:
        violations.append("multiple leaders")
    ips = [e.session_ip for e in table if e.session_ip is not None]
    if len(ips) != len(set(ips)):
        violations.append("duplicate session ip")
    if subnet is not None and any(ip not in subnet for ip in ips):
        violations.append("session ip outside subnet")
    return violations


def host_address(subnet: ipaddress.IPv4Network) -> ipaddress.IPv4Address:
    """The .1 address the hosting (leader) machine always takes."""
    return subnet.network_address + 1
