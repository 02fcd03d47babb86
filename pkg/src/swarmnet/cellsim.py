"""Abstract cellular substrate.

Stands in for the Core/RAN/UE stacks: configurable start-up latencies, a
single hosting slot that owns the subnet's .1 address, UE attachment with
lowest-free address leasing, synchronization-signal visibility, message
delivery over a seeded link model, and fault injection.

All timing goes through the owning scheduler; nothing here waits in real time.
"""
from __future__ import annotations

import ipaddress
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from .domain import DEFAULT_SUBNET, host_address


class AlreadyHosting(RuntimeError):
    """Another live machine holds the hosting slot."""


class NotAttached(RuntimeError):
    pass


@dataclass(frozen=True)
class StackDelays:
    core_init: float = 2.0
    ran_init: float = 1.5
    ue_init: float = 1.0
    attach_complete: float = 1.0
    teardown: float = 0.5
    scan_timeout: float = 8.0   # how long a UE searches for SS before rrc_failed
    probe_time: float = 0.25    # duration of one cellular-level check

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class LinkModel:
    latency: float = 0.01
    jitter: float = 0.0   # uniform extra delay in [0, jitter]
    loss: float = 0.0

    def __post_init__(self):
        if self.latency <= 0:
            raise ValueError("latency must be positive")
        if self.jitter < 0:
            raise ValueError("jitter must be >= 0")
        if not 0.0 <= self.loss <= 1.0:
            raise ValueError("loss must be in [0, 1]")


@dataclass(frozen=True)
class CheckReport:
    ss_visible: bool
    rrc_ok: bool
    nas_ok: bool

    @property
    def healthy(self) -> bool:
        return self.ss_visible and self.rrc_ok and self.nas_ok


@dataclass(frozen=True)
class CellularSignal:
    """Signal from the radio stack to a machine's controller.

    kind is one of stack_ready, rrc_connected, rrc_failed, nas_failed,
    ss_lost, teardown_done, check_report, host_conflict.
    """

    t: float
    kind: str
    ip: Optional[ipaddress.IPv4Address] = None
    host: Optional[str] = None
    report: Optional[CheckReport] = None


@dataclass
class _Host:
    machine: str
    token: int
    ready: bool = False


@dataclass
class _Attempt:
    token: int
    phase: str  # init | scanning | completing
    deadline: float = 0.0


@dataclass(frozen=True)
class SendResult:
    deliver_at: Optional[float]
    reason: str = ""
    via: Optional[str] = None  # hosting machine the message transits


Scheduler = Callable[[float, str, Callable[[float], None]], None]
Notifier = Callable[[str, CellularSignal], None]


@dataclass
class RadioDomain:
    schedule: Scheduler
    notify: Notifier
    subnet: ipaddress.IPv4Network = DEFAULT_SUBNET
    delays: StackDelays = field(default_factory=StackDelays)
    link: LinkModel = field(default_factory=LinkModel)
    rng: random.Random = field(default_factory=lambda: random.Random(0))

    def __post_init__(self):
        self.host: Optional[_Host] = None
        self.attached: dict[str, ipaddress.IPv4Address] = {}
        self.killed: set[str] = set()
        self.blackout_all = False
        self.blackout: set[str] = set()
        self.muted: set[str] = set()
        self._attempts: dict[str, _Attempt] = {}
        self._fifo: dict[tuple[str, str], float] = {}
        self._tokens = 0

    def _token(self) -> int:
        self._tokens += 1
        return self._tokens

    # ------------------------------------------------------------ queries

    @property
    def host_ip(self) -> ipaddress.IPv4Address:
        return host_address(self.subnet)

    def live_host(self) -> Optional[str]:
        if self.host is not None and self.host.machine not in self.killed:
            return self.host.machine
        return None

    def ready_host(self) -> Optional[str]:
        h = self.live_host()
        if h is not None and self.host.ready:
            return h
        return None

    def ss_visible(self, m: str) -> bool:
        if m in self.killed or self.blackout_all or m in self.blackout:
            return False
        h = self.ready_host()
        return h is not None and h != m

    def connected(self, m: str) -> bool:
        if m in self.killed:
            return False
        return m in self.attached or self.ready_host() == m

    def ip_of(self, m: str) -> Optional[ipaddress.IPv4Address]:
        if self.ready_host() == m:
            return self.host_ip
        return self.attached.get(m)

    def cellular_check(self, m: str) -> CheckReport:
        """Probe SS, RRC and NAS reachability of the current host; no side effects."""
        ss = self.ss_visible(m)
        # a visible SS implies a running RAN; the Core runs on the same machine
        return CheckReport(ss_visible=ss, rrc_ok=ss, nas_ok=ss)

    # ------------------------------------------------------------ core / RAN

    def start_core_ran(self, m: str, now: float) -> float:
        if m in self.killed:
            raise NotAttached(f"{m} is down")
        live = self.live_host()
        if live is not None:
            raise AlreadyHosting(f"{m} cannot host: {live} is hosting")
        self.detach_ue(m, now)
        self.host = _Host(machine=m, token=self._token())
        ready_at = now + self.delays.core_init + self.delays.ran_init
        token = self.host.token
        self.schedule(ready_at, m, lambda t: self._host_ready(token, t))
        return ready_at

    def _host_ready(self, token: int, t: float) -> None:
        if self.host is None or self.host.token != token or self.host.machine in self.killed:
            return
        self.host.ready = True
        self.notify(self.host.machine, CellularSignal(t, "stack_ready", ip=self.host_ip,
                                                      host=self.host.machine))
        self._wake_scanners(t)

    def stop_core_ran(self, m: str, now: float) -> float:
        if self.host is not None and self.host.machine == m:
            self.host = None
            self._drop_all_attachments(now)
        done_at = now + self.delays.teardown
        self.schedule(done_at, m, lambda t: self._teardown_done(m, t))
        return done_at

    def _teardown_done(self, m: str, t: float) -> None:
        if m not in self.killed:
            self.notify(m, CellularSignal(t, "teardown_done"))

    def _drop_all_attachments(self, now: float) -> None:
        for ue in sorted(self.attached):
            del self.attached[ue]
            if ue not in self.killed:
                self.notify(ue, CellularSignal(now, "ss_lost"))

    # ------------------------------------------------------------ UE

    def attach_ue(self, m: str, now: float) -> None:
        if self.host is not None and self.host.machine == m:
            raise AlreadyHosting(f"{m} is hosting and cannot attach as UE")
        self.detach_ue(m, now)
        attempt = _Attempt(token=self._token(), phase="init")
        self._attempts[m] = attempt
        token = attempt.token
        self.schedule(now + self.delays.ue_init, m, lambda t: self._scan(m, token, t))

    def detach_ue(self, m: str, now: float) -> None:
        self._attempts.pop(m, None)
        self.attached.pop(m, None)

    def _live_attempt(self, m: str, token: int) -> Optional[_Attempt]:
        a = self._attempts.get(m)
        if a is None or a.token != token or m in self.killed:
            return None
        return a

    def _scan(self, m: str, token: int, t: float) -> None:
        a = self._live_attempt(m, token)
        if a is None:
            return
        if self.ss_visible(m):
            self._begin_completion(m, a, t)
        else:
            a.phase = "scanning"
            a.deadline = t + self.delays.scan_timeout
            self.schedule(a.deadline, m, lambda t2: self._scan_deadline(m, token, t2))

    def _begin_completion(self, m: str, a: _Attempt, t: float) -> None:
        a.phase = "completing"
        token = a.token
        self.schedule(t + self.delays.attach_complete, m, lambda t2: self._complete(m, token, t2))

    def _wake_scanners(self, t: float) -> None:
        for m in sorted(self._attempts):
            a = self._attempts[m]
            if a.phase == "scanning" and self.ss_visible(m):
                self._begin_completion(m, a, t)

    def _scan_deadline(self, m: str, token: int, t: float) -> None:
        a = self._live_attempt(m, token)
        if a is None or a.phase != "scanning":
            return
        del self._attempts[m]
        self.notify(m, CellularSignal(t, "rrc_failed"))

    def _complete(self, m: str, token: int, t: float) -> None:
        a = self._live_attempt(m, token)
        if a is None:
            return
        del self._attempts[m]
        if not self.ss_visible(m):
            self.notify(m, CellularSignal(t, "rrc_failed"))
            return
        ip = self._lease()
        if ip is None:
            self.notify(m, CellularSignal(t, "nas_failed"))
            return
        self.attached[m] = ip
        self.notify(m, CellularSignal(t, "rrc_connected", ip=ip, host=self.ready_host()))

    def _lease(self) -> Optional[ipaddress.IPv4Address]:
        taken = set(self.attached.values())
        for ip in self.subnet.hosts():
            if ip == self.host_ip:
                continue
            if ip not in taken:
                return ip
        return None

    # ------------------------------------------------------------ transport

    def send(self, src: str, dst: str, now: float) -> SendResult:
        if src in self.killed:
            return SendResult(None, "sender down")
        if src in self.muted:
            return SendResult(None, "drop_all_from fault")
        if not self.connected(src):
            return SendResult(None, "sender not attached")
        if not self.connected(dst):
            return SendResult(None, "receiver not attached")
        host = self.ready_host()
        if self.link.loss > 0 and self.rng.random() < self.link.loss:
            return SendResult(None, "lost")
        delay = self.link.latency
        if self.link.jitter > 0:
            delay += self.rng.uniform(0.0, self.link.jitter)
        if host not in (src, dst):
            delay *= 2  # UE to UE hairpins through the hosting machine
        at = now + delay
        key = (src, dst)
        at = max(at, self._fifo.get(key, at))
        self._fifo[key] = at
        return SendResult(at, via=host)

    def deliverable(self, src: str, dst: str, via: Optional[str]) -> str:
        """Empty string when a message sent through ``via`` can land now."""
        if via is None or via in self.killed or self.ready_host() != via:
            return "host gone"
        if not self.connected(dst):
            return "receiver not attached"
        return ""

    # ------------------------------------------------------------ faults

    def kill(self, m: str, now: float) -> None:
        self.killed.add(m)
        self._attempts.pop(m, None)
        self.attached.pop(m, None)
        if self.host is not None and self.host.machine == m:
            self.host = None
            self._drop_all_attachments(now)

    def restore(self, m: Optional[str], now: float) -> None:
        if m is None:
            self.blackout_all = False
        else:
            self.killed.discard(m)
            self.blackout.discard(m)
            self.muted.discard(m)
        self._wake_scanners(now)

    def set_blackout(self, m: Optional[str], now: float) -> None:
        if m is None:
            self.blackout_all = True
            affected = sorted(self.attached)
        else:
            self.blackout.add(m)
            affected = [m] if m in self.attached else []
        for ue in affected:
            del self.attached[ue]
            self.notify(ue, CellularSignal(now, "ss_lost"))

    def drop_all_from(self, m: str) -> None:
        self.muted.add(m)

    # ------------------------------------------------------------ invariants

    def check_invariants(self) -> list[str]:
        problems = []
        ips = list(self.attached.values())
        if len(ips) != len(set(ips)):
            problems.append("duplicate session ip in radio domain")
        if self.host_ip in ips:
            problems.append("UE holds the host address")
        for ue in self.attached:
            if not self.ss_visible(ue):
                problems.append(f"{ue} attached without visible SS")
        return problems
