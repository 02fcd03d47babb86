"""Per-machine state controller.

One ``Controller`` per machine. ``handle_event`` is the only mutation point:
it consumes a timestamped event and returns the effects the simulator must
carry out (outbound messages, cellular commands, timer arms, trace records).
The controller never touches the radio or the clock directly.

FSM transitions are tagged with the event symbols E_I (initialization),
E_E (entering), E_LS (leader selection), E_X (exit), E_F (failure) and
E_R (recovery).
"""
from __future__ import annotations

import ipaddress
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .cellsim import CellularSignal
from .domain import (
    DEFAULT_SUBNET,
    HeartbeatRecords,
    MachineId,
    NetworkTable,
    NetworkTableEntry,
    Position,
    ResourceProfile,
    Role,
    ScoringParams,
    TimerConfig,
    host_address,
)
from .harness.trace import TraceEvent
from .messages import (
    EntryNotification,
    EntryNotificationReply,
    ExitNotification,
    HeartbeatNotification,
    Message,
    PerformanceReport,
    TransitionAlert,
    TransitionFailure,
    TransitionRequest,
    validate,
    validate_reentry,
)
from .scoring import ScoreBreakdown, aggregate_score, center_of_mass

# (symbol, from, to) triples allowed by the FSM table
ALLOWED_TRANSITIONS = frozenset({
    ("E_I", Role.NULL, Role.LEADER),
    ("E_I", Role.NULL, Role.FOLLOWER),
    ("E_E", Role.NULL, Role.FOLLOWER),
    ("E_LS", Role.FOLLOWER, Role.LEADER),
    ("E_LS", Role.LEADER, Role.FOLLOWER),
    ("E_X", Role.LEADER, Role.NULL),
    ("E_X", Role.FOLLOWER, Role.NULL),
    ("E_F", Role.LEADER, Role.NULL),
    ("E_F", Role.FOLLOWER, Role.NULL),
    ("E_R", Role.NULL, Role.FOLLOWER),
})

PERIODIC = ("heartbeat", "evaluation", "selection", "monitor")
SELECTION_POLICIES = ("leader_margin", "second_best_gap", "absolute")


class AssociationTimeout(Exception):
    """No Entry Notification Reply arrived in time (handled internally)."""


class TransitionStall(Exception):
    """The approved candidate never came up as host (handled internally)."""


# ------------------------------------------------------------------ events

@dataclass(frozen=True)
class TimerFired:
    t: float
    which: str
    token: int


@dataclass(frozen=True)
class MessageReceived:
    t: float
    msg: Message


@dataclass(frozen=True)
class HealthSample:
    t: float
    resources: ResourceProfile
    position: Position
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    heading: float = 0.0


@dataclass(frozen=True)
class Command:
    t: float
    kind: str  # boot | exit | enter | recover


Event = Union[TimerFired, MessageReceived, CellularSignal, HealthSample, Command]


# ------------------------------------------------------------------ state

@dataclass(frozen=True)
class ControllerConfig:
    timers: TimerConfig = field(default_factory=TimerConfig)
    scoring: ScoringParams = field(default_factory=ScoringParams)
    subnet: ipaddress.IPv4Network = DEFAULT_SUBNET
    boot_follower_wait: float = 4.0
    association_timeout: Optional[float] = None
    transition_grace: float = 0.1  # lets the alert broadcast land before teardown
    critical_floor: float = 10.0
    check_attempts: int = 3
    host_clear_attempts: int = 20
    attach_retry: float = 1.0
    selection_policy: str = "leader_margin"
    vehicle_type: int = 0
    autopilot: int = 0
    base_mode: int = 0
    system_status: int = 0

    def __post_init__(self):
        if self.selection_policy not in SELECTION_POLICIES:
            raise ValueError(f"selection_policy must be one of {SELECTION_POLICIES}")
        if self.transition_grace < 0:
            raise ValueError("transition_grace must be >= 0")
        if not 0 <= self.critical_floor <= 100:
            raise ValueError("critical_floor must be a percentage")

    @property
    def association_bound(self) -> float:
        if self.association_timeout is not None:
            return self.association_timeout
        return 2 * self.timers.t_heartbeat


@dataclass
class PendingTransition:
    candidate_id: str
    start_time: float
    kind: str  # scheduled | emergency


@dataclass
class ControllerState:
    me: MachineId
    boot_score: float
    position: Position
    resources: ResourceProfile
    timers: TimerConfig
    fsm: Role = Role.NULL
    my_score: Optional[ScoreBreakdown] = None
    score: float = 0.0
    table: NetworkTable = field(default_factory=NetworkTable)
    heartbeats: HeartbeatRecords = field(default_factory=HeartbeatRecords)
    next_fire: dict[str, float] = field(default_factory=dict)
    tokens: dict[str, int] = field(default_factory=dict)
    # detached | attaching | attached | starting_host | hosting | tearing_down
    attach: str = "detached"
    session_ip: Optional[ipaddress.IPv4Address] = None
    host: Optional[str] = None
    in_network: bool = False
    awaiting_reply: bool = False
    pending_transition: Optional[PendingTransition] = None
    joining: Optional[str] = None   # entry symbol while coming in from Null
    entry_cause: str = "initial"
    checking: Optional[str] = None  # machine under cellular verification
    check_failures: int = 0
    clearing: bool = False          # candidate waiting for the old host's SS to vanish
    clear_checks: int = 0
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    heading: float = 0.0
    last_t: float = 0.0


@dataclass
class Effects:
    messages: list[Message] = field(default_factory=list)
    commands: list[str] = field(default_factory=list)
    timers: list[tuple[str, float, int]] = field(default_factory=list)
    trace: list[TraceEvent] = field(default_factory=list)


def detect_failures(
    table: NetworkTable, heartbeats: HeartbeatRecords, now: float, timeout: float, me: str
) -> list[tuple[str, str]]:
    """Peers whose last heartbeat is more than ``timeout`` old.

    Each suspect is classified ``leader_suspect`` or ``follower_failure``.
    """
    leader = table.leader()
    out = []
    for mid in table.peers(me):
        seen = heartbeats.last_seen.get(mid)
        if seen is None or now - seen <= timeout:
            continue
        kind = "leader_suspect" if leader is not None and leader.id == mid else "follower_failure"
        out.append((mid, kind))
    return out


def _strictly_after(base: float, gap: float) -> float:
    """Smallest float d with d - base > gap."""
    d = base + gap
    while d - base <= gap:
        d = math.nextafter(d, math.inf)
    return d


class Controller:
    def __init__(
        self,
        me: MachineId,
        config: ControllerConfig,
        *,
        boot_score: float,
        position: Position = Position(),
        resources: ResourceProfile = ResourceProfile(),
    ):
        if not 0 <= boot_score <= 100:
            raise ValueError("boot_score must be in [0, 100]")
        self.config = config
        self.state = ControllerState(
            me=me, boot_score=boot_score, position=position,
            resources=resources, timers=config.timers,
        )
        self._fx = Effects()
        self._host_ip = host_address(config.subnet)

    # -------------------------------------------------------------- plumbing

    @property
    def id(self) -> str:
        return self.state.me.id

    def handle_event(self, ev: Event) -> Effects:
        s = self.state
        self._fx = fx = Effects()
        if ev.t < s.last_t:
            self._trace(ev.t, "msg_dropped", reason="event out of order")
            return fx
        if self._inert() and not isinstance(ev, Command):
            return fx
        s.last_t = ev.t
        if isinstance(ev, TimerFired):
            self._on_timer(ev)
        elif isinstance(ev, MessageReceived):
            self._on_message(ev.t, ev.msg)
        elif isinstance(ev, CellularSignal):
            self._on_signal(ev)
        elif isinstance(ev, HealthSample):
            self._on_health(ev)
        elif isinstance(ev, Command):
            self._on_command(ev)
        else:
            raise TypeError(f"unknown event {ev!r}")
        return fx

    def _inert(self) -> bool:
        s = self.state
        return s.fsm is Role.NULL and s.joining is None and s.attach in ("detached", "tearing_down")

    def _trace(self, t: float, kind: str, **detail) -> None:
        self._fx.trace.append(TraceEvent(t, self.id, kind, detail))

    def _send(self, msg: Message) -> None:
        self._fx.messages.append(msg)

    def _cmd(self, t: float, kind: str) -> None:
        self._fx.commands.append(kind)
        self._trace(t, "cellular", command=kind)

    def _arm(self, which: str, at: float) -> None:
        s = self.state
        token = s.tokens.get(which, 0) + 1
        s.tokens[which] = token
        s.next_fire[which] = at
        self._fx.timers.append((which, at, token))

    def _disarm(self, which: str) -> None:
        s = self.state
        if which in s.next_fire:
            s.tokens[which] = s.tokens.get(which, 0) + 1
            del s.next_fire[which]

    def _set_fsm(self, t: float, new: Role, symbol: str, **detail) -> None:
        old = self.state.fsm
        if old is new:
            return
        self.state.fsm = new
        self._trace(t, "fsm_transition", event=symbol, **{"from": old.value, "to": new.value}, **detail)

    def _self_entry(self, role: Role) -> NetworkTableEntry:
        s = self.state
        return NetworkTableEntry(s.me, s.session_ip, s.position, role, s.score)

    def _peers(self) -> list[str]:
        return self.state.table.peers(self.id)

    def _scores(self) -> dict[str, float]:
        return {e.id: e.score for e in self.state.table}

    # -------------------------------------------------------------- processes

    def _suspend(self) -> None:
        for which in PERIODIC + ("association", "transition"):
            self._disarm(which)
        self.state.in_network = False

    def _start_processes(self, t: float, est_perf: Optional[float] = None,
                         est_sel: Optional[float] = None) -> None:
        s = self.state
        tm = s.timers
        s.in_network = True
        s.pending_transition = None
        s.checking = None
        for peer in self._peers():
            s.heartbeats.last_seen[peer] = max(t, s.heartbeats.last_seen.get(peer, t))
        for mid in list(s.heartbeats.last_seen):
            if mid not in s.table:
                s.heartbeats.forget(mid)
        self._arm("heartbeat", t + tm.t_heartbeat)
        self._arm("evaluation", t + (tm.t_performance if est_perf is None else est_perf))
        self._arm("selection", t + (tm.t_selection if est_sel is None else est_sel))
        self._arm_monitor(t)

    def _arm_monitor(self, t: float) -> None:
        s = self.state
        timeout = s.timers.heartbeat_timeout
        deadlines = []
        for peer in self._peers():
            seen = s.heartbeats.last_seen.get(peer)
            if seen is None or peer == s.checking:
                continue
            d = _strictly_after(seen, timeout)
            # overdue peers that were left alone get another look one period on
            deadlines.append(d if d > t else t + s.timers.t_heartbeat)
        if deadlines:
            self._arm("monitor", min(deadlines))
        else:
            self._disarm("monitor")

    # -------------------------------------------------------------- commands

    def _on_command(self, ev: Command) -> None:
        s = self.state
        t = ev.t
        if ev.kind == "boot":
            if s.fsm is not Role.NULL or s.joining is not None:
                return
            s.joining, s.entry_cause, s.score = "E_I", "initial", s.boot_score
            if s.boot_score == 100:
                s.attach = "starting_host"
                self._cmd(t, "start_core_ran")
            else:
                self._arm("boot", t + self.config.boot_follower_wait)
        elif ev.kind in ("enter", "recover"):
            if s.fsm is not Role.NULL or s.joining is not None:
                return
            s.joining = "E_E" if ev.kind == "enter" else "E_R"
            s.entry_cause = "initial" if ev.kind == "enter" else "reconnection"
            s.score = 0.0
            s.my_score = None
            self._begin_attach(t)
        elif ev.kind == "exit":
            if s.fsm is Role.NULL:
                if s.joining is not None:
                    self._go_null(t)
                return
            self._exit(t, "normal")
        else:
            raise ValueError(f"unknown command {ev.kind!r}")

    def _begin_attach(self, t: float) -> None:
        self.state.attach = "attaching"
        self._cmd(t, "attach_ue")

    def _exit(self, t: float, cause: str) -> None:
        s = self.state
        for peer in self._peers():
            self._send(ExitNotification(self.id, peer, t, s.fsm, cause))
        self._set_fsm(t, Role.NULL, "E_X", cause=cause)
        self._go_null(t)

    def _go_null(self, t: float) -> None:
        s = self.state
        self._suspend()
        for which in ("boot", "attach_retry"):
            self._disarm(which)
        if s.attach in ("hosting", "starting_host"):
            self._cmd(t, "stop_core_ran")
            s.attach = "tearing_down"
        elif s.attach in ("attached", "attaching"):
            self._cmd(t, "detach_ue")
            s.attach = "detached"
        s.session_ip = None
        s.host = None
        s.table = NetworkTable()
        s.heartbeats = HeartbeatRecords()
        s.pending_transition = None
        s.joining = None
        s.checking = None
        s.clearing = False
        s.awaiting_reply = False

    # -------------------------------------------------------------- health

    def _on_health(self, ev: HealthSample) -> None:
        s = self.state
        s.position = ev.position
        s.resources = ev.resources
        s.velocity = tuple(ev.velocity)
        heading = ev.heading % 360.0
        s.heading = 0.0 if heading >= 360.0 else heading
        self.proactive_health_monitor(ev.t)

    def proactive_health_monitor(self, t: float) -> Optional[ExitNotification]:
        s = self.state
        if s.fsm is not Role.LEADER or not s.in_network:
            return None
        r = s.resources
        floor = self.config.critical_floor
        if min(r.memory_pct, r.battery_pct, r.processor_pct) < floor:
            before = len(self._fx.messages)
            self._exit(t, "failure_alert")
            sent = self._fx.messages[before:]
            return sent[0] if sent else ExitNotification(self.id, "*", t, Role.LEADER, "failure_alert")
        return None

    # -------------------------------------------------------------- timers

    def _on_timer(self, ev: TimerFired) -> None:
        s = self.state
        if s.tokens.get(ev.which) != ev.token:
            return
        s.next_fire.pop(ev.which, None)
        t = ev.t
        which = ev.which
        if which == "evaluation":
            self.evaluation_tick(t)
            return
        self._trace(t, "timer_fired", which=which)
        if which == "boot":
            self._begin_attach(t)
        elif which == "attach_retry":
            if s.attach == "detached":
                self._begin_attach(t)
        elif which == "heartbeat":
            self.heartbeat_tick(t)
        elif which == "selection":
            self.selection_tick(t)
        elif which == "monitor":
            self._monitor(t)
        elif which == "association":
            self._association_timeout(t)
        elif which == "transition":
            self._execute_transition(t)

    def heartbeat_tick(self, t: float) -> list[HeartbeatNotification]:
        s = self.state
        if s.fsm is Role.NULL or not s.in_network:
            return []
        if self.id in s.table:
            s.table.update(self.id, coords=s.position)
        vn, ve, vd = s.velocity
        cfg = self.config
        status = 1 if s.attach in ("attached", "hosting") else 0
        out = []
        for peer in self._peers():
            msg = HeartbeatNotification(
                self.id, peer, t, status, cfg.vehicle_type, cfg.autopilot, cfg.base_mode,
                cfg.system_status, vn, ve, vd, s.position.x, s.position.y, s.position.z,
                s.heading,
            )
            self._send(msg)
            out.append(msg)
        self._arm("heartbeat", t + s.timers.t_heartbeat)
        return out

    def evaluation_tick(self, t: float) -> ScoreBreakdown:
        s = self.state
        positions = [s.position if e.id == self.id else e.coords for e in s.table]
        if self.id not in s.table:
            positions.append(s.position)
        com = center_of_mass(positions)
        breakdown = aggregate_score(s.position, com, s.resources, self.config.scoring)
        s.my_score = breakdown
        s.score = breakdown.total
        self._trace(t, "timer_fired", which="evaluation", score=breakdown.total,
                    sp=breakdown.sp, cc=breakdown.cc)
        if s.attach in ("attached", "hosting"):
            # cut off from the others, a fresh self score would only make the
            # tables disagree at the next emergency election
            if self.id in s.table:
                s.table.update(self.id, score=breakdown.total, coords=s.position)
            for peer in self._peers():
                self._send(PerformanceReport(self.id, peer, t, breakdown.total))
        self._arm("evaluation", t + s.timers.t_performance)
        return breakdown

    def _margin_ok(self, top: NetworkTableEntry, leader: NetworkTableEntry) -> bool:
        thres = self.config.scoring.score_thres
        policy = self.config.selection_policy
        if policy == "leader_margin":
            return top.score - leader.score > thres
        if policy == "second_best_gap":
            second = self.state.table.argmax(exclude=[top.id])
            return second is None or top.score - second.score > thres
        return top.score > thres

    def selection_tick(self, t: float) -> Optional[TransitionRequest]:
        s = self.state
        self._arm("selection", t + s.timers.t_selection)
        top = s.table.argmax()
        leader = s.table.leader()
        if top is None or leader is None or top.id != self.id or leader.id == self.id:
            return None
        if not self._margin_ok(top, leader):
            return None
        req = TransitionRequest(self.id, leader.id, t, top.score, "scheduled", "", "")
        self._send(req)
        self._trace(t, "election", candidate=self.id, outcome="requested", scores=self._scores())
        return req

    def _monitor(self, t: float) -> None:
        s = self.state
        suspects = detect_failures(s.table, s.heartbeats, t, s.timers.heartbeat_timeout, self.id)
        leader_overdue = any(kind == "leader_suspect" for _, kind in suspects)
        # A follower only judges its peers while its own path through the
        # leader works; otherwise silence says nothing about them.
        judge_peers = s.fsm is Role.LEADER or (
            s.attach == "attached" and not leader_overdue and s.checking is None)
        for mid, kind in suspects:
            if kind == "follower_failure":
                if not judge_peers:
                    continue
                s.table.remove(mid)
                s.heartbeats.forget(mid)
                self._trace(t, "suspect", target=mid, classification=kind)
            elif s.checking is None:
                self._trace(t, "suspect", target=mid, classification=kind)
                self._start_check(t, mid)
        self._arm_monitor(t)

    def _start_check(self, t: float, target: str) -> None:
        s = self.state
        s.checking = target
        s.check_failures = 0
        self._cmd(t, "cellular_check")

    def _association_timeout(self, t: float) -> None:
        s = self.state
        if not s.awaiting_reply or s.checking is not None:
            return
        target = s.host
        if target is None and s.pending_transition is not None:
            target = s.pending_transition.candidate_id
        if target is None and s.table.leader() is not None:
            target = s.table.leader().id
        self._trace(t, "suspect", target=target, classification="association_timeout")
        if target is None or target == self.id:
            s.awaiting_reply = False
            self._begin_attach(t)
            return
        self._start_check(t, target)

    # -------------------------------------------------------------- signals

    def _on_signal(self, ev: CellularSignal) -> None:
        s = self.state
        t = ev.t
        self._trace(t, "cellular", signal=ev.kind,
                    **({"ip": str(ev.ip)} if ev.ip is not None else {}),
                    **({"host": ev.host} if ev.host is not None else {}))
        kind = ev.kind
        if kind == "stack_ready":
            self._on_stack_ready(t, ev)
        elif kind == "host_conflict":
            if s.attach == "starting_host":
                s.attach = "detached"
                self._begin_attach(t)
        elif kind == "teardown_done":
            if s.attach == "tearing_down":
                s.attach = "detached"
                p = s.pending_transition
                if s.fsm is Role.FOLLOWER:
                    if p is not None and p.candidate_id == self.id:
                        s.attach = "starting_host"
                        self._cmd(t, "start_core_ran")
                    else:
                        self._begin_attach(t)
        elif kind == "rrc_connected":
            self._on_connected(t, ev)
        elif kind in ("rrc_failed", "nas_failed"):
            if s.attach != "attaching":
                return
            s.attach = "detached"
            p = s.pending_transition
            if p is not None and p.candidate_id != self.id:
                self._trace(t, "election", candidate=p.candidate_id, outcome="stalled")
                self._emergency(t, p.candidate_id)
            elif p is not None and s.fsm is Role.FOLLOWER:
                # we stood down for a host that has since vanished
                s.attach = "starting_host"
                self._cmd(t, "start_core_ran")
            else:
                self._arm("attach_retry", t + self.config.attach_retry)
        elif kind == "ss_lost":
            if s.attach == "attached":
                s.attach = "detached"
                s.host = None
        elif kind == "check_report":
            self._on_check(t, ev.report)

    def _on_stack_ready(self, t: float, ev: CellularSignal) -> None:
        s = self.state
        if s.attach != "starting_host":
            return
        s.attach = "hosting"
        s.session_ip = ev.ip if ev.ip is not None else host_address(self.config.subnet)
        s.host = self.id
        s.clearing = False
        if s.fsm is Role.NULL:
            s.joining = None
            self._set_fsm(t, Role.LEADER, "E_I")
            s.table = NetworkTable()
        else:
            self._set_fsm(t, Role.LEADER, "E_LS")
        s.table.upsert(self._self_entry(Role.LEADER))
        s.table.set_leader(self.id)
        s.awaiting_reply = False
        self._disarm("attach_retry")
        s.heartbeats = HeartbeatRecords({p: t for p in self._peers()})
        s.timers = self.config.timers
        self._start_processes(t)

    def _on_connected(self, t: float, ev: CellularSignal) -> None:
        s = self.state
        if s.attach != "attaching":
            return
        s.attach = "attached"
        s.session_ip = ev.ip
        s.host = ev.host
        if s.fsm is Role.NULL:
            symbol = s.joining or "E_E"
            s.joining = None
            self._set_fsm(t, Role.FOLLOWER, symbol)
        own = s.table.get(self.id)
        if own is None:
            s.table.upsert(self._self_entry(Role.FOLLOWER))
        else:
            s.table.upsert(replace(own, session_ip=s.session_ip, role=Role.FOLLOWER))
        if s.host is None:
            return
        self._send(EntryNotification(
            self.id, s.host, t, s.me.imei or "000000000000000", Role.FOLLOWER, s.score,
            s.session_ip, s.position.x, s.position.y, s.position.z, s.entry_cause,
        ))
        s.awaiting_reply = True
        self._arm("association", t + self.config.association_bound)

    def _on_check(self, t: float, report) -> None:
        s = self.state
        if s.clearing:
            p = s.pending_transition
            if p is None or p.candidate_id != self.id:
                s.clearing = False
                return
            if report.ss_visible:
                s.clear_checks += 1
                if s.clear_checks >= self.config.host_clear_attempts:
                    s.clearing = False
                    self._begin_attach(t)
                else:
                    self._cmd(t, "cellular_check")
            else:
                s.clearing = False
                s.attach = "starting_host"
                self._cmd(t, "start_core_ran")
            return
        if s.checking is None:
            return
        target = s.checking
        if not report.ss_visible:
            self._confirm_failure(t, target, reason="ss_lost")
        elif not (report.rrc_ok and report.nas_ok):
            s.check_failures += 1
            if s.check_failures >= self.config.check_attempts:
                self._confirm_failure(t, target, reason="rrc_nas")
            else:
                self._cmd(t, "cellular_check")
        else:
            # the network is up: reconnect instead of electing
            s.checking = None
            if target in s.table:
                s.heartbeats.saw(target, t)
            self._trace(t, "suspect", target=target, classification="cleared")
            self._disarm("association")
            s.awaiting_reply = False
            self._begin_attach(t)
            self._arm_monitor(t)

    def _confirm_failure(self, t: float, target: str, reason: str) -> None:
        self.state.checking = None
        self._trace(t, "suspect", target=target, classification="confirmed", reason=reason)
        self._emergency(t, target)

    # -------------------------------------------------------------- messages

    def _on_message(self, t: float, msg: Message) -> None:
        s = self.state
        try:
            validate(msg)
        except ValueError as exc:
            self._trace(t, "msg_dropped", reason=f"invalid: {exc}", type=msg.type_name)
            return
        src = msg.source_machine_id
        if s.fsm is Role.NULL:
            self._trace(t, "msg_dropped", reason="not in network", type=msg.type_name)
            return
        if isinstance(msg, HeartbeatNotification):
            if src not in s.table:
                self._trace(t, "msg_dropped", reason="unknown sender", type=msg.type_name)
                return
            s.heartbeats.saw(src, t)
            s.table.update(src, coords=msg.position)
        elif isinstance(msg, PerformanceReport):
            if src not in s.table:
                self._trace(t, "msg_dropped", reason="unknown sender", type=msg.type_name)
                return
            s.table.update(src, score=msg.performance_score)
        elif isinstance(msg, EntryNotification):
            if s.fsm is Role.LEADER:
                self.leader_on_entry(t, msg)
            elif src != self.id:
                self._learn_entry(t, msg)
        elif isinstance(msg, EntryNotificationReply):
            if s.awaiting_reply and src == s.host:
                self.on_association(t, msg)
            else:
                self._trace(t, "msg_dropped", reason="unexpected reply", type=msg.type_name)
        elif isinstance(msg, ExitNotification):
            self._on_exit_notice(t, msg)
        elif isinstance(msg, TransitionRequest):
            if s.fsm is Role.LEADER:
                self.leader_on_transition_request(t, msg)
        elif isinstance(msg, TransitionAlert):
            self._on_alert(t, msg)
        elif isinstance(msg, TransitionFailure):
            self._trace(t, "election", candidate=self.id, outcome=f"rejected:{msg.failure_cause}")

    def _entry_from(self, msg: EntryNotification) -> NetworkTableEntry:
        return NetworkTableEntry(
            MachineId(msg.source_machine_id, msg.imei), msg.ip_address,
            Position(msg.gps_x, msg.gps_y, msg.gps_z), Role.FOLLOWER, msg.performance,
        )

    def _learn_entry(self, t: float, msg: EntryNotification) -> None:
        s = self.state
        if not validate_reentry(msg):
            self._trace(t, "msg_dropped", reason="reentry with nonzero score", type=msg.type_name)
            return
        s.table.upsert(self._entry_from(msg))
        s.heartbeats.saw(msg.source_machine_id, t)
        if s.in_network and "monitor" not in s.next_fire:
            self._arm_monitor(t)

    def leader_on_entry(self, t: float, msg: EntryNotification) -> list[Message]:
        s = self.state
        src = msg.source_machine_id
        if not validate_reentry(msg):
            self._trace(t, "msg_dropped", reason="reentry with nonzero score", type=msg.type_name)
            return []
        if not s.in_network:
            self._trace(t, "msg_dropped", reason="leader busy", type=msg.type_name)
            return []
        s.table.upsert(self._entry_from(msg))
        s.heartbeats.last_seen[src] = max(t, s.heartbeats.last_seen.get(src, t))
        tm = s.timers
        est_perf = min(max(s.next_fire.get("evaluation", t) - t, 0.0), tm.t_performance)
        est_sel = min(max(s.next_fire.get("selection", t) - t, 0.0), tm.t_selection)
        reply = EntryNotificationReply(
            self.id, src, t, tm.t_selection, tm.t_heartbeat, tm.t_performance,
            est_perf, est_sel, tuple(s.table.entries[k] for k in sorted(s.table.entries)),
        )
        out: list[Message] = [reply]
        for peer in self._peers():
            if peer != src:
                out.append(replace(msg, destination_machine_id=peer))
        for m in out:
            self._send(m)
        if "monitor" not in s.next_fire:
            self._arm_monitor(t)
        return out

    def on_association(self, t: float, reply: EntryNotificationReply) -> None:
        s = self.state
        s.timers = TimerConfig(
            t_heartbeat=reply.heartbeat_timer_interval,
            t_performance=reply.evaluation_timer_interval,
            t_selection=reply.selection_timer_interval,
            heartbeat_timeout_factor=self.config.timers.heartbeat_timeout_factor,
        )
        table = NetworkTable()
        for entry in reply.network_table_entries:
            if entry.id != self.id:
                table.upsert(entry)
        table.upsert(self._self_entry(Role.FOLLOWER))
        s.table = table
        s.awaiting_reply = False
        s.entry_cause = "initial"
        self._disarm("association")
        self._disarm("attach_retry")
        self._trace(t, "association", leader=reply.source_machine_id, size=len(table))
        self._start_processes(t, reply.estimated_performance, reply.estimated_leader_selection)

    def _on_exit_notice(self, t: float, msg: ExitNotification) -> None:
        s = self.state
        src = msg.source_machine_id
        if src not in s.table:
            return
        leader = s.table.leader()
        if leader is not None and leader.id == src and s.fsm is Role.FOLLOWER:
            self._trace(t, "suspect", target=src, classification="leader_exit", cause=msg.cause)
            self._emergency(t, src)
        else:
            s.table.remove(src)
            s.heartbeats.forget(src)

    # -------------------------------------------------------------- transitions

    def leader_on_transition_request(
        self, t: float, req: TransitionRequest
    ) -> Union[TransitionAlert, TransitionFailure, None]:
        s = self.state
        src = req.source_machine_id
        entry = s.table.get(src)
        cause = None
        if s.pending_transition is not None or not s.in_network:
            cause = "busy"
        elif entry is None or abs(entry.score - req.candidate_score) > 1e-9:
            cause = "illegitimate"
        elif s.table.argmax().id != src:
            cause = "not_top_score"
        if src == self.id:
            return None
        if cause is not None:
            fail = TransitionFailure(self.id, src, t, cause, "next_selection_cycle", "none", "")
            self._send(fail)
            self._trace(t, "election", candidate=src, outcome=f"rejected:{cause}", scores=self._scores())
            return fail
        start = t + self.config.transition_grace
        alerts = [TransitionAlert(self.id, peer, t, src, start, "") for peer in self._peers()]
        for a in alerts:
            self._send(a)
        self._trace(t, "election", candidate=src, outcome="approved", scores=self._scores())
        s.pending_transition = PendingTransition(src, start, "scheduled")
        self._suspend()
        if start <= t:
            self._execute_transition(t)
        else:
            self._arm("transition", start)
        return alerts[0] if alerts else None

    def _on_alert(self, t: float, alert: TransitionAlert) -> None:
        s = self.state
        leader = s.table.leader()
        if s.fsm is not Role.FOLLOWER or leader is None or leader.id != alert.source_machine_id:
            self._trace(t, "msg_dropped", reason="illegitimate alert", type=alert.type_name)
            return
        if alert.approved_candidate_id not in s.table:
            self._trace(t, "msg_dropped", reason="unknown candidate", type=alert.type_name)
            return
        s.pending_transition = PendingTransition(
            alert.approved_candidate_id, alert.transition_start_time, "scheduled")
        self._suspend()
        s.checking = None
        s.awaiting_reply = False
        s.table.set_leader(alert.approved_candidate_id, clear_ips=True)
        if s.attach in ("attached", "attaching"):
            self._cmd(t, "detach_ue")
            s.attach = "detached"
        s.session_ip = None
        s.host = None
        if alert.transition_start_time <= t:
            self._execute_transition(t)
        else:
            self._arm("transition", alert.transition_start_time)

    def _execute_transition(self, t: float) -> list[str]:
        s = self.state
        p = s.pending_transition
        if p is None:
            return []
        before = len(self._fx.commands)
        if s.fsm is Role.LEADER:
            self._set_fsm(t, Role.FOLLOWER, "E_LS")
            s.table.set_leader(p.candidate_id, clear_ips=True)
            s.session_ip = None
            s.host = None
            s.attach = "tearing_down"
            self._cmd(t, "stop_core_ran")
        elif p.candidate_id == self.id:
            if s.attach in ("attached", "attaching"):
                self._cmd(t, "detach_ue")
            s.attach = "detached"
            s.session_ip = None
            s.host = None
            s.clearing = True
            s.clear_checks = 0
            self._cmd(t, "cellular_check")
        else:
            s.session_ip = None
            s.host = None
            self._begin_attach(t)
        return self._fx.commands[before:]

    def emergency_selection(self, t: float, failed: str) -> list[str]:
        before = len(self._fx.commands)
        self._emergency(t, failed)
        return self._fx.commands[before:]

    def _emergency(self, t: float, failed: str) -> None:
        s = self.state
        if s.fsm is not Role.FOLLOWER:
            return
        s.table.remove(failed)
        s.heartbeats.forget(failed)
        s.checking = None
        s.awaiting_reply = False
        s.clearing = False
        if self.id not in s.table:
            s.table.upsert(self._self_entry(Role.FOLLOWER))
        best = s.table.argmax()
        self._trace(t, "election", candidate=best.id, outcome="emergency", failed=failed,
                    scores=self._scores())
        self._suspend()
        s.pending_transition = PendingTransition(best.id, t, "emergency")
        s.table.set_leader(best.id, clear_ips=True)
        s.session_ip = None
        s.host = None
        if best.id == self.id:
            if s.attach == "tearing_down":
                return  # start once teardown completes
            if s.attach in ("attached", "attaching"):
                self._cmd(t, "detach_ue")
            s.attach = "starting_host"
            self._cmd(t, "start_core_ran")
        elif s.attach != "tearing_down":
            self._begin_attach(t)

    # -------------------------------------------------------------- invariants

    def violations(self) -> list[str]:
        s = self.state
        problems = []
        host_ip = self._host_ip
        if s.fsm is Role.LEADER and not (s.attach == "hosting" and s.session_ip == host_ip):
            problems.append(f"{self.id}: Leader without hosting at .1")
        if s.fsm is Role.FOLLOWER and s.attach == "attached" and s.session_ip == host_ip:
            problems.append(f"{self.id}: Follower holding the host address")
        if s.pending_transition is not None and any(w in s.next_fire for w in PERIODIC[:3]):
            problems.append(f"{self.id}: periodic timers armed during a transition")
        return problems
