"""Discrete-event loop: scheduler, world bodies, fault injection, invariants."""
from __future__ import annotations

import heapq
import itertools
import math
import random
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from ..cellsim import AlreadyHosting, CellularSignal, NotAttached, RadioDomain
from ..controller import (
    ALLOWED_TRANSITIONS,
    Command,
    Controller,
    Effects,
    HealthSample,
    MessageReceived,
    TimerFired,
)
from ..domain import Position, ResourceProfile, Role, validate_table
from ..messages import decode, encode
from .metrics import MetricsRecorder, RunMetrics
from .scenario import RESOURCE_FIELDS, ScenarioConfig, TimelineAction
from .trace import WORLD, TraceEvent

HEALTH_PERIOD = 1.0


class Scheduler:
    """Min-heap keyed by (time, machine, insertion order).

    World events use the empty machine key so they run before any machine
    event scheduled for the same instant.
    """

    def __init__(self):
        self._heap: list = []
        self._seq = itertools.count()
        self.now = 0.0

    def schedule(self, t: float, machine: str, fn: Callable[[float], None]) -> None:
        if t < self.now:
            t = self.now
        heapq.heappush(self._heap, (t, machine, next(self._seq), fn))

    def pop(self, until: float):
        if not self._heap or self._heap[0][0] > until:
            return None
        t, _, _, fn = heapq.heappop(self._heap)
        self.now = t
        return t, fn

    def __len__(self) -> int:
        return len(self._heap)


@dataclass
class _Ramp:
    start: float
    end: float
    v0: float
    v1: float

    def value(self, t: float) -> float:
        if t >= self.end:
            return self.v1
        if t <= self.start:
            return self.v0
        return self.v0 + (self.v1 - self.v0) * (t - self.start) / (self.end - self.start)


@dataclass
class Body:
    """Kinematic and resource state of one machine, integrated lazily."""

    position: Position
    velocity: tuple[float, float, float]
    levels: dict[str, _Ramp]
    since: float = 0.0

    @classmethod
    def create(cls, position: Position, velocity, resources: ResourceProfile) -> "Body":
        vals = (resources.memory_pct, resources.battery_pct, resources.processor_pct)
        return cls(position, tuple(velocity),
                   {k: _Ramp(0.0, 0.0, v, v) for k, v in zip(RESOURCE_FIELDS, vals)})

    def position_at(self, t: float) -> Position:
        dt = t - self.since
        vn, ve, vd = self.velocity
        return self.position.translated(vn * dt, ve * dt, -vd * dt)

    def set_velocity(self, t: float, v) -> None:
        self.position = self.position_at(t)
        self.since = t
        self.velocity = tuple(float(c) for c in v)

    def resources_at(self, t: float) -> ResourceProfile:
        m, b, p = (min(100.0, max(0.0, self.levels[k].value(t))) for k in RESOURCE_FIELDS)
        return ResourceProfile(m, b, p)

    def set_level(self, t: float, name: str, value: float) -> None:
        self.levels[name] = _Ramp(t, t, value, value)

    def ramp(self, t: float, name: str, v0: float, v1: float, over: float) -> None:
        self.levels[name] = _Ramp(t, t + over, v0, v1)


@dataclass
class RunResult:
    trace: list[TraceEvent]
    metrics: RunMetrics
    violations: list[str] = field(default_factory=list)
    controllers: dict[str, Controller] = field(default_factory=dict)
    radio: Optional[RadioDomain] = None


class Simulation:
    def __init__(self, config: ScenarioConfig, seed: Optional[int] = None,
                 until: Optional[float] = None, check_every_event: bool = True):
        if seed is not None:
            config = config.with_seed(seed)
        self.config = config.resolved()
        self.until = min(until, self.config.duration) if until is not None else self.config.duration
        self.check_every_event = check_every_event
        self.sched = Scheduler()
        self.trace: list[TraceEvent] = []
        self.violations: list[str] = []
        self.ctrl_config = self.config.machine_controller_config()
        self.radio = RadioDomain(
            schedule=self.sched.schedule,
            notify=self._notify,
            subnet=self.config.subnet,
            delays=self.config.stack_delays,
            link=self.config.link,
            rng=random.Random(self.config.seed),
        )
        self.specs = {m.id: m for m in self.config.machines}
        self.bodies = {m.id: Body.create(m.position, m.velocity, m.resources) for m in self.config.machines}
        self.controllers = {mid: self._fresh(mid, 0.0) for mid in self.specs}
        self.generation = {mid: 0 for mid in self.specs}
        self.alive = set(self.specs)
        self.metrics = MetricsRecorder(self.config, self.until)
        self._sink: Optional[Callable[[TraceEvent], None]] = None

    # ------------------------------------------------------------ setup

    def _fresh(self, mid: str, t: float) -> Controller:
        spec = self.specs[mid]
        body = self.bodies[mid]
        return Controller(spec.machine, self.ctrl_config, boot_score=spec.boot_score,
                          position=body.position_at(t), resources=body.resources_at(t))

    def on_trace(self, sink: Callable[[TraceEvent], None]) -> None:
        self._sink = sink

    def _emit(self, ev: TraceEvent) -> None:
        self.trace.append(ev)
        self.metrics.observe(ev)
        if self._sink is not None:
            self._sink(ev)

    # ------------------------------------------------------------ run

    def run(self) -> RunResult:
        for mid in sorted(self.specs):
            if self.specs[mid].boot:
                self._dispatch_at(0.0, mid, lambda t, m=mid: Command(t, "boot"))
        for action in self.config.timeline:
            self.sched.schedule(action.at, "", lambda t, a=action: self._apply(t, a))
        self.sched.schedule(HEALTH_PERIOD, "", self._health_tick)
        while True:
            item = self.sched.pop(self.until)
            if item is None:
                break
            t, fn = item
            fn(t)
        for ev in self.metrics.close(self.until):
            self._emit(ev)
        return RunResult(self.trace, self.metrics.result(), self.violations,
                         self.controllers, self.radio)

    # ------------------------------------------------------------ dispatch

    def _dispatch_at(self, t: float, mid: str, make: Callable[[float], object],
                     refresh: bool = True) -> None:
        gen = self.generation[mid]

        def fire(now: float) -> None:
            if self.generation[mid] != gen or mid not in self.alive:
                return
            self._deliver(now, mid, make(now), refresh)

        self.sched.schedule(t, mid, fire)

    def _deliver(self, t: float, mid: str, event, refresh: bool = True) -> None:
        ctrl = self.controllers[mid]
        if refresh:
            self._process(mid, ctrl.handle_event(self._health(t, mid)))
            if self.controllers[mid] is not ctrl:
                return
        self._process(mid, ctrl.handle_event(event))

    def _health(self, t: float, mid: str) -> HealthSample:
        body = self.bodies[mid]
        return HealthSample(t, body.resources_at(t), body.position_at(t), body.velocity,
                            _heading(body.velocity))

    def _health_tick(self, t: float) -> None:
        for mid in sorted(self.alive):
            ctrl = self.controllers[mid]
            self._process(mid, ctrl.handle_event(self._health(t, mid)))
        self.sched.schedule(t + HEALTH_PERIOD, "", self._health_tick)

    def _notify(self, mid: str, signal: CellularSignal) -> None:
        self._dispatch_at(signal.t, mid, lambda t, s=signal: replace(s, t=t), refresh=False)

    def _process(self, mid: str, fx: Effects) -> None:
        t = self.sched.now
        for ev in fx.trace:
            self._emit(ev)
            if ev.kind == "fsm_transition":
                self._check_transition(ev)
        for msg in fx.messages:
            self._send(t, mid, msg)
        for cmd in fx.commands:
            self._command(t, mid, cmd)
        for which, at, token in fx.timers:
            self._dispatch_at(at, mid, lambda now, w=which, k=token: TimerFired(now, w, k))
        if self.check_every_event:
            self._check(t, only=mid)
        self.metrics.after_event(t, self.controllers, self.alive, self._emit)

    # ------------------------------------------------------------ transport

    def _send(self, t: float, mid: str, msg) -> None:
        data = encode(msg)
        dst = msg.destination_machine_id
        res = self.radio.send(mid, dst, t)
        if res.deliver_at is None:
            self._emit(TraceEvent(t, mid, "msg_dropped",
                                  {"type": msg.type_name, "to": dst, "reason": res.reason}))
            return
        self._emit(TraceEvent(t, mid, "msg_sent",
                              {"type": msg.type_name, "to": dst, "payload": data.decode()}))
        via = res.via

        def arrive(now: float) -> None:
            why = self.radio.deliverable(mid, dst, via)
            if not why and dst not in self.alive:
                why = "receiver down"
            if why:
                self._emit(TraceEvent(now, dst, "msg_dropped",
                                      {"type": msg.type_name, "from": mid, "reason": why}))
                return
            received = decode(data)
            self._emit(TraceEvent(now, dst, "msg_received", {"type": msg.type_name, "from": mid}))
            self._deliver(now, dst, MessageReceived(now, received))

        self.sched.schedule(res.deliver_at, dst, arrive)

    def _command(self, t: float, mid: str, cmd: str) -> None:
        radio = self.radio
        if cmd == "start_core_ran":
            try:
                radio.start_core_ran(mid, t)
            except (AlreadyHosting, NotAttached) as exc:
                self._emit(TraceEvent(t, mid, "cellular", {"refused": cmd, "reason": str(exc)}))
                self._notify(mid, CellularSignal(t, "host_conflict"))
        elif cmd == "stop_core_ran":
            radio.stop_core_ran(mid, t)
        elif cmd == "attach_ue":
            try:
                radio.attach_ue(mid, t)
            except AlreadyHosting as exc:
                self.violations.append(f"t={t}: {mid} attach while hosting: {exc}")
        elif cmd == "detach_ue":
            radio.detach_ue(mid, t)
        elif cmd == "cellular_check":
            at = t + self.config.stack_delays.probe_time
            self._dispatch_at(at, mid, lambda now: CellularSignal(
                now, "check_report", report=self.radio.cellular_check(mid)), refresh=False)
        else:
            raise ValueError(f"unknown cellular command {cmd!r}")

    # ------------------------------------------------------------ world

    def _apply(self, t: float, a: TimelineAction) -> None:
        mid = a.machine
        body = self.bodies.get(mid) if mid else None
        if a.action == "set_velocity":
            body.set_velocity(t, (a.args["vn"], a.args["ve"], a.args["vd"]))
        elif a.action == "set_resources":
            for k in RESOURCE_FIELDS:
                body.set_level(t, k, float(a.args[k]))
        elif a.action == "ramp_resources":
            body.ramp(t, a.args["field"], float(a.args["from"]), float(a.args["to"]), float(a.args["over"]))
        elif a.action == "inject_fault":
            self._fault(t, a.args["fault"], mid)
        elif a.action == "command":
            self._emit(TraceEvent(t, mid, "command", {"kind": a.args["kind"]}))
            if mid in self.alive:
                self._deliver(t, mid, Command(t, a.args["kind"]))
        self._check(t)

    def _fault(self, t: float, fault: str, mid: Optional[str]) -> None:
        self._emit(TraceEvent(t, mid or WORLD, "fault", {"fault": fault}))
        if fault == "kill":
            if mid not in self.alive:
                return
            ctrl = self.controllers[mid]
            self.radio.kill(mid, t)
            self.alive.discard(mid)
            self.generation[mid] += 1
            self.metrics.killed(t, mid)
            if ctrl.state.fsm is not Role.NULL:
                ev = TraceEvent(t, mid, "fsm_transition",
                                {"event": "E_F", "from": ctrl.state.fsm.value, "to": Role.NULL.value})
                self._emit(ev)
                self._check_transition(ev)
            self.controllers[mid] = self._fresh(mid, t)
        elif fault == "restore":
            if mid is None:
                self.radio.restore(None, t)
                return
            was_dead = mid not in self.alive
            self.radio.restore(mid, t)
            if was_dead:
                self.alive.add(mid)
                self.controllers[mid] = self._fresh(mid, t)
                self._deliver(t, mid, Command(t, "recover"))
        elif fault == "ss_blackout":
            self.radio.set_blackout(mid, t)
        elif fault == "drop_all_from":
            self.radio.drop_all_from(mid)

    # ------------------------------------------------------------ invariants

    def _violate(self, t: float, what: str) -> None:
        self.violations.append(f"t={t:.6f}: {what}")

    def _check_transition(self, ev: TraceEvent) -> None:
        d = ev.detail
        try:
            key = (d["event"], Role(d["from"]), Role(d["to"]))
        except (KeyError, ValueError):
            self._violate(ev.t, f"{ev.machine}: malformed fsm_transition {d}")
            return
        if key not in ALLOWED_TRANSITIONS:
            self._violate(ev.t, f"{ev.machine}: transition {key[1].value}->{key[2].value} via {key[0]} not allowed")

    def _check(self, t: float, only: Optional[str] = None) -> None:
        leaders = [mid for mid in sorted(self.alive) if self.controllers[mid].state.fsm is Role.LEADER]
        if len(leaders) > 1:
            self._violate(t, f"multiple hosting leaders {leaders}")
        host = self.radio.live_host()
        if leaders and self.radio.ready_host() != leaders[0]:
            self._violate(t, f"leader {leaders[0]} is not the radio host ({host})")
        for mid in sorted(self.alive) if only is None else [only]:
            if mid not in self.alive:
                continue
            ctrl = self.controllers[mid]
            for problem in validate_table(ctrl.state.table, self.config.subnet):
                self._violate(t, f"{mid}: {problem}")
            for problem in ctrl.violations():
                self._violate(t, problem)
        for problem in self.radio.check_invariants():
            self._violate(t, problem)


def _heading(v) -> float:
    """Course over ground in degrees clockwise from north."""
    vn, ve, _ = v
    if vn == 0 and ve == 0:
        return 0.0
    h = math.degrees(math.atan2(ve, vn)) % 360.0
    return 0.0 if h >= 360.0 else h


def run(config: ScenarioConfig, seed: Optional[int] = None, until: Optional[float] = None) -> RunResult:
    return Simulation(config, seed=seed, until=until).run()
