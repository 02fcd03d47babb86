"""Run metrics: reorganizations, leader tenure, message counts."""
from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

from ..domain import Role
from .trace import WORLD, TraceEvent


@dataclass(frozen=True)
class Reorganization:
    start: float
    end: Optional[float]
    trigger: str  # scheduled | emergency
    old_leader: Optional[str]
    new_leader: Optional[str]

    @property
    def duration(self) -> Optional[float]:
        return None if self.end is None else self.end - self.start


@dataclass
class RunMetrics:
    duration: float
    reorganizations: list[Reorganization] = field(default_factory=list)
    leader_tenure: dict[str, float] = field(default_factory=dict)
    leader_timeline: list[tuple[float, Optional[str]]] = field(default_factory=list)
    message_counts: dict[str, int] = field(default_factory=dict)
    detection_latencies: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["reorganizations"] = [
            {**asdict(r), "duration": r.duration} for r in self.reorganizations
        ]
        out["leader_timeline"] = [{"t": t, "leader": m} for t, m in self.leader_timeline]
        return out


class MetricsRecorder:
    """Folds the trace stream into RunMetrics and tracks open reorganizations."""

    def __init__(self, config, until: float):
        self.until = until
        self.metrics = RunMetrics(duration=until)
        self.counts: Counter = Counter()
        self.leader: Optional[str] = None
        self.leader_since = 0.0
        self.tenure: Counter = Counter()
        self.associated_at: dict[str, float] = {}
        self.open: Optional[dict] = None
        self.kills: dict[str, float] = {}

    # ------------------------------------------------------------ stream

    def observe(self, ev: TraceEvent) -> None:
        kind = ev.kind
        if kind == "msg_sent":
            self.counts[ev.detail["type"]] += 1
        elif kind == "fsm_transition":
            to, frm = ev.detail["to"], ev.detail["from"]
            if to == Role.LEADER.value:
                self.leader, self.leader_since = ev.machine, ev.t
                self.metrics.leader_timeline.append((ev.t, ev.machine))
            elif frm == Role.LEADER.value and self.leader == ev.machine:
                self.tenure[ev.machine] += ev.t - self.leader_since
                self.leader = None
                self.metrics.leader_timeline.append((ev.t, None))
            if to == Role.NULL.value:
                self.associated_at.pop(ev.machine, None)
        elif kind == "association":
            self.associated_at[ev.machine] = ev.t
        elif kind == "election" and self.open is None:
            outcome = ev.detail.get("outcome")
            if outcome == "approved":
                self._open(ev.t, "scheduled", ev.machine)
            elif outcome == "emergency":
                self._open(ev.t, "emergency", ev.detail.get("failed"))
        if kind == "suspect" and ev.detail.get("classification") in ("confirmed", "leader_exit"):
            target = ev.detail.get("target")
            if target in self.kills:
                self.metrics.detection_latencies.append(ev.t - self.kills.pop(target))

    def killed(self, t: float, mid: str) -> None:
        if mid == self.leader:
            self.kills[mid] = t

    def _open(self, t: float, trigger: str, old: Optional[str]) -> None:
        self.open = {"start": t, "trigger": trigger, "old": old, "announced": False}

    # ------------------------------------------------------------ per event

    def after_event(self, t: float, controllers, alive, emit: Callable[[TraceEvent], None]) -> None:
        r = self.open
        if r is None:
            return
        if not r["announced"]:
            r["announced"] = True
            emit(TraceEvent(t, WORLD, "reorg_start", {"trigger": r["trigger"], "old_leader": r["old"]}))
        leader = self._settled_leader(controllers, alive, r["start"])
        if leader is None:
            return
        self.open = None
        self.metrics.reorganizations.append(
            Reorganization(r["start"], t, r["trigger"], r["old"], leader))
        emit(TraceEvent(t, WORLD, "reorg_complete", {
            "trigger": r["trigger"], "old_leader": r["old"], "new_leader": leader,
            "duration": t - r["start"],
        }))

    def _settled_leader(self, controllers, alive, start: float) -> Optional[str]:
        leaders = [m for m in sorted(alive) if controllers[m].state.fsm is Role.LEADER]
        if len(leaders) != 1:
            return None
        leader = leaders[0]
        ls = controllers[leader].state
        if ls.attach != "hosting" or not ls.in_network:
            return None
        for m in sorted(alive):
            s = controllers[m].state
            if s.fsm is not Role.FOLLOWER:
                continue
            if not (s.in_network and s.attach == "attached" and s.host == leader):
                return None
            if self.associated_at.get(m, -1.0) < start:
                return None
        return leader

    # ------------------------------------------------------------ finish

    def close(self, t: float) -> list[TraceEvent]:
        out = []
        if self.open is not None:
            r = self.open
            self.metrics.reorganizations.append(
                Reorganization(r["start"], None, r["trigger"], r["old"], None))
        if self.leader is not None:
            self.tenure[self.leader] += t - self.leader_since
        out.append(TraceEvent(t, WORLD, "trace_end", {"open_reorg": self.open is not None}))
        self.open = None
        return out

    def result(self) -> RunMetrics:
        m = self.metrics
        m.message_counts = dict(sorted(self.counts.items()))
        m.leader_tenure = dict(sorted(self.tenure.items()))
        return m


def summarize(metrics: RunMetrics) -> tuple[str, dict]:
    """Human-readable report plus the same content as a plain dict."""
    doc = metrics.to_dict()
    lines = [f"duration: {metrics.duration:g} s", "", "reorganizations:"]
    if not metrics.reorganizations:
        lines.append("  (none)")
    else:
        lines.append(f"  {'start':>9} {'end':>9} {'secs':>6}  {'trigger':<10} old -> new")
        for r in metrics.reorganizations:
            end = "open" if r.end is None else f"{r.end:.3f}"
            dur = "-" if r.duration is None else f"{r.duration:.3f}"
            lines.append(f"  {r.start:9.3f} {end:>9} {dur:>6}  {r.trigger:<10} {r.old_leader} -> {r.new_leader}")
    lines += ["", "leader timeline:"]
    if not metrics.leader_timeline:
        lines.append("  (no leader)")
    for t, m in metrics.leader_timeline:
        lines.append(f"  {t:9.3f}  {m if m is not None else '(none)'}")
    lines += ["", "leader tenure:"]
    for m, secs in metrics.leader_tenure.items():
        lines.append(f"  {m}: {secs:.3f} s")
    lines += ["", "messages sent:"]
    for k, n in metrics.message_counts.items():
        lines.append(f"  {k}: {n}")
    if metrics.detection_latencies:
        lines += ["", "failure detection latency: " +
                  ", ".join(f"{x:.3f} s" for x in metrics.detection_latencies)]
    return "\n".join(lines) + "\n", doc
