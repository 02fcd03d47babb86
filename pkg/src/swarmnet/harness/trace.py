"""Trace records and replay comparison."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..messages import canonical_json

KINDS = frozenset({
    "fsm_transition", "msg_sent", "msg_received", "msg_dropped", "timer_fired",
    "cellular", "election", "reorg_start", "reorg_complete", "suspect",
    "association", "fault", "command", "trace_end",
})

WORLD = "*"  # machine field for simulator-level records


@dataclass(frozen=True)
class TraceEvent:
    t: float
    machine: str
    kind: str
    detail: dict = field(default_factory=dict)

    def to_json(self) -> bytes:
        return canonical_json({"t": self.t, "machine": self.machine,
                               "kind": self.kind, "detail": self.detail})

    @classmethod
    def from_json(cls, line: bytes | str) -> "TraceEvent":
        obj = json.loads(line)
        return cls(t=obj["t"], machine=obj["machine"], kind=obj["kind"], detail=obj["detail"])


def dump_lines(events: Iterable[TraceEvent]) -> bytes:
    return b"".join(e.to_json() + b"\n" for e in events)


def replay_check(config, trace_a: Sequence[TraceEvent] | bytes, trace_b: Sequence[TraceEvent] | bytes) -> bool:
    """True iff both traces serialize to identical bytes.

    ``config`` is accepted for symmetry with the CLI; equality is purely on
    the event streams.
    """
    a = trace_a if isinstance(trace_a, bytes) else dump_lines(trace_a)
    b = trace_b if isinstance(trace_b, bytes) else dump_lines(trace_b)
    return a == b
