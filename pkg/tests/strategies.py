"""Hypothesis strategies for domain values and messages."""
import ipaddress

from hypothesis import strategies as st

from swarmnet.domain import MachineId, NetworkTableEntry, Position, Role
from swarmnet.messages import (
    ENTRY_CAUSES,
    EXIT_CAUSES,
    FAILURE_CAUSES,
    TRANSITION_CAUSES,
    EntryNotification,
    EntryNotificationReply,
    ExitNotification,
    HeartbeatNotification,
    PerformanceReport,
    TransitionAlert,
    TransitionFailure,
    TransitionRequest,
)

ids = st.from_regex(r"[A-Za-z0-9_-]{1,32}", fullmatch=True)
dests = st.one_of(ids, st.just("*"))
imeis = st.from_regex(r"[0-9]{15}", fullmatch=True)
finite = st.floats(allow_nan=False, allow_infinity=False, min_value=-1e9, max_value=1e9)
times = st.floats(min_value=0, max_value=1e6, allow_nan=False)
scores = st.floats(min_value=0, max_value=100, allow_nan=False)
ips = st.integers(min_value=0, max_value=2**32 - 1).map(ipaddress.IPv4Address)
roles = st.sampled_from(list(Role))
codes = st.integers(min_value=0, max_value=255)
text = st.text(max_size=40)
positions = st.builds(Position, finite, finite, finite)


def sorted_choice(values):
    return st.sampled_from(sorted(values))


entries = st.builds(
    NetworkTableEntry,
    machine=st.builds(MachineId, ids, st.one_of(st.none(), imeis)),
    session_ip=st.one_of(st.none(), ips),
    coords=positions,
    role=roles,
    score=scores,
)


@st.composite
def replies(draw):
    sel, hb, perf = (draw(st.floats(min_value=1e-3, max_value=1e4)) for _ in range(3))
    return EntryNotificationReply(
        draw(ids), draw(dests), draw(times), sel, hb, perf,
        draw(st.floats(min_value=0, max_value=perf)),
        draw(st.floats(min_value=0, max_value=sel)),
        tuple(draw(st.lists(entries, max_size=6))),
    )


@st.composite
def exits(draw):
    cause = draw(sorted_choice(EXIT_CAUSES))
    role = Role.LEADER if cause == "failure_alert" else draw(roles)
    return ExitNotification(draw(ids), draw(dests), draw(times), role, cause)


@st.composite
def alerts(draw):
    t = draw(times)
    return TransitionAlert(draw(ids), draw(dests), t, draw(ids),
                           t + draw(st.floats(min_value=0, max_value=1e3)), draw(text))


MESSAGE_STRATEGIES = {
    "entry_notification": st.builds(
        EntryNotification, ids, dests, times, imeis, roles, scores, ips,
        finite, finite, finite, sorted_choice(ENTRY_CAUSES)),
    "entry_notification_reply": replies(),
    "exit_notification": exits(),
    "performance_report": st.builds(PerformanceReport, ids, dests, times, scores),
    "heartbeat_notification": st.builds(
        HeartbeatNotification, ids, dests, times, codes, codes, codes, codes, codes,
        finite, finite, finite, finite, finite, finite,
        st.floats(min_value=0, max_value=360, exclude_max=True)),
    "transition_request": st.builds(
        TransitionRequest, ids, dests, times, scores, sorted_choice(TRANSITION_CAUSES), text, text),
    "transition_alert": alerts(),
    "transition_failure": st.builds(
        TransitionFailure, ids, dests, times, sorted_choice(FAILURE_CAUSES), text, text, text),
}

any_message = st.one_of(*MESSAGE_STRATEGIES.values())
