"""One fixed instance of every message type, used for the stored golden encodings."""
import ipaddress

from swarmnet.domain import MachineId, NetworkTableEntry, Position, Role
from swarmnet.messages import (
    EntryNotification,
    EntryNotificationReply,
    ExitNotification,
    HeartbeatNotification,
    PerformanceReport,
    TransitionAlert,
    TransitionFailure,
    TransitionRequest,
)

IP = ipaddress.IPv4Address

# rows modeled on the four-machine network table example
TABLE = (
    NetworkTableEntry(MachineId("A1", "356938035643809"), IP("10.45.0.1"), Position(0.0, 0.0, 10.0), Role.LEADER, 85.6),
    NetworkTableEntry(MachineId("B2", "490154203237518"), IP("10.45.0.2"), Position(10.0, 0.0, 10.0), Role.FOLLOWER, 72.3),
    NetworkTableEntry(MachineId("C3", "353918058012345"), IP("10.45.0.3"), Position(-5.0, 8.66, 10.0), Role.FOLLOWER, 67.8),
    NetworkTableEntry(MachineId("D4", "012345678901237"), IP("10.45.0.4"), Position(-5.0, -8.66, 10.0), Role.FOLLOWER, 63.2),
)

GOLDEN_MESSAGES = {
    "entry_notification": EntryNotification(
        "B2", "A1", 6.0, "490154203237518", Role.FOLLOWER, 0.0, IP("10.45.0.2"),
        10.0, 0.0, 10.0, "initial"),
    "entry_notification_reply": EntryNotificationReply(
        "A1", "B2", 6.01, 26.0, 3.0, 6.0, 3.49, 23.49, TABLE),
    "exit_notification": ExitNotification("A1", "B2", 10.0, Role.LEADER, "failure_alert"),
    "performance_report": PerformanceReport("C3", "A1", 15.51, 72.3),
    "heartbeat_notification": HeartbeatNotification(
        "D4", "*", 9.0, 1, 2, 3, 81, 4, 2.0, -0.5, 0.0, -5.0, -8.66, 10.0, 345.5),
    "transition_request": TransitionRequest("B2", "A1", 29.51, 90.0, "scheduled", "degraded", "swap"),
    "transition_alert": TransitionAlert("A1", "*", 29.52, "B2", 29.62, "core moves to B2"),
    "transition_failure": TransitionFailure("A1", "C3", 29.52, "not_top_score", "next_cycle", "wait", "B2=90"),
}
