import json

import pytest
from hypothesis import given

from swarmnet.domain import MachineId, NetworkTableEntry, Position, Role
from swarmnet.messages import (
    MESSAGE_TYPES,
    EntryNotification,
    EntryNotificationReply,
    ExitNotification,
    HeartbeatNotification,
    InvalidMessage,
    MalformedMessage,
    PerformanceReport,
    SchemaViolation,
    UnknownType,
    decode,
    encode,
    message_fields,
    validate_reentry,
)
from strategies import MESSAGE_STRATEGIES, any_message
from vectors import GOLDEN_MESSAGES, IP, TABLE


def test_every_type_has_a_strategy_and_vector():
    assert set(MESSAGE_STRATEGIES) == set(MESSAGE_TYPES) == set(GOLDEN_MESSAGES)


def test_exit_encoding_is_sorted():
    raw = encode(ExitNotification("A1", "B2", 10.0, Role.LEADER, "failure_alert"))
    assert b'"cause":"failure_alert"' in raw
    keys = list(json.loads(raw))
    assert keys == sorted(keys)


def test_heading_360_rejected():
    hb = HeartbeatNotification("D4", "*", 9.0, 1, 2, 3, 81, 4, 0, 0, 0, 0, 0, 0, 360.0)
    with pytest.raises(InvalidMessage):
        encode(hb)


def test_report_round_trip():
    msg = PerformanceReport("C3", "A1", 15.5, 72.3)
    assert decode(encode(msg)) == msg


def test_unknown_type():
    with pytest.raises(UnknownType):
        decode(b'{"type":"warp_drive"}')


def test_score_out_of_range_on_wire():
    doc = json.loads(encode(PerformanceReport("C3", "A1", 1.0, 50.0)))
    doc["performance_score"] = 120
    with pytest.raises(SchemaViolation):
        decode(json.dumps(doc).encode())


def test_encode_rejects_score_out_of_range():
    with pytest.raises(InvalidMessage):
        encode(PerformanceReport("C3", "A1", 1.0, 120.0))


@pytest.mark.parametrize("data", [b"", b"\xff\xfe", b"[1,2]", b"{", b"null"])
def test_malformed(data):
    with pytest.raises(MalformedMessage):
        decode(data)


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("timestamp"),
    lambda d: d.update(extra=1),
    lambda d: d.update(performance_score="72"),
    lambda d: d.update(performance_score=True),
    lambda d: d.update(timestamp=-1),
    lambda d: d.update(source_machine_id="no spaces"),
])
def test_schema_violations(mutate):
    doc = json.loads(encode(PerformanceReport("C3", "A1", 1.0, 50.0)))
    mutate(doc)
    with pytest.raises(SchemaViolation):
        decode(json.dumps(doc).encode())


def test_missing_type():
    with pytest.raises(SchemaViolation):
        decode(b'{"performance_score":1}')


def test_nan_on_wire_rejected():
    doc = encode(PerformanceReport("C3", "A1", 1.0, 50.0)).replace(b'"performance_score":50', b'"performance_score":NaN')
    with pytest.raises(SchemaViolation):
        decode(doc)


def test_bad_entry_in_reply():
    doc = json.loads(encode(GOLDEN_MESSAGES["entry_notification_reply"]))
    doc["network_table_entries"][0]["role"] = 5
    with pytest.raises(SchemaViolation):
        decode(json.dumps(doc).encode())


@pytest.mark.parametrize("cause, perf, ok", [
    ("reconnection", 0.0, True),
    ("reconnection", 50.0, False),
    ("initial", 100.0, True),
])
def test_validate_reentry(cause, perf, ok):
    msg = EntryNotification("B2", "A1", 1.0, "490154203237518", Role.FOLLOWER, perf,
                            IP("10.45.0.2"), 0, 0, 0, cause)
    assert validate_reentry(msg) is ok


def test_reply_estimates_bounded_by_intervals():
    with pytest.raises(InvalidMessage):
        encode(EntryNotificationReply("A1", "B2", 1.0, 26, 3, 6, 7.0, 1.0, TABLE))


def test_failure_alert_exit_must_be_leader():
    with pytest.raises(InvalidMessage):
        encode(ExitNotification("B2", "*", 1.0, Role.FOLLOWER, "failure_alert"))


def test_large_reply_fits_a_datagram():
    table = tuple(TABLE[i % 4] for i in range(4))
    assert len(encode(EntryNotificationReply("A1", "B2", 1.0, 26, 3, 6, 3, 26, table))) < 2048


def test_256_entry_reply_under_64k():
    # worst-case row: longest id, full-precision floats, an address on every row
    rows = tuple(
        NetworkTableEntry(
            MachineId(f"{i:032d}", "356938035643809"), IP(0xFFFF0000 + i),
            Position(-123456.78901234567, -987654.3210987654, -0.1234567890123457),
            Role.FOLLOWER, 33.333333333333336)
        for i in range(256)
    )
    raw = encode(EntryNotificationReply("A1", "B2", 1.0, 26, 3, 6, 3, 26, rows))
    assert len(raw) <= 64 * 1024


def test_integral_floats_written_as_ints():
    raw = encode(PerformanceReport("C3", "A1", 15.0, 72.0))
    assert b'"performance_score":72' in raw and b'"timestamp":15' in raw
    assert isinstance(decode(raw).performance_score, float)


def test_field_names_are_stable():
    assert message_fields(PerformanceReport) == [
        "source_machine_id", "destination_machine_id", "timestamp", "performance_score"]


@given(any_message)
def test_round_trip(msg):
    raw = encode(msg)
    back = decode(raw)
    assert back == msg
    assert encode(back) == raw
