import heapq
import ipaddress
import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from swarmnet.cellsim import AlreadyHosting, LinkModel, RadioDomain, StackDelays


class Loop:
    """Minimal event loop recording every signal the radio emits."""

    def __init__(self, **kw):
        self.q = []
        self.seq = itertools.count()
        self.signals = []
        self.radio = RadioDomain(self.schedule, self.notify, **kw)

    def schedule(self, at, key, fn):
        heapq.heappush(self.q, (at, next(self.seq), fn))

    def notify(self, m, sig):
        self.signals.append((m, sig))

    def run(self, until=1e9):
        while self.q and self.q[0][0] <= until:
            at, _, fn = heapq.heappop(self.q)
            fn(at)

    def kinds(self, m):
        return [(s.t, s.kind) for who, s in self.signals if who == m]


def test_stack_ready_after_core_and_ran():
    loop = Loop()
    assert loop.radio.start_core_ran("A1", 10.0) == 13.5
    loop.run()
    assert loop.kinds("A1") == [(13.5, "stack_ready")]
    assert loop.radio.ip_of("A1") == ipaddress.IPv4Address("10.45.0.1")


def test_second_host_refused():
    loop = Loop()
    loop.radio.start_core_ran("A1", 0.0)
    with pytest.raises(AlreadyHosting):
        loop.radio.start_core_ran("B2", 0.0)


def test_blackout_host_still_ready_but_no_attach():
    loop = Loop()
    loop.radio.set_blackout(None, 0.0)
    loop.radio.start_core_ran("A1", 0.0)
    loop.radio.attach_ue("B2", 0.0)
    loop.run()
    assert loop.kinds("A1") == [(3.5, "stack_ready")]
    assert loop.kinds("B2") == [(9.0, "rrc_failed")]  # ue_init 1 + scan_timeout 8


def booted(n_followers=1):
    loop = Loop()
    loop.radio.start_core_ran("A1", 0.0)
    loop.run()
    for i in range(n_followers):
        loop.radio.attach_ue(f"F{i}", 4.0)
    loop.run()
    return loop


def test_first_follower_gets_dot_two():
    loop = booted(3)
    assert loop.kinds("F0") == [(6.0, "rrc_connected")]
    got = [loop.radio.ip_of(f"F{i}") for i in range(3)]
    assert [str(ip) for ip in got] == ["10.45.0.2", "10.45.0.3", "10.45.0.4"]


def test_host_killed_mid_attach():
    loop = Loop()
    loop.radio.start_core_ran("A1", 0.0)
    loop.run()
    loop.radio.attach_ue("B2", 4.0)
    loop.run(until=5.5)
    loop.radio.kill("A1", 5.5)
    loop.run()
    assert loop.kinds("B2")[-1] == (6.0, "rrc_failed")


def test_reattach_gets_fresh_lease_and_releases_old():
    loop = booted(2)
    old = loop.radio.ip_of("F0")
    loop.radio.stop_core_ran("A1", 10.0)
    assert loop.radio.attached == {}
    loop.run()
    loop.radio.start_core_ran("F1", 11.0)
    loop.run()
    loop.radio.attach_ue("F0", 15.0)
    loop.radio.attach_ue("A1", 15.0)
    loop.run()
    assert loop.radio.ip_of("F1") == ipaddress.IPv4Address("10.45.0.1")
    assert old is not None and "F0" in loop.radio.attached
    assert sorted(map(str, loop.radio.attached.values())) == ["10.45.0.2", "10.45.0.3"]


def test_checks():
    loop = booted(1)
    assert loop.radio.cellular_check("F0").healthy
    loop.radio.set_blackout("F0", 7.0)
    assert not loop.radio.cellular_check("F0").ss_visible  # false positive by design
    loop.radio.restore("F0", 7.5)
    loop.radio.kill("A1", 8.0)
    assert not loop.radio.cellular_check("F0").ss_visible


def test_host_kill_drops_in_flight_hairpin():
    loop = booted(2)
    res = loop.radio.send("F0", "F1", 10.0)
    assert res.deliver_at == pytest.approx(10.02)
    assert res.via == "A1"
    loop.radio.kill("A1", 10.01)
    assert loop.radio.deliverable("F0", "F1", res.via) == "host gone"


def test_fixed_latency_exact():
    loop = booted(1)
    assert loop.radio.send("A1", "F0", 10.0).deliver_at == 10.0 + 0.01


def test_lossless_fifo_per_pair():
    loop = Loop(link=LinkModel(latency=0.01, jitter=0.05), rng=random.Random(3))
    loop.radio.start_core_ran("A1", 0.0)
    loop.run()
    loop.radio.attach_ue("B2", 4.0)
    loop.run()
    times = [loop.radio.send("A1", "B2", 10.0 + i * 1e-3).deliver_at for i in range(200)]
    assert all(t is not None for t in times)
    assert times == sorted(times)


def test_loss_one_drops_everything():
    loop = Loop(link=LinkModel(loss=1.0))
    loop.radio.start_core_ran("A1", 0.0)
    loop.run()
    loop.radio.attach_ue("B2", 4.0)
    loop.run()
    assert loop.radio.send("A1", "B2", 10.0).reason == "lost"


def test_muted_sender():
    loop = booted(1)
    loop.radio.drop_all_from("F0")
    assert loop.radio.send("F0", "A1", 7.0).deliver_at is None
    assert loop.radio.send("A1", "F0", 7.0).deliver_at is not None


def test_bad_delay_config():
    with pytest.raises(ValueError):
        StackDelays(core_init=-1)
    with pytest.raises(ValueError):
        LinkModel(loss=1.5)


ops = st.lists(st.tuples(st.sampled_from(["host", "stop", "attach", "kill", "restore", "blackout"]),
                         st.sampled_from(["A", "B", "C", "D"])), max_size=40)


@settings(max_examples=200)
@given(ops)
def test_single_hosting_slot_and_unique_leases(steps):
    loop = Loop()
    radio = loop.radio
    t = 0.0
    for op, m in steps:
        t += 0.7
        loop.run(until=t)
        try:
            if op == "host":
                radio.start_core_ran(m, t)
            elif op == "stop":
                radio.stop_core_ran(m, t)
            elif op == "attach":
                radio.attach_ue(m, t)
            elif op == "kill":
                radio.kill(m, t)
            elif op == "restore":
                radio.restore(m, t)
            else:
                radio.set_blackout(m, t)
        except (AlreadyHosting, RuntimeError):
            pass
        assert radio.check_invariants() == []
        hosts = [x for x in "ABCD" if radio.live_host() == x]
        assert len(hosts) <= 1
        assert radio.live_host() not in radio.attached
    loop.run()
    assert radio.check_invariants() == []
