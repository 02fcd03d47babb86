import io
import json
from collections import Counter

import pytest

from swarmnet.cellsim import LinkModel
from swarmnet.domain import ConfigError
from swarmnet.harness import cli
from swarmnet.harness.fuzz import random_scenario
from swarmnet.harness.metrics import RunMetrics, summarize
from swarmnet.harness.scenario import (
    bundled,
    bundled_names,
    dump_scenario,
    load_scenario,
    parse_scenario,
)
from swarmnet.harness.sim import Scheduler, run
from swarmnet.harness.trace import TraceEvent, dump_lines, replay_check

BASE = {
    "name": "t", "duration": 20,
    "machines": [{"id": "A1", "boot_score": 100}, {"id": "B2", "boot_score": 0, "position": [5, 0, 0]}],
}


def scenario(**over):
    return parse_scenario({**BASE, **over})


class TestConfig:
    @pytest.mark.parametrize("over, field", [
        ({"duration": 0}, "duration"),
        ({"duration": "long"}, "duration"),
        ({"machines": [{"id": "A1", "boot_score": 0}]}, "machines"),
        ({"machines": [{"id": "A1", "boot_score": 100}, {"id": "A1", "boot_score": 0}]}, "machines"),
        ({"timeline": [{"at": 5, "action": "teleport", "machine": "A1"}]}, "timeline[0].action"),
        ({"timeline": [{"at": 5, "action": "inject_fault", "fault": "kill"}]}, "timeline[0].machine"),
        ({"timeline": [{"at": 5, "action": "command", "machine": "Z9", "kind": "exit"}]}, "timeline"),
        ({"timeline": [{"at": 6, "action": "command", "machine": "B2", "kind": "exit"},
                       {"at": 5, "action": "command", "machine": "B2", "kind": "enter"}]}, "timeline"),
        ({"timers": {"t_heartbeat": 10}}, "timers"),
        ({"scoring": {"intensity_a": 2}}, "scoring"),
        ({"link": {"loss": 2}}, "link"),
        ({"subnet": "10.45.0.0/33"}, "subnet"),
        ({"warp": 1}, "scenario"),
    ])
    def test_rejected(self, over, field):
        with pytest.raises(ConfigError) as err:
            scenario(**over)
        assert err.value.field == field

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_scenario(tmp_path / "nope.json")

    def test_dump_round_trip(self):
        for name in bundled_names():
            cfg = bundled(name)
            assert parse_scenario(json.loads(dump_scenario(cfg))) == cfg

    def test_bundled_set(self):
        assert bundled_names() == ["battery_drop", "deviant_leader", "leader_kill"]


def test_scheduler_orders_world_events_first_then_machine_then_fifo():
    s = Scheduler()
    seen = []
    for key, tag in [("B2", 1), ("", 2), ("A1", 3), ("A1", 4)]:
        s.schedule(1.0, key, lambda t, tag=tag: seen.append(tag))
    s.schedule(0.5, "Z9", lambda t: seen.append(0))
    while True:
        item = s.pop(10.0)
        if item is None:
            break
        item[1](item[0])
    assert seen == [0, 2, 3, 4, 1]


class TestRun:
    def test_quiet_two_machine_boot(self):
        res = run(scenario())
        assert res.violations == []
        kinds = [(e.machine, e.detail["to"]) for e in res.trace if e.kind == "fsm_transition"]
        assert kinds == [("A1", "Leader"), ("B2", "Follower")]
        assert res.metrics.reorganizations == []
        assert res.metrics.leader_tenure == {"A1": pytest.approx(20 - 3.5)}

    def test_trace_times_bounded_and_sorted(self):
        res = run(bundled("leader_kill"))
        ts = [e.t for e in res.trace]
        assert ts == sorted(ts)
        assert ts[-1] <= 45 and res.trace[-1].kind == "trace_end"

    def test_message_counts_match_trace(self):
        res = run(bundled("deviant_leader"))
        sent = Counter(e.detail["type"] for e in res.trace if e.kind == "msg_sent")
        assert res.metrics.message_counts == dict(sent)

    def test_until_stops_early(self):
        res = run(bundled("leader_kill"), until=10.0)
        assert res.trace[-1].t <= 10.0

    def test_same_seed_replays(self):
        a = run(bundled("leader_kill"), seed=7)
        b = run(bundled("leader_kill"), seed=7)
        assert replay_check(None, a.trace, b.trace)

    def test_lossless_path_is_seed_independent(self):
        base = dump_lines(run(bundled("battery_drop"), seed=1).trace)
        for seed in range(2, 11):
            assert replay_check(None, base, run(bundled("battery_drop"), seed=seed).trace)

    def test_lossy_seeds_differ(self):
        cfg = parse_scenario({**BASE, "duration": 60, "link": {"loss": 0.2, "jitter": 0.05}})
        traces = {dump_lines(run(cfg, seed=s).trace) for s in range(4)}
        assert len(traces) > 1

    def test_kill_is_classified_as_failure(self):
        res = run(bundled("leader_kill"))
        ef = [e for e in res.trace if e.kind == "fsm_transition" and e.detail["event"] == "E_F"]
        assert [(e.t, e.machine) for e in ef] == [(20.0, "A1")]

    def test_drop_all_from_silences_sender(self):
        cfg = scenario(duration=30, timeline=[{"at": 10, "action": "inject_fault",
                                               "machine": "B2", "fault": "drop_all_from"}])
        res = run(cfg)
        assert not [e for e in res.trace if e.kind == "msg_sent" and e.machine == "B2" and e.t > 10]
        assert res.violations == []

    def test_fuzz_scenarios_are_valid(self):
        for seed in range(5):
            assert random_scenario(seed).machines
            q = random_scenario(seed, fault_free=True)
            assert all(a.action in ("set_velocity", "set_resources", "ramp_resources") for a in q.timeline)


def test_trace_line_round_trip():
    ev = TraceEvent(1.5, "A1", "msg_sent", {"type": "heartbeat_notification", "to": "B2"})
    assert TraceEvent.from_json(ev.to_json()) == ev


class TestSummary:
    def test_no_reorganizations(self):
        text, doc = summarize(run(scenario()).metrics)
        assert "(none)" in text
        assert doc["reorganizations"] == []

    def test_experiment_one_row(self):
        text, doc = summarize(run(bundled("battery_drop")).metrics)
        (row,) = doc["reorganizations"]
        assert row["trigger"] == "scheduled" and row["duration"] <= 6.0
        assert "scheduled" in text

    def test_leader_timeline_change(self):
        _, doc = summarize(run(bundled("deviant_leader")).metrics)
        assert [x["leader"] for x in doc["leader_timeline"] if x["leader"]] == ["d1", "d2"]

    def test_empty_metrics(self):
        text, _ = summarize(RunMetrics(duration=5.0))
        assert "(no leader)" in text


class TestCli:
    def call(self, *argv):
        out = io.StringIO()
        return cli.main(list(argv), out=out), out.getvalue()

    def test_list(self):
        code, out = self.call("scenarios", "list")
        assert code == 0 and out.split() == bundled_names()

    def test_run_writes_outputs(self, tmp_path):
        trace, metrics = tmp_path / "t.jsonl", tmp_path / "m.json"
        code, out = self.call("run", "battery_drop", "--trace", str(trace), "--metrics", str(metrics))
        assert code == 0 and "reorganizations" in out
        lines = trace.read_bytes().splitlines()
        assert TraceEvent.from_json(lines[-1]).kind == "trace_end"
        assert json.loads(metrics.read_text())["violations"] == []

    def test_bad_config_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({**BASE, "duration": -1}))
        assert self.call("run", str(bad))[0] == 2
        assert self.call("run", "battery_drop", "--until", "0")[0] == 2

    def test_verify_mismatch(self, tmp_path):
        golden = tmp_path / "g.trace"
        golden.write_bytes(b'{"t":0}\n')
        code, out = self.call("verify", "battery_drop", "--seed", "0", "--golden", str(golden))
        assert code == 1 and "mismatch at line 1" in out

    def test_verify_missing_golden(self, tmp_path):
        assert self.call("verify", "battery_drop", "--seed", "0", "--golden", str(tmp_path / "x"))[0] == 2
