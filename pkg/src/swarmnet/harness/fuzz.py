"""Seeded random scenarios for conformance and convergence sweeps."""
from __future__ import annotations

import random

from ..domain import TimerConfig
from .scenario import ScenarioConfig, parse_scenario


def _r(rng: random.Random, lo: float, hi: float) -> float:
    return round(rng.uniform(lo, hi), 2)


def random_scenario(seed: int, *, fault_free: bool = False, machines: tuple[int, int] = (2, 6),
                    duration: tuple[float, float] = (60.0, 120.0)) -> ScenarioConfig:
    """Build a random but valid scenario.

    With ``fault_free`` the timeline only moves machines and changes their
    resources, then freezes everything for a quiescent tail long enough for
    an evaluation round, a selection round and one reorganization.
    """
    rng = random.Random(seed)
    n = rng.randint(*machines)
    ids = [f"m{i}" for i in range(n)]
    leader = rng.randrange(n)
    specs = []
    for i, mid in enumerate(ids):
        specs.append({
            "id": mid,
            "boot_score": 100 if i == leader else 0,
            "position": [_r(rng, -30, 30), _r(rng, -30, 30), _r(rng, 0, 10)],
            "resources": [_r(rng, 60, 100), _r(rng, 60, 100), _r(rng, 60, 100)],
            "velocity": [_r(rng, -2, 2), _r(rng, -2, 2), 0],
        })
    timers = TimerConfig()
    span = _r(rng, *duration)
    timeline = []
    if fault_free:
        quiet = 2 * timers.t_performance + timers.t_selection + 10.0
        active_end = span
        span = round(active_end + quiet, 2)
        for _ in range(rng.randint(1, 8)):
            timeline.append(_mobility(rng, ids, 5.0, active_end))
        for mid in ids:
            timeline.append({"at": active_end, "action": "set_velocity", "machine": mid,
                             "vn": 0, "ve": 0, "vd": 0})
    else:
        down: set[str] = set()
        t = 5.0
        while True:
            t = round(t + rng.expovariate(1 / 6.0), 2)
            if t > span - 2:
                break
            roll = rng.random()
            if roll < 0.35:
                ev = _mobility(rng, ids, t, t)
            else:
                ev = _disruption(rng, ids, t, down)
            timeline.append(ev)
    timeline.sort(key=lambda a: a["at"])
    return parse_scenario({
        "name": f"random-{seed}{'-quiet' if fault_free else ''}",
        "duration": span,
        "seed": seed,
        "machines": specs,
        "timeline": timeline,
    })


def _mobility(rng: random.Random, ids, lo: float, hi: float) -> dict:
    at = _r(rng, lo, hi)
    mid = rng.choice(ids)
    roll = rng.random()
    if roll < 0.5:
        return {"at": at, "action": "set_velocity", "machine": mid,
                "vn": _r(rng, -4, 4), "ve": _r(rng, -4, 4), "vd": _r(rng, -0.5, 0.5)}
    if roll < 0.8:
        return {"at": at, "action": "set_resources", "machine": mid,
                "memory": _r(rng, 50, 100), "battery": _r(rng, 50, 100), "processor": _r(rng, 50, 100)}
    field = rng.choice(["memory", "battery", "processor"])
    return {"at": at, "action": "ramp_resources", "machine": mid, "field": field,
            "from": _r(rng, 60, 100), "to": _r(rng, 40, 100), "over": _r(rng, 1, 15)}


def _disruption(rng: random.Random, ids, t: float, down: set) -> dict:
    mid = rng.choice(ids)
    if mid in down:
        down.discard(mid)
        if rng.random() < 0.5:
            return {"at": t, "action": "inject_fault", "machine": mid, "fault": "restore"}
        return {"at": t, "action": "command", "machine": mid, "kind": "enter"}
    roll = rng.random()
    if roll < 0.3:
        down.add(mid)
        return {"at": t, "action": "inject_fault", "machine": mid, "fault": "kill"}
    if roll < 0.5:
        down.add(mid)
        return {"at": t, "action": "command", "machine": mid, "kind": "exit"}
    if roll < 0.6:
        return {"at": t, "action": "set_resources", "machine": mid,
                "memory": _r(rng, 0, 100), "battery": _r(rng, 0, 30), "processor": _r(rng, 0, 100)}
    if roll < 0.75:
        return {"at": t, "action": "inject_fault", "machine": mid, "fault": "ss_blackout"}
    if roll < 0.85:
        return {"at": t, "action": "inject_fault", "machine": mid, "fault": "drop_all_from"}
    if roll < 0.93:
        return {"at": t, "action": "inject_fault", "machine": mid, "fault": "restore"}
    return {"at": t, "action": "inject_fault", "fault": rng.choice(["ss_blackout", "restore"])}
