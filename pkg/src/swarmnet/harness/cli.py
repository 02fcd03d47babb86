"""Command-line entry point: run, verify and list scenarios."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from ..domain import ConfigError
from .metrics import summarize
from .scenario import bundled_names, load_scenario
from .sim import Simulation
from .trace import dump_lines

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swarmnet", description="Self-organizing M2M network simulator")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run a scenario")
    r.add_argument("scenario", help="scenario file, or the name of a bundled scenario")
    r.add_argument("--seed", type=int)
    r.add_argument("--trace", type=Path, help="write line-delimited trace here")
    r.add_argument("--metrics", type=Path, help="write metrics JSON here")
    r.add_argument("--until", type=float, help="stop early at this simulated time")

    v = sub.add_parser("verify", help="replay a scenario against a stored trace")
    v.add_argument("scenario")
    v.add_argument("--seed", type=int, required=True)
    v.add_argument("--golden", type=Path, required=True)

    s = sub.add_parser("scenarios", help="bundled scenarios")
    s.add_argument("action", choices=["list"])
    return p


def _cmd_run(args, out) -> int:
    cfg = load_scenario(args.scenario)
    if args.until is not None and args.until <= 0:
        raise ConfigError("until", "must be > 0")
    sim = Simulation(cfg, seed=args.seed, until=args.until)
    fh = None
    if args.trace is not None:
        fh = open(args.trace, "wb")

        def sink(ev) -> None:
            fh.write(ev.to_json() + b"\n")
            fh.flush()

        sim.on_trace(sink)
    try:
        result = sim.run()
    finally:
        if fh is not None:
            fh.close()
    text, doc = summarize(result.metrics)
    doc["violations"] = result.violations
    out.write(text)
    if args.metrics is not None:
        args.metrics.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if result.violations:
        out.write(f"\n{len(result.violations)} invariant violation(s):\n")
        for v in result.violations[:20]:
            out.write(f"  {v}\n")
        return EXIT_VIOLATION
    return EXIT_OK


def _cmd_verify(args, out) -> int:
    cfg = load_scenario(args.scenario)
    try:
        golden = args.golden.read_bytes()
    except OSError as exc:
        raise ConfigError("golden", str(exc)) from None
    result = Simulation(cfg, seed=args.seed).run()
    fresh = dump_lines(result.trace)
    if fresh == golden and not result.violations:
        out.write(f"ok: {len(result.trace)} events match {args.golden}\n")
        return EXIT_OK
    if result.violations:
        out.write(f"invariant violations: {result.violations[:5]}\n")
    if fresh != golden:
        a, b = golden.splitlines(), fresh.splitlines()
        idx = next((i for i, (x, y) in enumerate(zip(a, b)) if x != y), min(len(a), len(b)))
        out.write(f"trace mismatch at line {idx + 1} (golden {len(a)} lines, replay {len(b)} lines)\n")
    return EXIT_VIOLATION


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    args = _parser().parse_args(argv)
    try:
        if args.cmd == "run":
            return _cmd_run(args, out)
        if args.cmd == "verify":
            return _cmd_verify(args, out)
        for name in bundled_names():
            out.write(name + "\n")
        return EXIT_OK
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
