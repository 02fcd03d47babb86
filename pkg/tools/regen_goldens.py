"""Regenerate stored golden traces and codec vectors.

Only run this after an intentional behaviour change; the test suite treats
the stored files as frozen.
"""
import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from swarmnet.harness.scenario import bundled, bundled_names  # noqa: E402
from swarmnet.harness.sim import run  # noqa: E402
from swarmnet.harness.trace import dump_lines  # noqa: E402
from swarmnet.messages import encode  # noqa: E402
from vectors import GOLDEN_MESSAGES  # noqa: E402

GOLDEN = ROOT / "tests" / "golden"


def main() -> None:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    for name in bundled_names():
        cfg = bundled(name)
        result = run(cfg)
        if result.violations:
            raise SystemExit(f"{name}: refusing to freeze a trace with violations")
        (GOLDEN / f"{name}.seed{cfg.seed}.trace").write_bytes(dump_lines(result.trace))
        print(f"{name}: {len(result.trace)} events")
    vectors = {k: encode(m).decode() for k, m in sorted(GOLDEN_MESSAGES.items())}
    (GOLDEN / "codec_vectors.json").write_text(json.dumps(vectors, indent=1, sort_keys=True) + "\n")
    print(f"codec: {len(vectors)} vectors")


if __name__ == "__main__":
    main()
