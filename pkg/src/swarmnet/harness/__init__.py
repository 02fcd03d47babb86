"""Scenario runner, trace and metrics.

Submodules are imported explicitly (``swarmnet.harness.sim`` etc.) so that
the controller can depend on ``trace`` without pulling in the simulator.
"""
