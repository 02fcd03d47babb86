"""Performance evaluation: spatial proximity, computational capacity, aggregate."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .domain import Position, ResourceProfile, ScoringParams


class EmptyInput(ValueError):
    pass


class InvalidIntensity(ValueError):
    pass


@dataclass(frozen=True)
class ScoreBreakdown:
    sp: float
    cc: float
    total: float


def center_of_mass(positions: Sequence[Position]) -> Position:
    if not positions:
        raise EmptyInput("center_of_mass needs at least one position")
    n = len(positions)
    return Position(
        math.fsum(p.x for p in positions) / n,
        math.fsum(p.y for p in positions) / n,
        math.fsum(p.z for p in positions) / n,
    )


def spatial_score(p: Position, com: Position, a: float) -> float:
    """100 / (1 + a * |p - com|); 100 at the center, decaying with distance."""
    if not (0.0 < a < 1.0):
        raise InvalidIntensity(f"intensity factor must be in (0, 1), got {a}")
    return 100.0 / (1.0 + a * p.distance(com))


def capacity_score(r: ResourceProfile, params: ScoringParams) -> float:
    # gate is strict on all three thresholds
    if (
        r.memory_pct > params.m_thres
        and r.battery_pct > params.b_thres
        and r.processor_pct > params.p_thres
    ):
        return (r.memory_pct + r.battery_pct + r.processor_pct) / 3.0
    return 0.0


def aggregate_score(
    p: Position, com: Position, r: ResourceProfile, params: ScoringParams
) -> ScoreBreakdown:
    sp = spatial_score(p, com, params.intensity_a)
    cc = capacity_score(r, params)
    return ScoreBreakdown(sp=sp, cc=cc, total=(sp + cc) / 2.0)
