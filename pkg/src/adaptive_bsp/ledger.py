"""Instrumentation counters for reward and bound evaluations."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class RunLedger:
    """Counts model evaluations made while computing rewards or bounds.

    Calls made by belief updates are not counted. ``final_levels`` holds
    one (depth, particles used) pair per posterior node once a session ends.
    """

    motion_calls: int = 0
    obs_calls: int = 0
    resimplification_calls: int = 0
    rejected_observations: int = 0
    wall_ms: float = 0.0
    final_levels: list[tuple[int, int]] = field(default_factory=list)

    def merge(self, other: "RunLedger") -> None:
        self.motion_calls += other.motion_calls
        self.obs_calls += other.obs_calls
        self.resimplification_calls += other.resimplification_calls
        self.rejected_observations += other.rejected_observations
        self.wall_ms += other.wall_ms
        self.final_levels.extend(other.final_levels)
