"""Belief-dependent rewards and their interval form."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .belief import SimplificationIndexSet, WeightedParticleBelief
from .entropy import (
    EntropyBoundsState,
    boers_entropy,
    entropy_bounds_at_level,
    promote_entropy_bounds,
)
from .errors import AlreadyAtMaxLevel
from .ledger import RunLedger
from .models import ObservationModel, TransitionModel

StateReward = Callable[[np.ndarray, np.ndarray], np.ndarray]

ENTROPY = "entropy"
SAFE_LOCALIZATION = "safe_localization"


@dataclass(frozen=True)
class SafetySpec:
    """Safe set as a vectorized predicate over an (n, d) array of states."""

    safe_region: Callable[[np.ndarray], np.ndarray]
    delta: float
    safety_weight: float

    def __post_init__(self):
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must lie in (0, 1]")


@dataclass(frozen=True)
class RewardSpec:
    """How a transition (b, a, z, b') is scored.

    ``state_reward(states, action)`` returns one value per row. It is averaged
    over the posterior particles when ``on_posterior`` is true, otherwise over
    the prior particles.
    """

    lam: float
    gamma: float
    state_reward: StateReward | None = None
    variant: str = ENTROPY
    safety: SafetySpec | None = None
    on_posterior: bool = True

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.variant not in (ENTROPY, SAFE_LOCALIZATION):
            raise ValueError(f"unknown reward variant {self.variant!r}")
        if self.variant == SAFE_LOCALIZATION and self.safety is None:
            raise ValueError("safe_localization needs a SafetySpec")

    def exact_part(self, b_prev, action, b_post) -> float:
        """The component of the reward that carries no interval."""
        if self.variant == SAFE_LOCALIZATION:
            return safety_reward(b_post, self.safety)
        if self.lam == 1.0 or self.state_reward is None:
            return 0.0
        belief = b_post if self.on_posterior else b_prev
        return (1.0 - self.lam) * expected_state_reward(belief, action, self.state_reward)

    @property
    def info_weight(self) -> float:
        return 1.0 if self.variant == SAFE_LOCALIZATION else self.lam


def expected_state_reward(belief: WeightedParticleBelief, action,
                          state_reward: StateReward) -> float:
    values = np.asarray(state_reward(belief.particles, np.asarray(action)), dtype=float)
    return math.fsum(belief.weights * values)


def safety_reward(b_post: WeightedParticleBelief, safety: SafetySpec) -> float:
    inside = np.asarray(safety.safe_region(b_post.particles), dtype=bool)
    mass = math.fsum(b_post.weights[inside])
    return safety.safety_weight * (1.0 if mass >= safety.delta else -1.0)


def composite_reward(b_prev, action, observation, b_post, spec: RewardSpec,
                     transition: TransitionModel, obs: ObservationModel,
                     ledger: RunLedger | None = None) -> float:
    exact = spec.exact_part(b_prev, action, b_post)
    weight = spec.info_weight
    if weight == 0.0:
        return exact
    neg_h = -boers_entropy(b_prev, action, observation, b_post, transition, obs, ledger)
    return exact + weight * neg_h


@dataclass
class RewardInterval:
    """Bounds on one reward; exact rewards have no entropy state.

    ``chain`` holds the nested index sets used to promote the entropy state.
    """

    lower: float
    upper: float
    level: int
    n_max: int
    exact_part: float = 0.0
    info_weight: float = 0.0
    entropy_state: EntropyBoundsState | None = None
    chain: list[SimplificationIndexSet] | None = None
    particles_used: int = 0

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    @property
    def at_max(self) -> bool:
        return self.level >= self.n_max

    @classmethod
    def exact(cls, value: float, n_max: int, particles_used: int) -> "RewardInterval":
        return cls(value, value, n_max, n_max, exact_part=value,
                   particles_used=particles_used)

    def _refresh(self) -> None:
        state = self.entropy_state
        self.level = state.level
        self.particles_used = state.rows_used
        if self.info_weight == 0.0:
            self.lower = self.upper = self.exact_part
        elif state.lower == state.upper:
            self.lower = self.upper = self.exact_part + self.info_weight * state.upper
        else:
            self.lower = self.exact_part + self.info_weight * state.lower
            self.upper = self.exact_part + self.info_weight * state.upper

    def promote(self, ledger: RunLedger | None = None) -> bool:
        """Move one level finer; returns False when already at the top."""
        if self.entropy_state is None or self.entropy_state.at_max:
            return False
        nxt = self.chain[self.entropy_state.level]
        promote_entropy_bounds(self.entropy_state, nxt, nxt, ledger)
        self._refresh()
        return True

    def promote_to(self, level: int, ledger: RunLedger | None = None) -> None:
        while self.level < level and self.promote(ledger):
            pass


def composite_reward_bounds(b_prev, action, observation, b_post,
                            chain: list[SimplificationIndexSet], spec: RewardSpec,
                            m: float, transition: TransitionModel,
                            obs: ObservationModel, level: int = 1,
                            ledger: RunLedger | None = None) -> RewardInterval:
    """Interval reward at ``level`` using one index chain for rows and columns.

    With ``lam == 0`` no entropy work is done and the interval is degenerate.
    """
    n_max = len(chain)
    exact = spec.exact_part(b_prev, action, b_post)
    weight = spec.info_weight
    if weight == 0.0:
        return RewardInterval.exact(exact, n_max, 0)
    if not 1 <= level <= n_max:
        raise AlreadyAtMaxLevel(f"level {level} outside 1..{n_max}")
    index_set = chain[level - 1]
    state = entropy_bounds_at_level(b_prev, action, observation, b_post,
                                    index_set, index_set, m, transition, obs,
                                    n_max, level=level, ledger=ledger)
    interval = RewardInterval(0.0, 0.0, level, n_max, exact_part=exact,
                              info_weight=weight, entropy_state=state, chain=chain)
    interval._refresh()
    return interval
