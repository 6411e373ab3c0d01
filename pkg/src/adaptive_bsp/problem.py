"""Bundle of models, actions and reward that planners operate on."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .belief import WeightedParticleBelief
from .ledger import RunLedger
from .models import ObservationModel, TransitionModel
from .reward import RewardInterval, RewardSpec, composite_reward


@dataclass(frozen=True)
class TerminalAction:
    """An action that ends the episode with a goal-dependent payoff."""

    index: int
    goal: np.ndarray
    radius: float
    reward_inside: float = 200.0
    reward_outside: float = -200.0

    def value(self, belief: WeightedParticleBelief) -> float:
        dist = np.linalg.norm(belief.particles[:, :2] - self.goal, axis=1)
        payoff = np.where(dist <= self.radius, self.reward_inside, self.reward_outside)
        return math.fsum(belief.weights * payoff)


@dataclass(frozen=True)
class Problem:
    transition: TransitionModel
    observation: ObservationModel
    reward: RewardSpec
    actions: np.ndarray
    action_names: tuple[str, ...] = ()
    terminal: TerminalAction | None = None
    control_fn: Callable[[np.ndarray, int], np.ndarray] | None = field(default=None)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def gamma(self) -> float:
        return self.reward.gamma

    def is_terminal(self, action_index: int) -> bool:
        return self.terminal is not None and self.terminal.index == action_index

    def control(self, action_index: int, time: int) -> np.ndarray:
        """Vector handed to the models for the chosen action at absolute ``time``."""
        base = self.actions[action_index]
        if self.control_fn is None:
            return base
        return self.control_fn(base, time)

    def exact_reward(self, b_prev, action_index, time, observation, b_post,
                     ledger: RunLedger | None = None) -> float:
        return composite_reward(b_prev, self.control(action_index, time), observation,
                                b_post, self.reward, self.transition,
                                self.observation, ledger)

    def exact_interval(self, b_prev, action_index, time, observation, b_post,
                       n_max: int, ledger: RunLedger | None = None) -> RewardInterval:
        value = self.exact_reward(b_prev, action_index, time, observation, b_post, ledger)
        return RewardInterval.exact(value, n_max, b_post.n_x)
