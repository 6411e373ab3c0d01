"""Particle filter tree search with double progressive widening.

``PftPlanner`` runs the exact baseline when built without a schedule and the
bound-based variant when given one. The bound-based variant keeps lower and
upper Q estimates, removes UCB overlap at every visited node by refining
rewards, and selects exactly the actions the baseline would, so both build
the same tree under the same seed.

Random streams are split by purpose (observation sampling, particle
propagation, rollout actions, widening choices, index chains) so the extra
bound computations never shift the draws shared with the baseline.
"""

from __future__ import annotations

import json
import math
import time as _time
from dataclasses import dataclass, field

import numpy as np

from .belief import SimplificationSchedule, WeightedParticleBelief, make_index_chain
from .errors import ZeroLikelihoodObservation
from .ledger import RunLedger
from .models import pf_update, sample_observation
from .problem import Problem
from .reward import RewardInterval, composite_reward_bounds

STREAMS = ("observation", "propagation", "rollout", "widening", "simplification")


@dataclass(frozen=True)
class DpwConfig:
    k_o: float = 2.0
    alpha_o: float = 0.1
    k_a: float = 4.0
    alpha_a: float = 0.25
    c: float = 40.0
    depth: int = 30
    iterations: int = 200

    def __post_init__(self):
        if self.k_o <= 0 or self.k_a <= 0:
            raise ValueError("k_o and k_a must be positive")
        if not (0 < self.alpha_o < 1 and 0 < self.alpha_a < 1):
            raise ValueError("alpha_o and alpha_a must lie in (0, 1)")
        if self.c < 0:
            raise ValueError("c must be nonnegative")


@dataclass(eq=False)
class RolloutStep:
    reward: RewardInterval
    terminal: bool = False


@dataclass(eq=False)
class PftActionNode:
    action: int
    visits: int = 0
    q_lower: float = 0.0
    q_upper: float = 0.0
    children: list["PftBeliefNode"] = field(default_factory=list)
    terminal_value: float | None = None

    @property
    def gap(self) -> float:
        return self.q_upper - self.q_lower


@dataclass(eq=False)
class PftBeliefNode:
    node_id: int
    belief: WeightedParticleBelief
    time: int
    remaining: int
    action_order: np.ndarray
    reward: RewardInterval | None = None
    observation: np.ndarray | None = None
    visits: int = 0
    parent_visits: int = 0
    actions: list[PftActionNode] = field(default_factory=list)
    rollout: list[RolloutStep] = field(default_factory=list)


def ucb_bounds(action_node: PftActionNode, parent_visits: int,
               c: float) -> tuple[float, float]:
    bonus = c * math.sqrt(math.log(parent_visits) / action_node.visits) if c else 0.0
    return action_node.q_lower + bonus, action_node.q_upper + bonus


def _rollout_bounds(steps: list[RolloutStep], gamma: float) -> tuple[float, float]:
    lower = upper = 0.0
    for k, step in enumerate(steps):
        g = gamma ** k
        lower += g * step.reward.lower
        upper += g * step.reward.upper
    return lower, upper


class PftPlanner:
    """One planning instance; call ``plan`` once per session."""

    def __init__(self, problem: Problem, dpw: DpwConfig, seed: int,
                 schedule: SimplificationSchedule | None = None,
                 ledger: RunLedger | None = None):
        self.problem = problem
        self.dpw = dpw
        self.schedule = schedule
        self.simplified = schedule is not None
        self.ledger = ledger if ledger is not None else RunLedger()
        self.gamma = problem.gamma
        self.n_max = schedule.n_max if schedule is not None else 1
        self.m = problem.transition.density_max if self.simplified else None
        children = np.random.SeedSequence(seed).spawn(len(STREAMS))
        self.rng = {name: np.random.default_rng(s) for name, s in zip(STREAMS, children)}
        self.trace: list[tuple] = []
        self._next_id = 0
        self._resimp_depth = math.inf
        self._promotions = 0

    # tree construction

    def _new_node(self, belief, time, remaining, reward=None, observation=None):
        order = self.rng["widening"].permutation(self.problem.n_actions)
        node = PftBeliefNode(self._next_id, belief, time, remaining, order,
                             reward=reward, observation=observation)
        self._next_id += 1
        return node

    def _reward(self, b_prev, action, time, observation, b_post) -> RewardInterval:
        problem = self.problem
        if not self.simplified:
            return problem.exact_interval(b_prev, action, time, observation, b_post,
                                          self.n_max, self.ledger)
        chain = make_index_chain(b_prev.n_x, self.schedule, self.rng["simplification"])
        return composite_reward_bounds(
            b_prev, problem.control(action, time), observation, b_post, chain,
            problem.reward, self.m, problem.transition, problem.observation,
            level=1, ledger=self.ledger)

    def _step(self, belief, action, time):
        problem = self.problem
        control = problem.control(action, time)
        _, z = sample_observation(belief, control, problem.transition,
                                  problem.observation, self.rng["observation"])
        post = pf_update(belief, control, z, problem.transition, problem.observation,
                         self.rng["propagation"])
        return z, post

    def _expand(self, node: PftBeliefNode, act: PftActionNode, d: int):
        try:
            z, post = self._step(node.belief, act.action, node.time)
        except ZeroLikelihoodObservation:
            self.ledger.rejected_observations += 1
            return None
        reward = self._reward(node.belief, act.action, node.time, z, post)
        child = self._new_node(post, node.time + 1, d - 1, reward, np.asarray(z))
        act.children.append(child)
        self.trace.append(("new", node.node_id, act.action, child.node_id,
                           tuple(float(v) for v in z)))
        return child

    def _rollout(self, node: PftBeliefNode, d: int) -> tuple[float, float]:
        problem = self.problem
        belief, time = node.belief, node.time
        steps = []
        for _ in range(d):
            a = int(self.rng["rollout"].integers(problem.n_actions))
            if problem.is_terminal(a):
                value = problem.terminal.value(belief)
                steps.append(RolloutStep(RewardInterval.exact(value, self.n_max, 0), True))
                break
            try:
                z, post = self._step(belief, a, time)
            except ZeroLikelihoodObservation:
                self.ledger.rejected_observations += 1
                break
            steps.append(RolloutStep(self._reward(belief, a, time, z, post)))
            belief, time = post, time + 1
        node.rollout = steps
        return _rollout_bounds(steps, self.gamma)

    def _add_action(self, node: PftBeliefNode) -> None:
        a = int(node.action_order[len(node.actions)])
        act = PftActionNode(a)
        if self.problem.is_terminal(a):
            act.terminal_value = self.problem.terminal.value(node.belief)
        node.actions.append(act)

    # value bookkeeping

    def reconstruct(self, act: PftActionNode) -> None:
        """Recompute Q bounds of ``act`` from stored reward intervals and counts."""
        if act.terminal_value is not None:
            act.q_lower = act.q_upper = act.terminal_value
            return
        if act.visits == 0:
            return
        lows, highs = [], []
        for child in act.children:
            r_low, r_high = _rollout_bounds(child.rollout, self.gamma)
            sub_low = r_low + math.fsum(a.visits * a.q_lower for a in child.actions)
            sub_high = r_high + math.fsum(a.visits * a.q_upper for a in child.actions)
            lows.append(child.parent_visits * child.reward.lower + self.gamma * sub_low)
            highs.append(child.parent_visits * child.reward.upper + self.gamma * sub_high)
        act.q_lower = math.fsum(lows) / act.visits
        act.q_upper = math.fsum(highs) / act.visits

    # simplification

    def _refine(self, reward: RewardInterval, exponent: int, gap_context: float,
                d: int) -> None:
        if reward.at_max:
            return
        if self.gamma ** exponent * reward.gap >= gap_context / d:
            if reward.promote(self.ledger):
                self._promotions += 1

    def resimplify(self, node: PftBeliefNode, gap_context: float, d: int,
                   exponent: int = 0) -> None:
        """Refine rewards under ``node`` along the visit-weighted largest gaps.

        ``exponent`` is the discount power of ``node``'s reward inside the Q
        estimate that triggered the call, and ``d`` that estimate's depth.
        """
        self.ledger.resimplification_calls += 1
        if node.actions:
            best, best_score = None, 0.0
            for act in node.actions:
                score = act.visits * act.gap
                if score > best_score:
                    best, best_score = act, score
            if best is not None:
                for child in best.children:
                    self.resimplify(child, gap_context, d, exponent + 1)
                self.reconstruct(best)
        self._refine(node.reward, exponent, gap_context, d)
        self._refine_rollout(node, gap_context, d, exponent)

    def _refine_rollout(self, node, gap_context, d, exponent) -> None:
        weakest, weakest_score = None, 0.0
        for k, step in enumerate(node.rollout):
            score = self.gamma ** (exponent + 1 + k) * step.reward.gap
            if score > weakest_score:
                weakest, weakest_score = (k, step), score
        if weakest is not None:
            k, step = weakest
            self._refine(step.reward, exponent + 1 + k, gap_context, d)

    def _promote_largest(self, act: PftActionNode) -> bool:
        """Fallback: promote the single largest discounted gap under ``act``."""
        best, best_score = None, 0.0
        stack = [(child, 0) for child in act.children]
        while stack:
            node, e = stack.pop()
            candidates = [(node.reward, e)]
            candidates += [(s.reward, e + 1 + k) for k, s in enumerate(node.rollout)]
            for reward, exp in candidates:
                score = self.gamma ** exp * reward.gap
                if not reward.at_max and score > best_score:
                    best, best_score = reward, score
            for a in node.actions:
                stack.extend((c, e + 1) for c in a.children)
        if best is None or not best.promote(self.ledger):
            return False
        self._reconstruct_subtree(act)
        return True

    def _reconstruct_subtree(self, act: PftActionNode) -> None:
        for child in act.children:
            for a in child.actions:
                self._reconstruct_subtree(a)
        self.reconstruct(act)

    def _resimplify_action(self, node: PftBeliefNode, act: PftActionNode, d: int) -> bool:
        """Tighten ``act``; returns False when its bounds cannot move any more."""
        self._resimp_depth = min(self._resimp_depth, d)
        before = self._promotions
        gap_context = act.gap
        for child in act.children:
            self.resimplify(child, gap_context, d)
        self.reconstruct(act)
        if self._promotions > before or act.gap <= 0.0:
            return True
        if self._promote_largest(act):
            return True
        old = (act.q_lower, act.q_upper)
        self._reconstruct_subtree(act)
        return (act.q_lower, act.q_upper) != old

    # search

    def action_selection(self, node: PftBeliefNode, c: float, d: int,
                         final: bool = False) -> PftActionNode:
        dpw = self.dpw
        if not final and len(node.actions) < self.problem.n_actions and \
                len(node.actions) <= dpw.k_a * node.visits ** dpw.alpha_a:
            self._add_action(node)
        if final:
            candidates = [a for a in node.actions if a.visits > 0]
        else:
            for act in node.actions:
                if act.visits == 0:
                    return act
            candidates = node.actions
        while True:
            bounds = [ucb_bounds(a, node.visits, c) for a in candidates]
            best = 0
            for i in range(1, len(candidates)):
                if bounds[i][0] > bounds[best][0]:
                    best = i
            target, gap, overlap = candidates[best], 0.0, False
            for i, act in enumerate(candidates):
                if i != best and bounds[best][0] < bounds[i][1]:
                    overlap = True
                    if act.gap > gap:
                        gap, target = act.gap, act
            if not overlap or not self._resimplify_action(node, target, d):
                return candidates[best]

    def simulate(self, node: PftBeliefNode, d: int) -> tuple[float, float]:
        if d == 0:
            return 0.0, 0.0
        act = self.action_selection(node, self.dpw.c, d)
        self.trace.append(("act", node.node_id, act.action))
        gamma = self.gamma
        if act.terminal_value is not None:
            low = high = act.terminal_value
        elif len(act.children) <= self.dpw.k_o * act.visits ** self.dpw.alpha_o:
            child = self._expand(node, act, d)
            if child is None:
                return 0.0, 0.0
            child.parent_visits = 1
            r_low, r_high = self._rollout(child, d - 1)
            low = child.reward.lower + gamma * r_low
            high = child.reward.upper + gamma * r_high
        else:
            child = act.children[int(self.rng["widening"].integers(len(act.children)))]
            self.trace.append(("revisit", node.node_id, act.action, child.node_id))
            child.parent_visits += 1
            sub_low, sub_high = self.simulate(child, d - 1)
            low = child.reward.lower + gamma * sub_low
            high = child.reward.upper + gamma * sub_high
        node.visits += 1
        act.visits += 1
        if self.simplified and self._resimp_depth < d:
            self.reconstruct(act)
        else:
            act.q_lower += (low - act.q_lower) / act.visits
            act.q_upper += (high - act.q_upper) / act.visits
        return low, high

    def plan(self, belief: WeightedParticleBelief, time: int = 0) -> int:
        start = _time.perf_counter()
        self.root = root = self._new_node(belief, time, self.dpw.depth)
        for i in range(self.dpw.iterations):
            self._resimp_depth = math.inf
            self.trace.append(("sim", i))
            self.simulate(root, self.dpw.depth)
        self._resimp_depth = math.inf
        best = self.action_selection(root, 0.0, self.dpw.depth, final=True)
        self.trace.append(("final", best.action))
        self.ledger.wall_ms += (_time.perf_counter() - start) * 1000.0
        self._record_levels(root)
        return best.action

    def iter_nodes(self, root: PftBeliefNode | None = None):
        stack = [root or self.root]
        while stack:
            node = stack.pop()
            yield node
            for act in reversed(node.actions):
                stack.extend(reversed(act.children))

    def export_trace(self, path) -> None:
        """Write the simulation trace as one JSON array per line."""
        with open(path, "w") as fh:
            for event in self.trace:
                fh.write(json.dumps([list(e) if isinstance(e, tuple) else e
                                     for e in event]) + "\n")

    def visit_snapshot(self) -> list[tuple]:
        return [(n.node_id, n.visits, tuple((a.action, a.visits) for a in n.actions))
                for n in self.iter_nodes()]

    def _record_levels(self, root: PftBeliefNode) -> None:
        depth0 = root.time
        for node in self.iter_nodes(root):
            if node.reward is not None:
                self.ledger.final_levels.append((node.time - depth0,
                                                 node.reward.particles_used))
            for k, step in enumerate(node.rollout):
                if not step.terminal:
                    self.ledger.final_levels.append((node.time - depth0 + 1 + k,
                                                     step.reward.particles_used))


def pft_dpw_plan(root_belief, problem: Problem, dpw: DpwConfig, seed: int,
                 ledger: RunLedger | None = None, time: int = 0) -> int:
    return PftPlanner(problem, dpw, seed, ledger=ledger).plan(root_belief, time)


def sith_pft_plan(root_belief, problem: Problem, dpw: DpwConfig,
                  schedule: SimplificationSchedule, seed: int,
                  ledger: RunLedger | None = None, time: int = 0) -> int:
    return PftPlanner(problem, dpw, seed, schedule, ledger).plan(root_belief, time)
