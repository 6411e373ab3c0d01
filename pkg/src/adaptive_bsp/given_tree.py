"""Planners over an externally built (sparse sampling) belief tree.

Three solvers share one tree structure:

* ``ss_solve`` evaluates every reward exactly and backs up values.
* ``sith_bsp_solve`` starts from coarse reward bounds and, at every node,
  prunes dominated actions and refines the coarsest surviving subtrees until
  a single action is left.
* ``lazy_bsp_plan`` only removes bound overlap at the root, refining one
  lace at a time along the largest gaps.

The two bound-based solvers return the same action as ``ss_solve``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .belief import SimplificationSchedule, WeightedParticleBelief, make_index_chain
from .errors import ZeroLikelihoodObservation
from .ledger import RunLedger
from .models import pf_update, sample_observation
from .problem import Problem
from .reward import RewardInterval, composite_reward_bounds


@dataclass(eq=False)
class Branch:
    observation: np.ndarray
    child: "BeliefTreeNode"
    reward: RewardInterval | None = None


@dataclass
class QBoundsEntry:
    action: int
    q_lower: float
    q_upper: float
    level: int
    pruned: bool = False

    @property
    def gap(self) -> float:
        return self.q_upper - self.q_lower


@dataclass(eq=False)
class BeliefTreeNode:
    node_id: int
    belief: WeightedParticleBelief
    depth: int
    time: int
    parent_id: int | None = None
    action: int | None = None
    children: list[list[Branch]] = field(default_factory=list)
    v_lower: float = 0.0
    v_upper: float = 0.0
    value_level: int = 0
    best_action: int | None = None
    q: list[QBoundsEntry] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def iter_nodes(self) -> Iterator["BeliefTreeNode"]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            for branches in reversed(node.children):
                stack.extend(br.child for br in reversed(branches))

    def iter_branches(self) -> Iterator[tuple["BeliefTreeNode", int, Branch]]:
        for node in self.iter_nodes():
            for a, branches in enumerate(node.children):
                for br in branches:
                    yield node, a, br

    def count(self) -> int:
        return sum(1 for _ in self.iter_nodes())


def build_sparse_sampling_tree(root_belief: WeightedParticleBelief, problem: Problem,
                               n_z: Sequence[int], horizon: int,
                               rng: np.random.Generator, time: int = 0,
                               max_redraws: int = 50,
                               ledger: RunLedger | None = None) -> BeliefTreeNode:
    """Grow a full tree: every action at every non-leaf node, n_z[depth] observations each."""
    if horizon < 1 or len(n_z) != horizon:
        raise ValueError("n_z needs one entry per depth and horizon >= 1")
    counter = iter(range(1 << 62))
    root = BeliefTreeNode(next(counter), root_belief, 0, time)

    def grow(node: BeliefTreeNode) -> None:
        if node.depth == horizon:
            return
        for a in range(problem.n_actions):
            control = problem.control(a, node.time)
            branches = []
            for _ in range(n_z[node.depth]):
                for _attempt in range(max_redraws):
                    _, z = sample_observation(node.belief, control, problem.transition,
                                              problem.observation, rng)
                    try:
                        post = pf_update(node.belief, control, z, problem.transition,
                                         problem.observation, rng)
                        break
                    except ZeroLikelihoodObservation:
                        if ledger is not None:
                            ledger.rejected_observations += 1
                else:
                    raise ZeroLikelihoodObservation(
                        f"no usable observation after {max_redraws} draws")
                child = BeliefTreeNode(next(counter), post, node.depth + 1, node.time + 1,
                                       parent_id=node.node_id, action=a)
                branches.append(Branch(np.asarray(z), child))
            node.children.append(branches)
        for branches in node.children:
            for br in branches:
                grow(br.child)

    grow(root)
    return root


def expected_node_count(n_actions: int, n_z: Sequence[int]) -> int:
    total, layer = 1, 1
    for nz in n_z:
        layer *= n_actions * nz
        total += layer
    return total


def export_tree(root: BeliefTreeNode, path) -> None:
    """Write one JSON object per node (id, parent, depth, action, observation, level)."""
    parents: dict[int, Branch] = {br.child.node_id: br for _, _, br in root.iter_branches()}
    with open(path, "w") as fh:
        for node in root.iter_nodes():
            br = parents.get(node.node_id)
            record = {
                "id": node.node_id,
                "parent": node.parent_id,
                "depth": node.depth,
                "action": node.action,
                "observation": None if br is None else [float(v) for v in br.observation],
                "level": None if br is None or br.reward is None else br.reward.level,
            }
            fh.write(json.dumps(record) + "\n")


def record_final_levels(root: BeliefTreeNode, ledger: RunLedger) -> None:
    for _, _, br in root.iter_branches():
        ledger.final_levels.append((br.child.depth, br.reward.particles_used))


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


def _q_entry(node: BeliefTreeNode, a: int, gamma: float, n_max: int) -> QBoundsEntry:
    branches = node.children[a]
    lower = _mean(br.reward.lower for br in branches) + \
        gamma * _mean(br.child.v_lower for br in branches)
    upper = _mean(br.reward.upper for br in branches) + \
        gamma * _mean(br.child.v_upper for br in branches)
    level = min(min(br.reward.level for br in branches),
                min(br.child.value_level for br in branches))
    return QBoundsEntry(a, lower, upper, min(level, n_max))


def _argmax_first(values: Sequence[float], allowed: Sequence[int]) -> int:
    best = allowed[0]
    for a in allowed[1:]:
        if values[a] > values[best]:
            best = a
    return best


def _mark_leaf(node: BeliefTreeNode, n_max: int) -> None:
    node.v_lower = node.v_upper = 0.0
    node.value_level = n_max
    node.q = []


# exact baseline

def ss_solve(root: BeliefTreeNode, problem: Problem,
             ledger: RunLedger | None = None,
             n_max: int = 1) -> tuple[int, float, list[float]]:
    """Backward induction with exact rewards.

    Returns the best root action, its value and the Q value of every root action.
    """
    gamma = problem.gamma

    def solve(node: BeliefTreeNode) -> None:
        if node.is_leaf:
            _mark_leaf(node, n_max)
            return
        for a, branches in enumerate(node.children):
            for br in branches:
                solve(br.child)
                br.reward = problem.exact_interval(node.belief, a, node.time,
                                                   br.observation, br.child.belief,
                                                   n_max, ledger)
        node.q = [_q_entry(node, a, gamma, n_max) for a in range(len(node.children))]
        values = [e.q_lower for e in node.q]
        node.best_action = _argmax_first(values, list(range(len(values))))
        node.v_lower = node.v_upper = values[node.best_action]
        node.value_level = n_max

    solve(root)
    if ledger is not None:
        record_final_levels(root, ledger)
    return root.best_action, root.v_lower, [e.q_lower for e in root.q]


# shared helpers for the bound-based solvers

class _BoundContext:
    def __init__(self, problem: Problem, schedule: SimplificationSchedule,
                 chain_rng: np.random.Generator, ledger: RunLedger | None):
        self.problem = problem
        self.schedule = schedule
        self.n_max = schedule.n_max
        self.gamma = problem.gamma
        self.chain_rng = chain_rng
        self.ledger = ledger
        self.m = problem.transition.density_max

    def init_reward(self, node: BeliefTreeNode, a: int, br: Branch, level: int) -> None:
        chain = make_index_chain(node.belief.n_x, self.schedule, self.chain_rng)
        br.reward = composite_reward_bounds(
            node.belief, self.problem.control(a, node.time), br.observation,
            br.child.belief, chain, self.problem.reward, self.m,
            self.problem.transition, self.problem.observation, level=level,
            ledger=self.ledger)

    def refresh(self, node: BeliefTreeNode, a: int) -> QBoundsEntry:
        pruned = node.q[a].pruned if a < len(node.q) else False
        entry = _q_entry(node, a, self.gamma, self.n_max)
        entry.pruned = pruned
        node.q[a] = entry
        return entry

    def count_call(self) -> None:
        if self.ledger is not None:
            self.ledger.resimplification_calls += 1


def prune(entries: list[QBoundsEntry]) -> list[QBoundsEntry]:
    """Mark every entry whose upper bound is strictly below the best lower bound."""
    live = [e for e in entries if not e.pruned]
    if not live:
        return entries
    best_lower = max(e.q_lower for e in live)
    for e in live:
        if best_lower > e.q_upper:
            e.pruned = True
    return entries


def _set_policy_value(node: BeliefTreeNode) -> None:
    live = [e for e in node.q if not e.pruned]
    best = live[0]
    for e in live[1:]:
        if e.q_lower > best.q_lower:
            best = e
    node.best_action = best.action
    node.v_lower, node.v_upper = best.q_lower, best.q_upper
    node.value_level = best.level


# SITH-BSP

def resimplify_reward(ctx: _BoundContext, node: BeliefTreeNode, a: int,
                      br: Branch) -> bool:
    """Promote one reward a single level and refresh the parent's Q bounds."""
    promoted = br.reward.promote(ctx.ledger)
    if promoted:
        ctx.refresh(node, a)
    return promoted


def _resimplify_tree(ctx: _BoundContext, node: BeliefTreeNode, a: int,
                     s_min: int) -> None:
    ctx.count_call()
    for br in node.children[a]:
        br.reward.promote(ctx.ledger)
        if not br.child.is_leaf and br.child.value_level <= s_min:
            resimplify_subtree(ctx, br.child, s_min)
    ctx.refresh(node, a)


def resimplify_subtree(ctx: _BoundContext, child: BeliefTreeNode, s_min: int) -> None:
    """Refine the policy subtree below ``child`` and update its value bounds."""
    ctx.count_call()
    _resimplify_tree(ctx, child, child.best_action, s_min)
    _set_policy_value(child)


def sith_bsp_solve(root: BeliefTreeNode, problem: Problem,
                   schedule: SimplificationSchedule, chain_rng: np.random.Generator,
                   ledger: RunLedger | None = None,
                   initial_level: int | str = 1) -> tuple[int, list[tuple[float, float]]]:
    """Prune-and-refine solve; returns the best root action and root Q bounds.

    ``initial_level`` is a level number or ``"min_child"`` to start each reward
    at the coarsest level found among the child's own subtree.
    """
    ctx = _BoundContext(problem, schedule, chain_rng, ledger)
    n_max = ctx.n_max

    def solve(node: BeliefTreeNode) -> None:
        if node.is_leaf:
            _mark_leaf(node, n_max)
            return
        node.q = []
        for a, branches in enumerate(node.children):
            for br in branches:
                solve(br.child)
                if initial_level == "min_child":
                    level = 1 if br.child.is_leaf else br.child.value_level
                else:
                    level = int(initial_level)
                ctx.init_reward(node, a, br, level)
            node.q.append(_q_entry(node, a, ctx.gamma, n_max))
        while True:
            prune(node.q)
            live = [e for e in node.q if not e.pruned]
            if len(live) == 1:
                break
            s_min = min(e.level for e in live)
            if s_min >= n_max:
                break
            for e in live:
                if e.level == s_min:
                    _resimplify_tree(ctx, node, e.action, s_min)
        _set_policy_value(node)

    solve(root)
    if ledger is not None:
        record_final_levels(root, ledger)
    return root.best_action, [(e.q_lower, e.q_upper) for e in root.q]


# LAZY-BSP

def _set_lazy_value(node: BeliefTreeNode) -> None:
    node.v_lower = max(e.q_lower for e in node.q)
    node.v_upper = max(e.q_upper for e in node.q)
    node.value_level = min(e.level for e in node.q)


def _lazy_resimplify(ctx: _BoundContext, node: BeliefTreeNode,
                     allowed: list[int] | None = None) -> bool:
    """Refine one lace under ``node``; returns whether anything was promoted."""
    if node.is_leaf:
        return False
    ctx.count_call()
    allowed = allowed if allowed is not None else list(range(len(node.q)))
    gaps = [e.gap for e in node.q]
    a = _argmax_first(gaps, allowed)
    if gaps[a] <= 0.0:
        return False
    branches = node.children[a]
    value_gaps = [br.child.v_upper - br.child.v_lower for br in branches]
    reward_gaps = [br.reward.gap for br in branches]
    idx = range(len(branches))
    if branches[0].child.is_leaf or max(value_gaps) <= 0.0:
        pick = _argmax_first(reward_gaps, list(idx))
    else:
        pick = _argmax_first(value_gaps, list(idx))
    br = branches[pick]
    promoted = br.reward.promote(ctx.ledger)
    if not br.child.is_leaf:
        promoted = _lazy_resimplify(ctx, br.child) or promoted
    ctx.refresh(node, a)
    _set_lazy_value(node)
    return promoted


def lazy_bsp_plan(root: BeliefTreeNode, problem: Problem,
                  schedule: SimplificationSchedule, chain_rng: np.random.Generator,
                  ledger: RunLedger | None = None) -> tuple[int, list[tuple[float, float]]]:
    """Root-only overlap removal; returns the best root action and root Q bounds."""
    ctx = _BoundContext(problem, schedule, chain_rng, ledger)

    def bound(node: BeliefTreeNode) -> None:
        if node.is_leaf:
            _mark_leaf(node, ctx.n_max)
            return
        node.q = []
        for a, branches in enumerate(node.children):
            for br in branches:
                bound(br.child)
                ctx.init_reward(node, a, br, 1)
            node.q.append(_q_entry(node, a, ctx.gamma, ctx.n_max))
        _set_lazy_value(node)

    bound(root)
    while True:
        prune(root.q)
        live = [e.action for e in root.q if not e.pruned]
        lowers = [e.q_lower for e in root.q]
        best = _argmax_first(lowers, live)
        others = [a for a in live if a != best]
        if not others:
            break
        delta = max(root.q[a].q_upper for a in others) - root.q[best].q_lower
        if not delta > 0.0:
            break
        if not _lazy_resimplify(ctx, root, live):
            break
    live = [e.action for e in root.q if not e.pruned]
    root.best_action = _argmax_first([e.q_lower for e in root.q], live)
    if ledger is not None:
        record_final_levels(root, ledger)
    return root.best_action, [(e.q_lower, e.q_upper) for e in root.q]
