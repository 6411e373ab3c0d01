"""One test per acceptance criterion; each prints a PASS/FAIL line."""

import copy
import time

import numpy as np
import pytest

from adaptive_bsp.belief import SimplificationSchedule, make_index_chain
from adaptive_bsp.entropy import boers_entropy, entropy_bounds_at_level, promote_entropy_bounds
from adaptive_bsp.errors import ConsistencyViolation
from adaptive_bsp.given_tree import lazy_bsp_plan, sith_bsp_solve, ss_solve
from adaptive_bsp.harness import bounds_study, particle_speedup, run_consistency_experiment, run_trials
from adaptive_bsp.ledger import RunLedger
from adaptive_bsp.mcts import PftPlanner
from adaptive_bsp.scenarios import build_problem, default_config, sample_initial_belief
from conftest import random_instance
from helpers import small_tree

SIZES = (4, 16, 64)


def _close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def _instances(count, seed):
    rng = np.random.default_rng(seed)
    for i in range(count):
        n = SIZES[i % len(SIZES)]
        yield rng, n, random_instance(rng, n)


def test_criterion_01_bracketing(report):
    start = time.perf_counter()
    worst, failures = np.inf, 0
    for rng, n, inst in _instances(10_000, 101):
        b_prev, a, z, b_post, transition, obs = inst
        schedule = SimplificationSchedule.uniform(n, int(rng.integers(1, 11)))
        chain = make_index_chain(n, schedule, rng)
        index_set = chain[int(rng.integers(schedule.n_max))]
        st = entropy_bounds_at_level(b_prev, a, z, b_post, index_set, index_set,
                                     transition.density_max, transition, obs, schedule.n_max)
        neg_h = -boers_entropy(*inst)
        slack = min(neg_h - st.lower, st.upper - neg_h)
        worst = min(worst, slack)
        failures += slack < -1e-9
    elapsed = time.perf_counter() - start
    ok = failures == 0 and elapsed < 30
    report(1, ok, f"10000 instances, min slack {worst:.3e}, {failures} violations, {elapsed:.1f}s")
    assert ok


def test_criterion_02_monotone_and_convergent(report):
    start = time.perf_counter()
    widen, unconverged = 0, 0
    for rng, n, inst in _instances(1_000, 202):
        b_prev, a, z, b_post, transition, obs = inst
        schedule = SimplificationSchedule.uniform(n, 10)
        chain = make_index_chain(n, schedule, rng)
        st = entropy_bounds_at_level(b_prev, a, z, b_post, chain[0], chain[0],
                                     transition.density_max, transition, obs, schedule.n_max)
        for nxt in chain[1:]:
            lo, hi = st.lower, st.upper
            promote_entropy_bounds(st, nxt, nxt)
            widen += (st.lower < lo - 1e-10) or (st.upper > hi + 1e-10)
        neg_h = -boers_entropy(*inst)
        unconverged += not (_close(st.lower, neg_h, 1e-10) and _close(st.upper, neg_h, 1e-10))
    elapsed = time.perf_counter() - start
    ok = widen == 0 and unconverged == 0 and elapsed < 30
    report(2, ok, f"1000 instances, {widen} widening steps, {unconverged} unconverged, "
                  f"{elapsed:.1f}s")
    assert ok


def test_criterion_03_incremental_equals_scratch(report):
    mismatches, checks = 0, 0
    for rng, n, inst in _instances(1_000, 303):
        b_prev, a, z, b_post, transition, obs = inst
        schedule = SimplificationSchedule.uniform(n, 10)
        chain = make_index_chain(n, schedule, rng)
        m = transition.density_max
        st = entropy_bounds_at_level(b_prev, a, z, b_post, chain[0], chain[0], m,
                                     transition, obs, schedule.n_max)
        for nxt in chain[1:]:
            promote_entropy_bounds(st, nxt, nxt)
            scratch = entropy_bounds_at_level(b_prev, a, z, b_post, nxt, nxt, m,
                                              transition, obs, schedule.n_max)
            checks += 1
            mismatches += not (_close(st.lower, scratch.lower, 1e-10)
                               and _close(st.upper, scratch.upper, 1e-10))
    ok = mismatches == 0
    report(3, ok, f"{checks} promoted levels compared, {mismatches} mismatches")
    assert ok


def test_criterion_04_forced_full_level_matches_ss(report):
    worst = 0.0
    for seed in range(5):
        _, problem, root = small_tree(seed, n_actions=3, n_z=(2, 2, 2), lam=0.5, n_x=30)
        schedule = SimplificationSchedule.uniform(30, 10)
        _, _, ss_q = ss_solve(copy.deepcopy(root), problem)
        _, bounds = sith_bsp_solve(root, problem, schedule, np.random.default_rng(seed),
                                   initial_level=schedule.n_max)
        for q, (lo, hi) in zip(ss_q, bounds):
            worst = max(worst, abs(lo - q), abs(hi - q))
    ok = worst <= 1e-9
    report(4, ok, f"5 trees of 258 nodes, max |Q bound - Q| = {worst:.2e}")
    assert ok


GIVEN_TREE = dict(n_x=50, horizon=3, n_z=[1, 2, 2], sessions=5)
SEEDS_PER_LAMBDA = 25


@pytest.fixture(scope="module")
def given_tree_runs():
    start = time.perf_counter()
    runs = {}
    for lam in (0.1, 0.5):
        config = default_config("light_dark", lam=lam, **GIVEN_TREE)
        for planner in ("ss", "sith", "lazy"):
            runs[lam, planner] = run_trials(config, planner, range(SEEDS_PER_LAMBDA))
    return runs, time.perf_counter() - start


def test_criterion_05_given_tree_action_identity(report, given_tree_runs):
    runs, elapsed = given_tree_runs
    same_actions = same_returns = total = 0
    for lam in (0.1, 0.5):
        for ss, sith, lazy in zip(runs[lam, "ss"], runs[lam, "sith"], runs[lam, "lazy"]):
            total += 1
            same_actions += ss.actions == sith.actions == lazy.actions
            same_returns += ss.returns == sith.returns == lazy.returns
    ok = same_actions == total and same_returns == total and elapsed < 600
    report(5, ok, f"{same_actions}/{total} identical actions, {same_returns}/{total} identical "
                  f"returns, {elapsed:.0f}s")
    assert ok


def test_criterion_06_mcts_tree_consistency(report):
    start = time.perf_counter()
    config = default_config("light_dark_mcts")
    assert (config.n_x, config.dpw().depth, config.dpw().iterations) == (50, 30, 200)
    try:
        result = run_consistency_experiment(config, ("pft-dpw", "sith-pft"), 25)
        passed, detail = result.passed, ""
    except ConsistencyViolation as exc:
        passed, detail = 0, f" ({exc})"
    elapsed = time.perf_counter() - start
    ok = passed == 25 and elapsed < 900
    report(6, ok, f"{passed}/25 identical traces and actions, {elapsed:.0f}s{detail}")
    assert ok


def test_criterion_07_call_accounting(report):
    n_x, exact, strictly_lower, relevant = 50, True, True, 0
    for seed in range(10):
        _, problem, root = small_tree(seed, n_actions=3, n_z=(1, 2), lam=0.5, n_x=n_x)
        non_root = root.count() - 1
        ss_ledger = RunLedger()
        ss_solve(copy.deepcopy(root), problem, ss_ledger)
        exact &= (non_root, ss_ledger.motion_calls, ss_ledger.obs_calls) == (21, 52_500, 1_050)
        schedule = SimplificationSchedule.uniform(n_x, 10)
        for solve in (sith_bsp_solve, lazy_bsp_plan):
            ledger = RunLedger()
            solve(copy.deepcopy(root), problem, schedule, np.random.default_rng(seed), ledger)
            if any(used < n_x for _, used in ledger.final_levels):
                relevant += 1
                strictly_lower &= ledger.motion_calls < ss_ledger.motion_calls
            exact &= ledger.obs_calls == ss_ledger.obs_calls
    ok = exact and strictly_lower
    report(7, ok, f"SS 52500/1050 calls exact={exact}; bound planners strictly lower in "
                  f"{relevant} simplified runs: {strictly_lower}")
    assert ok


def test_criterion_08_speedup_direction(report, given_tree_runs):
    runs, _ = given_tree_runs
    good, speeds = 0, []
    for sith, lazy in zip(runs[0.1, "sith"], runs[0.1, "lazy"]):
        s = particle_speedup(sith.ledger.final_levels, sith.n_x)
        l = particle_speedup(lazy.ledger.final_levels, lazy.n_x)
        speeds.append((s, l))
        good += s > 30 and l >= s
    share = good / len(speeds)
    mean_s, mean_l = np.mean(speeds, axis=0)
    ok = share >= 0.9
    report(8, ok, f"{good}/{len(speeds)} seeds with SITH > 30% and LAZY >= SITH "
                  f"(mean {mean_s:.1f}% / {mean_l:.1f}%)")
    assert ok


def _subtree(node):
    yield node
    for act in node.actions:
        for child in act.children:
            yield from _subtree(child)


def test_criterion_09_safe_localization(report):
    config = default_config("safe_localization")
    problem = build_problem(config)
    seeds, good = range(20), 0
    for seed in seeds:
        belief = sample_initial_belief(config, np.random.default_rng([seed, 0]))
        planner = PftPlanner(problem, config.dpw(), [seed, 0], config.schedule())
        action = planner.plan(belief)
        unsafe, safe = set(), set()
        for act in planner.root.actions:
            flags = [child.reward.exact_part < 0 for child in act.children]
            if flags and all(flags):
                unsafe.add(act.action)
            elif not any(flags):
                safe.add(act.action)
        untouched = all(node.reward.level == 1
                        for act in planner.root.actions if act.action in unsafe
                        for child in act.children for node in _subtree(child))
        good += bool(unsafe) and action in safe and untouched
    share = good / len(seeds)
    ok = share >= 0.9
    report(9, ok, f"{good}/{len(seeds)} seeds pick a safe action with unsafe branches at level 1")
    assert ok


def test_criterion_10_estimator_study(report):
    start = time.perf_counter()
    rows = bounds_study(1, n_x=300, fractions=(0.1, 0.5, 0.9), seed=0)
    nested = bracketed = 0
    for row in rows:
        widths = [row.bounds[n][1] - row.bounds[n][0] for n in (30, 150, 270)]
        nested += widths[0] > widths[1] > widths[2]
        bracketed += all(row.bounds[n][0] - 1e-9 <= -row.boers <= row.bounds[n][1] + 1e-9
                         for n in (30, 150, 270))
    elapsed = time.perf_counter() - start
    ok = nested == bracketed == len(rows) == 15 and elapsed < 60
    report(10, ok, f"{nested}/{len(rows)} steps strictly nested, {bracketed}/{len(rows)} "
                   f"bracketed, {elapsed:.1f}s")
    assert ok
