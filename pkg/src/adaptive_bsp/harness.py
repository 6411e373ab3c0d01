"""Episode runner, consistency checks, metrics and result files."""

from __future__ import annotations

import csv
import math
import time as _time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .belief import SimplificationSchedule, WeightedParticleBelief, make_index_chain
from .entropy import boers_entropy, entropy_bounds_at_level
from .errors import ConsistencyViolation, ZeroLikelihoodObservation
from .given_tree import build_sparse_sampling_tree, lazy_bsp_plan, sith_bsp_solve, ss_solve
from .ledger import RunLedger
from .mcts import PftPlanner
from .models import BeaconObservationModel, GaussianDriftModel, pf_update
from .scenarios import (
    DIRECTIONS,
    STUDY_BEACONS,
    ScenarioConfig,
    build_problem,
    discrete_weight_entropy,
    kalman_entropy_reference,
    kde_entropy,
    mixture_proposal_belief,
    sample_initial_belief,
    study_actions,
    true_initial_state,
)

GIVEN_TREE_PLANNERS = ("ss", "sith", "lazy")
MCTS_PLANNERS = ("pft-dpw", "sith-pft")
PLANNERS = GIVEN_TREE_PLANNERS + MCTS_PLANNERS

TRIAL_COLUMNS = ("scenario", "planner", "seed", "session", "action", "return",
                 "motion_calls", "obs_calls", "resimpl_calls", "wall_ms",
                 "particle_speedup")

_MAX_EXEC_REDRAWS = 100


@dataclass
class TrialResult:
    scenario: str
    planner: str
    seed: int
    n_x: int
    actions: list[int] = field(default_factory=list)
    action_names: list[str] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    returns: list[float] = field(default_factory=list)
    ledgers: list[RunLedger] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    traces: list[list[tuple]] = field(default_factory=list)
    snapshots: list[list[tuple]] = field(default_factory=list)

    @property
    def total_return(self) -> float:
        return self.returns[-1] if self.returns else 0.0

    @property
    def ledger(self) -> RunLedger:
        total = RunLedger()
        for ledger in self.ledgers:
            total.merge(ledger)
        return total

    def level_histogram(self) -> Counter:
        return Counter(self.ledger.final_levels)


def particle_speedup(levels: Sequence[tuple[int, int]], n_x: int) -> float:
    """Share of particles skipped at the final levels, in percent."""
    if not levels:
        return 0.0
    used = math.fsum(n_x - n for _, n in levels)
    return used / (n_x * len(levels)) * 100.0


def time_speedup(baseline_time: float, our_time: float) -> float:
    if baseline_time <= 0 or our_time <= 0:
        raise ValueError("times must be positive")
    return (baseline_time - our_time) / baseline_time * 100.0


def _plan_given_tree(planner, belief, problem, config, seed, session, time, ledger):
    tree_rng = np.random.default_rng([seed, 1, session])
    root = build_sparse_sampling_tree(belief, problem, config.n_z, config.horizon,
                                      tree_rng, time=time, ledger=ledger)
    start = _time.perf_counter()
    if planner == "ss":
        action, _, _ = ss_solve(root, problem, ledger)
    else:
        chain_rng = np.random.default_rng([seed, 2, session])
        schedule = config.schedule()
        if planner == "sith":
            action, _ = sith_bsp_solve(root, problem, schedule, chain_rng, ledger,
                                       initial_level=config.initial_level)
        else:
            action, _ = lazy_bsp_plan(root, problem, schedule, chain_rng, ledger)
    ledger.wall_ms += (_time.perf_counter() - start) * 1000.0
    return action


def _execute(problem, belief, state, action, time, rng):
    """Advance the true state and the belief; redraw noise if the belief rejects z."""
    control = problem.control(action, time)
    for _ in range(_MAX_EXEC_REDRAWS):
        next_state = problem.transition.sample(state[None, :], control, rng)[0]
        z = problem.observation.sample(next_state, rng)
        try:
            post = pf_update(belief, control, z, problem.transition, problem.observation, rng)
        except ZeroLikelihoodObservation:
            continue
        return next_state, z, post
    raise ZeroLikelihoodObservation("execution kept producing unusable observations")


def run_episode(config: ScenarioConfig, planner: str, seed: int,
                record_trace: bool = False) -> TrialResult:
    """Plan and execute ``config.sessions`` steps; the return uses exact rewards."""
    if planner not in PLANNERS:
        raise ValueError(f"unknown planner {planner!r}; choose from {PLANNERS}")
    problem = build_problem(config)
    belief = sample_initial_belief(config, np.random.default_rng([seed, 0]))
    state = true_initial_state(config)
    exec_rng = np.random.default_rng([seed, 3])
    result = TrialResult(config.name, planner, seed, config.n_x, states=[state])
    total, discount = 0.0, 1.0
    for session in range(config.sessions):
        ledger = RunLedger()
        if planner in GIVEN_TREE_PLANNERS:
            action = _plan_given_tree(planner, belief, problem, config, seed, session,
                                      session, ledger)
        else:
            schedule = config.schedule() if planner == "sith-pft" else None
            pft = PftPlanner(problem, config.dpw(), [seed, session], schedule, ledger)
            action = pft.plan(belief, session)
            if record_trace:
                result.traces.append(pft.trace)
                result.snapshots.append(pft.visit_snapshot())
        result.ledgers.append(ledger)
        result.actions.append(action)
        result.action_names.append(problem.action_names[action])
        if problem.is_terminal(action):
            reward = problem.terminal.value(belief)
        else:
            state, z, post = _execute(problem, belief, state, action, session, exec_rng)
            reward = problem.exact_reward(belief, action, session, z, post)
            belief = post
            result.states.append(state)
        total += discount * reward
        discount *= problem.gamma
        result.rewards.append(reward)
        result.returns.append(total)
        if problem.is_terminal(action):
            break
    return result


def run_trials(config: ScenarioConfig, planner: str, seeds: Sequence[int],
               workers: int = 1, record_trace: bool = False) -> list[TrialResult]:
    """Independent trials, optionally on worker threads; results keep seed order."""
    if workers <= 1:
        return [run_episode(config, planner, s, record_trace) for s in seeds]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(lambda s: run_episode(config, planner, s, record_trace), seeds))


@dataclass
class TrialComparison:
    seed: int
    identical: bool
    particle_speedup: float
    time_speedup: float | None
    motion_calls: tuple[int, int]


@dataclass
class ConsistencyReport:
    scenario: str
    pair: tuple[str, str]
    trials: list[TrialComparison]
    results: list[TrialResult]

    @property
    def passed(self) -> int:
        return sum(t.identical for t in self.trials)


def _first_difference(a: Sequence, b: Sequence) -> str | None:
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return f"index {i}: {x!r} != {y!r}"
    if len(a) != len(b):
        return f"length {len(a)} != {len(b)}"
    return None


def _trace_key(event: tuple) -> tuple:
    return tuple(tuple(float(v) for v in e) if isinstance(e, (tuple, np.ndarray)) else e
                 for e in event)


def compare_trials(base: TrialResult, other: TrialResult) -> str | None:
    """Describe the first divergence between two runs, or None if they agree."""
    diff = _first_difference(base.actions, other.actions)
    if diff is not None:
        return f"seed {base.seed} actions differ at {diff}"
    diff = _first_difference(base.returns, other.returns)
    if diff is not None:
        return f"seed {base.seed} returns differ at {diff}"
    for session, (ta, tb) in enumerate(zip(base.traces, other.traces)):
        diff = _first_difference([_trace_key(e) for e in ta], [_trace_key(e) for e in tb])
        if diff is not None:
            return f"seed {base.seed} session {session} trace differs at {diff}"
    for session, (sa, sb) in enumerate(zip(base.snapshots, other.snapshots)):
        diff = _first_difference(sa, sb)
        if diff is not None:
            return f"seed {base.seed} session {session} visit counts differ at {diff}"
    return None


def run_consistency_experiment(config: ScenarioConfig, planner_pair: tuple[str, str],
                               trials: int, seed_base: int = 0,
                               workers: int = 1) -> ConsistencyReport:
    """Run both planners on the same seeds and require identical decisions.

    Raises ConsistencyViolation at the first divergence.
    """
    base_name, other_name = planner_pair
    mcts = base_name in MCTS_PLANNERS
    if mcts != (other_name in MCTS_PLANNERS):
        raise ValueError("both planners must work on the same kind of tree")
    seeds = list(range(seed_base, seed_base + trials))
    base = run_trials(config, base_name, seeds, workers, record_trace=mcts)
    other = run_trials(config, other_name, seeds, workers, record_trace=mcts)
    comparisons = []
    for rb, ro in zip(base, other):
        diff = compare_trials(rb, ro)
        if diff is not None:
            raise ConsistencyViolation(f"{base_name} vs {other_name}: {diff}", diff)
        tb, to = rb.ledger.wall_ms, ro.ledger.wall_ms
        comparisons.append(TrialComparison(
            rb.seed, True, particle_speedup(ro.ledger.final_levels, ro.n_x),
            time_speedup(tb, to) if tb > 0 and to > 0 else None,
            (rb.ledger.motion_calls, ro.ledger.motion_calls)))
    return ConsistencyReport(config.name, planner_pair, comparisons, base + other)


# result files

def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(round(value, 10))
    return str(value)


def write_trials_csv(results: Sequence[TrialResult], path, include_timing: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRIAL_COLUMNS)
        for r in results:
            for session, ledger in enumerate(r.ledgers):
                writer.writerow([_fmt(v) for v in (
                    r.scenario, r.planner, r.seed, session, r.action_names[session],
                    r.returns[session], ledger.motion_calls, ledger.obs_calls,
                    ledger.resimplification_calls,
                    ledger.wall_ms if include_timing else "",
                    particle_speedup(ledger.final_levels, r.n_x))])


def write_levels_csv(results: Sequence[TrialResult], path) -> None:
    counts: Counter = Counter()
    for r in results:
        for (depth, used), n in r.level_histogram().items():
            counts[(r.scenario, r.planner, depth, used)] += n
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("scenario", "planner", "depth", "particles_used", "count"))
        for key in sorted(counts):
            writer.writerow([*key, counts[key]])


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "adaptive-bsp"
    return plt


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    fig.clf()


def plot_trajectories(results: Sequence[TrialResult], path, beacons=None) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 5))
    if beacons is not None:
        b = np.asarray(beacons)
        ax.scatter(b[:, 0], b[:, 1], marker="*", s=120, c="gold", edgecolors="k",
                   label="beacons", zorder=3)
    for r in results:
        xy = np.array([s[:2] for s in r.states])
        ax.plot(xy[:, 0], xy[:, 1], "-o", ms=3, alpha=0.5, lw=0.8)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_aspect("equal", adjustable="datalim")
    if beacons is not None:
        ax.legend(loc="best")
    _save(fig, path)
    plt.close(fig)


def plot_level_histogram(results: Sequence[TrialResult], path) -> None:
    plt = _pyplot()
    counts: Counter = Counter()
    for r in results:
        counts.update(r.level_histogram())
    fig, ax = plt.subplots(figsize=(6, 4))
    if counts:
        keys = sorted(counts)
        depth = [k[0] for k in keys]
        used = [k[1] for k in keys]
        size = np.array([counts[k] for k in keys], dtype=float)
        ax.scatter(depth, used, s=400 * size / size.max(), alpha=0.6)
    ax.set_xlabel("depth")
    ax.set_ylabel("particles used at final level")
    _save(fig, path)
    plt.close(fig)


def emit_results(results: Sequence[TrialResult], out_dir,
                 include_timing: bool = True, beacons=None) -> list[Path]:
    """Write trials.csv, levels.csv and two SVG plots; returns the paths."""
    if not results:
        raise ValueError("no results to write")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "trials.csv", out / "levels.csv", out / "trajectories.svg",
             out / "levels.svg"]
    write_trials_csv(results, paths[0], include_timing)
    write_levels_csv(results, paths[1])
    plot_trajectories(results, paths[2], beacons)
    plot_level_histogram(results, paths[3])
    return paths


# estimator study

@dataclass
class BoundsStudyRow:
    step: int
    state: np.ndarray
    boers: float
    bounds: dict[int, tuple[float, float]]
    kde: float
    discrete: float
    kalman: float


def _resample(belief: WeightedParticleBelief, rng: np.random.Generator) -> WeightedParticleBelief:
    picks = rng.choice(belief.n_x, size=belief.n_x, p=belief.weights)
    return WeightedParticleBelief.uniform(belief.particles[picks])


def bounds_study(scenario: int = 1, n_x: int = 300,
                 fractions: Sequence[float] = (0.1, 0.5, 0.9), seed: int = 0,
                 sigma: float = 0.075, d_min: float = 1e-4,
                 actions: Sequence[str] | None = None, beacons=None,
                 prior_cov: float = 2.0, resample: bool = True) -> list[BoundsStudyRow]:
    """Follow a fixed action sequence and compare entropy estimators per step.

    ``bounds`` maps each simplified particle count to (lower, upper) on the
    negative entropy; the Boers value is reported as an entropy. With
    ``resample`` the filter draws a fresh equally weighted particle set after
    each step, which keeps the weights from collapsing onto a few particles.
    """
    actions = list(actions) if actions is not None else study_actions(scenario)
    if not actions:
        raise ValueError("need at least one action")
    beacons = beacons if beacons is not None else STUDY_BEACONS[scenario]
    sizes = sorted({max(1, int(round(f * n_x))) for f in fractions})
    schedule = SimplificationSchedule(tuple(s for s in sizes if s < n_x) + (n_x,))
    transition = GaussianDriftModel(sigma, 2)
    obs = BeaconObservationModel(beacons, sigma, d_min, relative=False)
    rng = np.random.default_rng([seed, 4])
    belief = mixture_proposal_belief(n_x, rng, prior_cov)
    state = np.zeros(2)
    states, rows = [], []
    for step, name in enumerate(actions, start=1):
        control = np.asarray(DIRECTIONS[name])
        for _ in range(_MAX_EXEC_REDRAWS):
            state_next = transition.sample(state[None, :], control, rng)[0]
            z = obs.sample(state_next, rng)
            try:
                post = pf_update(belief, control, z, transition, obs, rng)
                break
            except ZeroLikelihoodObservation:
                continue
        else:
            raise ZeroLikelihoodObservation("study trajectory produced unusable observations")
        state = state_next
        states.append(state)
        boers = boers_entropy(belief, control, z, post, transition, obs)
        chain = make_index_chain(n_x, schedule, rng)
        bounds = {}
        for index_set in chain:
            st = entropy_bounds_at_level(belief, control, z, post, index_set, index_set,
                                         transition.density_max, transition, obs,
                                         schedule.n_max)
            bounds[len(index_set)] = (st.lower, st.upper)
        rows.append(BoundsStudyRow(step, state, boers, bounds, kde_entropy(post),
                                   discrete_weight_entropy(post), math.nan))
        belief = _resample(post, rng) if resample else post
    kalman = kalman_entropy_reference(prior_cov * np.eye(2), np.array(states), sigma, obs)
    return [replace(r, kalman=k) for r, k in zip(rows, kalman)]


def write_bounds_study(rows: Sequence[BoundsStudyRow], out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sizes = sorted(rows[0].bounds)
    csv_path, svg_path = out / "bounds_study.csv", out / "bounds_study.svg"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["step", "x", "y", "boers_entropy", "kde_entropy", "discrete_entropy",
                  "kalman_entropy"]
        for n in sizes:
            header += [f"lower_{n}", f"upper_{n}"]
        writer.writerow(header)
        for r in rows:
            line = [r.step, *r.state[:2], r.boers, r.kde, r.discrete, r.kalman]
            for n in sizes:
                line += list(r.bounds[n])
            writer.writerow([_fmt(float(v)) if not isinstance(v, int) else v for v in line])
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4))
    steps = [r.step for r in rows]
    for n in sizes[:-1]:
        lo = [r.bounds[n][0] for r in rows]
        hi = [r.bounds[n][1] for r in rows]
        ax.fill_between(steps, lo, hi, alpha=0.25, label=f"bounds, {n} particles")
    ax.plot(steps, [-r.boers for r in rows], "k-o", ms=3, label="-H (all particles)")
    ax.plot(steps, [-r.kalman for r in rows], "g--", label="-H Kalman")
    ax.plot(steps, [-r.kde for r in rows], "m:", label="-H KDE")
    ax.set_xlabel("step")
    ax.set_ylabel("negative entropy")
    ax.legend(loc="best", fontsize=7)
    _save(fig, svg_path)
    plt.close(fig)
    return [csv_path, svg_path]
