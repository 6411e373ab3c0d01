"""Belief space planning with adaptively simplified information rewards."""

from .belief import (
    SimplificationIndexSet,
    SimplificationSchedule,
    WeightedParticleBelief,
    make_index_chain,
)
from .entropy import boers_entropy, entropy_bounds_at_level, promote_entropy_bounds
from .errors import ConsistencyViolation, PlanningError
from .given_tree import build_sparse_sampling_tree, lazy_bsp_plan, sith_bsp_solve, ss_solve
from .harness import (
    bounds_study,
    emit_results,
    particle_speedup,
    run_consistency_experiment,
    run_episode,
    time_speedup,
)
from .ledger import RunLedger
from .mcts import DpwConfig, PftPlanner, pft_dpw_plan, sith_pft_plan
from .problem import Problem
from .reward import RewardSpec, composite_reward, composite_reward_bounds
from .scenarios import ScenarioConfig, build_problem, default_config

__version__ = "0.1.0"
