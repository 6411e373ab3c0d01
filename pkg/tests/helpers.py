from dataclasses import replace

import numpy as np

from adaptive_bsp.given_tree import build_sparse_sampling_tree
from adaptive_bsp.scenarios import build_problem, default_config, sample_initial_belief


def light_dark(n_actions=3, lam=0.5, n_x=10, **overrides):
    config = default_config("light_dark", lam=lam, n_x=n_x, **overrides)
    problem = build_problem(config)
    problem = replace(problem, actions=problem.actions[:n_actions],
                      action_names=problem.action_names[:n_actions])
    return config, problem


def small_tree(seed, n_actions=3, n_z=(2, 2), lam=0.5, n_x=10, ledger=None):
    config, problem = light_dark(n_actions, lam, n_x, horizon=len(n_z), n_z=list(n_z))
    belief = sample_initial_belief(config, np.random.default_rng([seed, 0]))
    root = build_sparse_sampling_tree(belief, problem, list(n_z), len(n_z),
                                      np.random.default_rng([seed, 1]), ledger=ledger)
    return config, problem, root
