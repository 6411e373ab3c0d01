"""Problem instances and reference entropy estimators.

Scenario configs are plain JSON documents; ``ScenarioConfig.from_file``
accepts any subset of the fields below and fills the rest with defaults.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .belief import SimplificationSchedule, WeightedParticleBelief
from .errors import DegenerateBandwidth, NonPSDCovariance
from .mcts import DpwConfig
from .models import (
    BeaconObservationModel,
    GaussianDriftModel,
    ProductTransitionModel,
    TargetTrackingObservationModel,
)
from .problem import Problem, TerminalAction
from .reward import ENTROPY, SAFE_LOCALIZATION, RewardSpec, SafetySpec

_DIAG = 1.0 / math.sqrt(2.0)
DIRECTIONS = {
    "right": (1.0, 0.0),
    "up_right": (_DIAG, _DIAG),
    "up": (0.0, 1.0),
    "up_left": (-_DIAG, _DIAG),
    "left": (-1.0, 0.0),
    "down_left": (-_DIAG, -_DIAG),
    "down": (0.0, -1.0),
    "down_right": (_DIAG, -_DIAG),
}
NULL = "null"

SCENARIOS = ("light_dark", "light_dark_mcts", "target_tracking", "safe_localization")


@dataclass
class ScenarioConfig:
    name: str = "light_dark"
    beacons: list = field(default_factory=lambda: [[1.0, 3.0], [4.0, 1.0], [4.0, 6.0],
                                                   [7.0, 4.0], [8.0, 8.0]])
    sigma_t: float = 0.1
    sigma_o: float = 0.1
    d_min: float = 1e-4
    observation_cap: float | None = None
    relative_observation: bool = True
    prior_mean: list = field(default_factory=lambda: [0.0, 0.0])
    prior_cov: float = 0.2
    true_start: list | None = None
    goal: list = field(default_factory=lambda: [9.0, 9.0])
    state_reward: str = "sq_distance"
    lam: float = 0.1
    gamma: float = 0.95
    horizon: int = 3
    n_z: list = field(default_factory=lambda: [1, 3, 3])
    sessions: int = 5
    n_x: int = 50
    n_max: int = 10
    planner: str = "sith"
    initial_level: int | str = 1
    include_null: bool = False
    terminal_radius: float = 0.5
    terminal_rewards: list = field(default_factory=lambda: [200.0, -200.0])
    target_start: list = field(default_factory=lambda: [2.0, 0.0])
    target_cycle: list = field(default_factory=lambda: ["up", "up", "left"])
    target_prior_cov: float = 0.2
    relative_far_sigma: float | None = None
    relative_near_sigma: float | None = None
    safe_axis: int = 1
    safe_threshold: float = -0.5
    safety_delta: float = 0.9
    safety_weight: float = 1000.0
    mcts: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.name!r}; choose from {SCENARIOS}")
        if min(self.sigma_t, self.sigma_o, self.d_min, self.prior_cov) <= 0:
            raise ValueError("all noise scales must be positive")
        if len(self.n_z) != self.horizon:
            raise ValueError("n_z needs one entry per horizon step")

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)

    def schedule(self) -> SimplificationSchedule:
        return SimplificationSchedule.uniform(self.n_x, self.n_max)

    def dpw(self) -> DpwConfig:
        return DpwConfig(**self.mcts)


def _action_set(include_null: bool):
    names = list(DIRECTIONS)
    vectors = [DIRECTIONS[n] for n in names]
    if include_null:
        names.append(NULL)
        vectors.append((0.0, 0.0))
    return np.array(vectors), tuple(names)


def _state_reward(kind: str, goal: np.ndarray):
    if kind == "sq_distance":
        return lambda x, a: -np.sum((x[:, :2] - goal) ** 2, axis=1)
    if kind == "distance":
        return lambda x, a: -np.linalg.norm(x[:, :2] - goal, axis=1)
    raise ValueError(f"unknown state reward {kind!r}")


def _half_plane(axis: int, threshold: float):
    return lambda x: x[:, axis] >= threshold


def build_light_dark(config: ScenarioConfig) -> Problem:
    """Beacon world with a drifting robot; also serves the MCTS and safety variants."""
    goal = np.asarray(config.goal, dtype=float)
    actions, names = _action_set(config.include_null)
    transition = GaussianDriftModel(config.sigma_t, 2)
    observation = BeaconObservationModel(config.beacons, config.sigma_o, config.d_min,
                                         relative=config.relative_observation,
                                         cap=config.observation_cap)
    if config.name == "safe_localization":
        safety = SafetySpec(_half_plane(config.safe_axis, config.safe_threshold),
                            config.safety_delta, config.safety_weight)
        reward = RewardSpec(1.0, config.gamma, variant=SAFE_LOCALIZATION, safety=safety)
    else:
        reward = RewardSpec(config.lam, config.gamma,
                            _state_reward(config.state_reward, goal), variant=ENTROPY)
    terminal = None
    if config.include_null:
        inside, outside = config.terminal_rewards
        terminal = TerminalAction(names.index(NULL), goal, config.terminal_radius,
                                  inside, outside)
    return Problem(transition, observation, reward, actions, names, terminal)


def build_target_tracking(config: ScenarioConfig) -> Problem:
    """Agent plus a target that cycles through a fixed list of unit moves.

    State is (agent, target); the agent's action set includes a zero move.
    """
    actions, names = _action_set(True)
    transition = ProductTransitionModel(
        [GaussianDriftModel(config.sigma_t, 2), GaussianDriftModel(config.sigma_t, 2)],
        [2, 2])
    agent_obs = BeaconObservationModel(config.beacons, config.sigma_o, config.d_min,
                                       relative=config.relative_observation)
    far = config.relative_far_sigma if config.relative_far_sigma is not None else config.sigma_t
    near = config.relative_near_sigma if config.relative_near_sigma is not None else config.sigma_o
    observation = TargetTrackingObservationModel(agent_obs, far, near, config.d_min)
    cycle = [np.asarray(DIRECTIONS[n]) for n in config.target_cycle]

    def control(agent_action, time):
        return np.concatenate([agent_action, cycle[time % len(cycle)]])

    def separation(x, a):
        return -np.sum((x[:, :2] - x[:, 2:4]) ** 2, axis=1)

    reward = RewardSpec(config.lam, config.gamma, separation)
    return Problem(transition, observation, reward, actions, names, None, control)


def build_problem(config: ScenarioConfig) -> Problem:
    if config.name == "target_tracking":
        return build_target_tracking(config)
    return build_light_dark(config)


def prior_mean(config: ScenarioConfig) -> np.ndarray:
    if config.name == "target_tracking":
        return np.concatenate([config.prior_mean, config.target_start]).astype(float)
    return np.asarray(config.prior_mean, dtype=float)


def true_initial_state(config: ScenarioConfig) -> np.ndarray:
    mean = prior_mean(config)
    if config.true_start is None:
        return mean
    start = np.asarray(config.true_start, dtype=float)
    if config.name == "target_tracking":
        start = np.concatenate([start, config.target_start])
    return start


def sample_initial_belief(config: ScenarioConfig,
                          rng: np.random.Generator) -> WeightedParticleBelief:
    mean = prior_mean(config)
    scales = np.full(len(mean), math.sqrt(config.prior_cov))
    if config.name == "target_tracking":
        scales[2:] = math.sqrt(config.target_prior_cov)
    particles = mean + scales * rng.standard_normal((config.n_x, len(mean)))
    return WeightedParticleBelief.uniform(particles)


# reference estimators

def gaussian_entropy(cov) -> float:
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if not np.allclose(cov, cov.T):
        raise NonPSDCovariance("covariance is not symmetric")
    eig = np.linalg.eigvalsh(cov)
    if np.any(eig <= 0):
        raise NonPSDCovariance("covariance is not positive definite")
    d = cov.shape[0]
    return 0.5 * (d * math.log(2 * math.pi * math.e) + float(np.sum(np.log(eig))))


def kalman_entropy_reference(prior_cov, true_states, sigma_t: float,
                             obs_model: BeaconObservationModel) -> list[float]:
    """Entropy after each step of a Kalman filter on the additive beacon model.

    ``true_states`` are the robot positions after each move; their distance to
    the nearest beacon fixes the observation noise of that step.
    """
    cov = np.atleast_2d(np.asarray(prior_cov, dtype=float))
    gaussian_entropy(cov)
    eye = np.eye(cov.shape[0])
    out = []
    for state in np.atleast_2d(true_states):
        cov = cov + sigma_t ** 2 * eye
        obs_var = float(obs_model.noise_std(state[None, :2])[0]) ** 2
        gain = cov @ np.linalg.inv(cov + obs_var * eye)
        cov = (eye - gain) @ cov
        cov = 0.5 * (cov + cov.T)
        out.append(gaussian_entropy(cov))
    return out


def kde_entropy(belief: WeightedParticleBelief) -> float:
    """Resubstitution entropy of a Gaussian KDE with Silverman bandwidths per axis."""
    x, w = belief.particles, belief.weights
    n, d = x.shape
    if n < 2:
        raise DegenerateBandwidth("need at least two particles")
    mean = w @ x
    std = np.sqrt(w @ (x - mean) ** 2)
    if np.any(std <= 0):
        raise DegenerateBandwidth("zero spread along an axis")
    n_eff = 1.0 / float(np.sum(w ** 2))
    h = std * (4.0 / ((d + 2) * n_eff)) ** (1.0 / (d + 4))
    diff = (x[:, None, :] - x[None, :, :]) / h
    log_k = -0.5 * np.sum(diff ** 2, axis=2) - np.sum(np.log(h)) - 0.5 * d * math.log(2 * math.pi)
    with np.errstate(divide="ignore"):
        log_terms = log_k + np.log(w)[None, :]
    top = np.max(log_terms, axis=1, keepdims=True)
    log_p = top[:, 0] + np.log(np.sum(np.exp(log_terms - top), axis=1))
    return -math.fsum(w * log_p)


def discrete_weight_entropy(belief: WeightedParticleBelief) -> float:
    w = belief.weights[belief.weights > 0]
    return -math.fsum(w * np.log(w))


# weighted initial particles for the estimator study

STUDY_COMPONENTS = ((0.0, 1.0), (1.0, 0.0), (-1.0, 0.0), (1.0, -1.0))
STUDY_COMPONENT_VAR = (2.0, 0.2)


def _diag_gauss_logpdf(x, mean, var):
    var = np.asarray(var, dtype=float)
    return -0.5 * (np.sum(np.log(2 * math.pi * var)) + np.sum((x - mean) ** 2 / var, axis=1))


def mixture_proposal_belief(n_x: int, rng: np.random.Generator,
                            prior_cov: float = 2.0) -> WeightedParticleBelief:
    """Particles from a four-component mixture weighted by N(0, prior_cov I) / q."""
    comps = rng.integers(len(STUDY_COMPONENTS), size=n_x)
    means = np.asarray(STUDY_COMPONENTS)[comps]
    particles = means + np.sqrt(STUDY_COMPONENT_VAR) * rng.standard_normal((n_x, 2))
    log_q = np.logaddexp.reduce(
        [_diag_gauss_logpdf(particles, m, STUDY_COMPONENT_VAR) for m in STUDY_COMPONENTS],
        axis=0) - math.log(len(STUDY_COMPONENTS))
    log_b0 = _diag_gauss_logpdf(particles, np.zeros(2), (prior_cov, prior_cov))
    return WeightedParticleBelief.from_log_weights(particles, log_b0 - log_q)


STUDY_BEACONS = {
    1: [[3.0, 3.0], [8.0, 8.0]],
    2: [[3.0, 1.0], [5.0, 5.0], [7.0, 10.0]],
}


def study_actions(scenario: int) -> list[str]:
    if scenario == 1:
        return ["up_right"] * 15
    if scenario == 2:
        return ["right"] * 5 + ["up"] * 10 + ["right"] * 5
    raise ValueError("estimator study scenarios are 1 and 2")


PRESETS = {
    "light_dark": {},
    "light_dark_mcts": {
        "name": "light_dark_mcts",
        "beacons": [[-3.5, 1.0]],
        "sigma_t": 0.075,
        "sigma_o": 0.075,
        "observation_cap": 1.0,
        "relative_observation": False,
        "prior_mean": [-5.5, 0.0],
        "goal": [0.0, 0.0],
        "state_reward": "distance",
        "lam": 0.5,
        "horizon": 1,
        "n_z": [1],
        "sessions": 3,
        "include_null": True,
        "planner": "sith-pft",
        "mcts": {"depth": 30, "iterations": 200},
    },
    "target_tracking": {
        "name": "target_tracking",
        "n_z": [1, 3, 3],
        "n_x": 30,
        "sessions": 3,
    },
    "safe_localization": {
        "name": "safe_localization",
        "beacons": [[2.0, 2.0]],
        "sigma_t": 0.075,
        "sigma_o": 0.075,
        "observation_cap": 1.0,
        "relative_observation": False,
        "goal": [0.0, 0.0],
        "prior_cov": 0.05,
        "safety_delta": 0.8,
        "horizon": 1,
        "n_z": [1],
        "sessions": 1,
        "planner": "sith-pft",
        "mcts": {"depth": 2, "iterations": 100},
    },
}


def default_config(name: str = "light_dark", **overrides) -> ScenarioConfig:
    """Preset for one of the named scenarios, with field overrides applied."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return ScenarioConfig.from_dict({**PRESETS[name], **overrides})
