"""Transition and observation models and the particle-filter update.

All densities are evaluated in log space; ``density`` helpers exponentiate
at the boundary. Model objects are immutable and carry no random state.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod

import numpy as np

from .belief import WeightedParticleBelief
from .errors import AllWeightsZero, UnboundedDensity, ZeroLikelihoodObservation

LOG_2PI = math.log(2.0 * math.pi)


class TransitionModel(ABC):
    @abstractmethod
    def sample(self, states: np.ndarray, action: np.ndarray,
               rng: np.random.Generator) -> np.ndarray:
        """Propagate an (n, d) array of states one step."""

    @abstractmethod
    def log_density(self, next_states: np.ndarray, states: np.ndarray,
                    action: np.ndarray) -> np.ndarray:
        """Row-wise log p(next_states[i] | states[i], action)."""

    @abstractmethod
    def log_density_pairwise(self, next_states: np.ndarray, states: np.ndarray,
                             action: np.ndarray) -> np.ndarray:
        """(r, c) matrix of log p(next_states[i] | states[j], action)."""

    def density(self, next_states, states, action) -> np.ndarray:
        return np.exp(self.log_density(np.atleast_2d(next_states),
                                       np.atleast_2d(states), action))

    @property
    def density_max(self) -> float:
        raise UnboundedDensity(f"{type(self).__name__} has no finite supremum")


class ObservationModel(ABC):
    @abstractmethod
    def sample(self, state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw one observation at a single state vector."""

    @abstractmethod
    def log_likelihood(self, observation: np.ndarray,
                       states: np.ndarray) -> np.ndarray:
        """log p(observation | states[i]) for every row of ``states``."""

    def density(self, observation, states) -> np.ndarray:
        return np.exp(self.log_likelihood(np.asarray(observation, dtype=float),
                                          np.atleast_2d(states)))


def _isotropic_log_pdf(sq_dist, variance, dim):
    return -0.5 * (dim * (LOG_2PI + np.log(variance)) + sq_dist / variance)


class GaussianDriftModel(TransitionModel):
    """x' ~ N(x + a, sigma^2 I); ``sigma`` is a standard deviation."""

    def __init__(self, sigma: float, dim: int = 2):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.sigma = float(sigma)
        self.dim = int(dim)
        self._var = self.sigma ** 2
        self._log_norm = -0.5 * self.dim * (LOG_2PI + math.log(self._var))

    def sample(self, states, action, rng):
        states = np.atleast_2d(states)
        noise = rng.standard_normal(states.shape)
        return states + np.asarray(action, dtype=float) + self.sigma * noise

    def log_density(self, next_states, states, action):
        diff = next_states - states - np.asarray(action, dtype=float)
        return self._log_norm - 0.5 * np.einsum("ij,ij->i", diff, diff) / self._var

    def log_density_pairwise(self, next_states, states, action):
        means = states + np.asarray(action, dtype=float)
        diff = next_states[:, None, :] - means[None, :, :]
        sq = np.einsum("ijk,ijk->ij", diff, diff)
        return self._log_norm - 0.5 * sq / self._var

    @property
    def density_max(self) -> float:
        return math.exp(self._log_norm)


class ProductTransitionModel(TransitionModel):
    """Independent models acting on consecutive blocks of the state.

    The action vector is split the same way as the state.
    """

    def __init__(self, parts: list[TransitionModel], dims: list[int]):
        self.parts = list(parts)
        self.dims = list(dims)
        self._cuts = np.cumsum([0] + self.dims)

    def _blocks(self, array):
        return [array[..., a:b] for a, b in zip(self._cuts, self._cuts[1:])]

    def sample(self, states, action, rng):
        states = np.atleast_2d(states)
        action = np.asarray(action, dtype=float)
        return np.concatenate(
            [m.sample(s, a, rng) for m, s, a in
             zip(self.parts, self._blocks(states), self._blocks(action))], axis=1)

    def log_density(self, next_states, states, action):
        action = np.asarray(action, dtype=float)
        return sum(m.log_density(n, s, a) for m, n, s, a in
                   zip(self.parts, self._blocks(next_states),
                       self._blocks(states), self._blocks(action)))

    def log_density_pairwise(self, next_states, states, action):
        action = np.asarray(action, dtype=float)
        return sum(m.log_density_pairwise(n, s, a) for m, n, s, a in
                   zip(self.parts, self._blocks(next_states),
                       self._blocks(states), self._blocks(action)))

    @property
    def density_max(self) -> float:
        return math.prod(m.density_max for m in self.parts)


class BeaconObservationModel(ObservationModel):
    """Gaussian observation whose spread grows with distance to the nearest beacon.

    The standard deviation is ``sigma * max(min(d, cap), d_min)`` where ``d`` is
    the distance from the state to its nearest beacon. With ``relative=True``
    the mean is the offset from that beacon, otherwise the state itself.
    ``cap=None`` means no cap. Only the first two state coordinates are used.
    """

    def __init__(self, beacons, sigma: float, d_min: float,
                 relative: bool = True, cap: float | None = None):
        self.beacons = np.array(beacons, dtype=float, ndmin=2)
        self.sigma = float(sigma)
        self.d_min = float(d_min)
        self.relative = relative
        self.cap = cap
        if self.sigma <= 0 or self.d_min <= 0:
            raise ValueError("sigma and d_min must be positive")

    def _nearest(self, positions):
        diff = positions[:, None, :] - self.beacons[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        nearest = np.argmin(dist, axis=1)
        return self.beacons[nearest], dist[np.arange(len(positions)), nearest]

    def noise_std(self, positions) -> np.ndarray:
        _, dist = self._nearest(np.atleast_2d(positions)[:, :2])
        if self.cap is not None:
            dist = np.minimum(dist, self.cap)
        return self.sigma * np.maximum(dist, self.d_min)

    def _mean_and_std(self, states):
        positions = states[:, :2]
        beacon, dist = self._nearest(positions)
        if self.cap is not None:
            dist = np.minimum(dist, self.cap)
        std = self.sigma * np.maximum(dist, self.d_min)
        mean = positions - beacon if self.relative else positions
        return mean, std

    def sample(self, state, rng):
        mean, std = self._mean_and_std(np.atleast_2d(state))
        return mean[0] + std[0] * rng.standard_normal(2)

    def log_likelihood(self, observation, states):
        mean, std = self._mean_and_std(np.atleast_2d(states))
        diff = np.asarray(observation, dtype=float)[:2] - mean
        return _isotropic_log_pdf(np.einsum("ij,ij->i", diff, diff), std ** 2, 2)


class TargetTrackingObservationModel(ObservationModel):
    """Beacon observation of the agent times a relative observation of the target.

    State layout is (agent_x, agent_y, target_x, target_y). The relative part
    is N(agent - target, cov) with cov = far_sigma^2 * ||agent - target|| * I when
    the separation is at least ``d_min`` and near_sigma^2 * I otherwise.
    """

    def __init__(self, agent_model: BeaconObservationModel, far_sigma: float,
                 near_sigma: float, d_min: float):
        self.agent_model = agent_model
        self.far_sigma = float(far_sigma)
        self.near_sigma = float(near_sigma)
        self.d_min = float(d_min)

    def _relative(self, states):
        offset = states[:, :2] - states[:, 2:4]
        sep = np.sqrt(np.einsum("ij,ij->i", offset, offset))
        var = np.where(sep >= self.d_min, self.far_sigma ** 2 * sep,
                       self.near_sigma ** 2)
        return offset, var

    def sample(self, state, rng):
        state = np.atleast_2d(state)
        agent_part = self.agent_model.sample(state[:, :2], rng)
        offset, var = self._relative(state)
        rel = offset[0] + math.sqrt(var[0]) * rng.standard_normal(2)
        return np.concatenate([agent_part, rel])

    def log_likelihood(self, observation, states):
        states = np.atleast_2d(states)
        observation = np.asarray(observation, dtype=float)
        agent_ll = self.agent_model.log_likelihood(observation[:2], states[:, :2])
        offset, var = self._relative(states)
        diff = observation[2:4] - offset
        rel_ll = _isotropic_log_pdf(np.einsum("ij,ij->i", diff, diff), var, 2)
        return agent_ll + rel_ll


def transition_density_max(model: TransitionModel) -> float:
    return model.density_max


def pf_update(belief: WeightedParticleBelief, action, observation,
              transition: TransitionModel, obs: ObservationModel,
              rng: np.random.Generator) -> WeightedParticleBelief:
    """Propagate every particle and reweight by the observation likelihood.

    No resampling is performed.
    """
    moved = transition.sample(belief.particles, action, rng)
    with np.errstate(divide="ignore"):
        log_w = np.log(belief.weights) + obs.log_likelihood(observation, moved)
    try:
        return WeightedParticleBelief.from_log_weights(moved, log_w)
    except AllWeightsZero as exc:
        raise ZeroLikelihoodObservation(
            "observation has zero likelihood under every particle") from exc


def sample_observation(belief: WeightedParticleBelief, action,
                       transition: TransitionModel, obs: ObservationModel,
                       rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw a particle by weight, propagate it and observe it."""
    index = rng.choice(belief.n_x, p=belief.weights)
    state = transition.sample(belief.particles[index:index + 1], action, rng)[0]
    return state, obs.sample(state, rng)
