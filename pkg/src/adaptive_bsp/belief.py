"""Weighted particle beliefs and nested particle-index chains."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AllWeightsZero


@dataclass(frozen=True)
class WeightedParticleBelief:
    """A set of state samples with normalized weights.

    ``particles`` has shape (n_x, d_state) and ``weights`` shape (n_x,).
    Both arrays are made read-only so a belief can be shared between trees.
    """

    particles: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        particles = np.array(self.particles, dtype=float, ndmin=2)
        weights = np.array(self.weights, dtype=float, ndmin=1)
        if particles.shape[0] != weights.shape[0]:
            raise ValueError("particles and weights disagree on n_x")
        if particles.shape[0] < 1:
            raise ValueError("a belief needs at least one particle")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and nonnegative")
        particles.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "particles", particles)
        object.__setattr__(self, "weights", weights)

    @property
    def n_x(self) -> int:
        return self.particles.shape[0]

    @property
    def d_state(self) -> int:
        return self.particles.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.particles

    def covariance(self) -> np.ndarray:
        centered = self.particles - self.mean()
        return (centered * self.weights[:, None]).T @ centered

    @classmethod
    def uniform(cls, particles) -> "WeightedParticleBelief":
        particles = np.array(particles, dtype=float, ndmin=2)
        n = particles.shape[0]
        return cls(particles, np.full(n, 1.0 / n))

    @classmethod
    def from_log_weights(cls, particles, log_weights) -> "WeightedParticleBelief":
        """Normalize log-domain weights; raises AllWeightsZero if all are -inf."""
        log_weights = np.asarray(log_weights, dtype=float)
        top = np.max(log_weights)
        if not np.isfinite(top):
            raise AllWeightsZero("every particle weight is zero")
        weights = np.exp(log_weights - top)
        return cls(particles, weights / weights.sum())


def normalize_weights(belief: WeightedParticleBelief) -> WeightedParticleBelief:
    """Scale weights to sum to one; already normalized beliefs come back as is."""
    total = math.fsum(belief.weights)
    if total <= 0.0:
        raise AllWeightsZero("every particle weight is zero")
    if abs(total - 1.0) <= 1e-12:
        return belief
    return WeightedParticleBelief(belief.particles, belief.weights / total)


@dataclass(frozen=True)
class SimplificationSchedule:
    """Particle counts used by each simplification level, coarsest first."""

    level_sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.level_sizes)
        if not sizes or sizes[0] < 1:
            raise ValueError("level sizes must start at 1 or more")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("level sizes must be strictly increasing")
        object.__setattr__(self, "level_sizes", sizes)

    @property
    def n_max(self) -> int:
        return len(self.level_sizes)

    @property
    def n_x(self) -> int:
        return self.level_sizes[-1]

    def size(self, level: int) -> int:
        return self.level_sizes[level - 1]

    @classmethod
    def uniform(cls, n_x: int, n_max: int = 10) -> "SimplificationSchedule":
        """Equally spaced levels, ceil(s * n_x / n_max) particles at level s.

        Duplicate sizes (when n_x < n_max) are dropped, so the number of
        levels can be smaller than requested.
        """
        sizes = sorted({math.ceil(s * n_x / n_max) for s in range(1, n_max + 1)})
        return cls(tuple(sizes))


@dataclass(frozen=True)
class SimplificationIndexSet:
    level: int
    indices: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)


def make_index_chain(n_x: int, schedule: SimplificationSchedule,
                     rng: np.random.Generator) -> list[SimplificationIndexSet]:
    """Draw nested index sets, one per level, uniformly without replacement.

    A single permutation is drawn and each level takes a prefix of it, so the
    level s+1 set extends the level s set with fresh indices.
    """
    if schedule.n_x != n_x:
        raise ValueError(f"schedule is for n_x={schedule.n_x}, got {n_x}")
    order = rng.permutation(n_x)
    chain = []
    for level, size in enumerate(schedule.level_sizes, start=1):
        indices = np.sort(order[:size])
        indices.flags.writeable = False
        chain.append(SimplificationIndexSet(level, indices))
    return chain
