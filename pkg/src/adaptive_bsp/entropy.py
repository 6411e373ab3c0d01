"""Boers differential-entropy estimator and adaptive bounds on its negative.

Bounds are kept on the information term -H (the quantity planners reward).
For a transition from ``b_prev`` to ``b_post`` under action ``a`` and
observation ``z`` with particles x_j (weights w_j) and x'_i (weights w'_i):

    -H = -log sum_i p_Z(z|x'_i) w_i + sum_i w'_i log[p_Z(z|x'_i) sum_j p_T(x'_i|x_j) w_j]

The upper bound replaces the inner mixture by the density supremum m for rows
outside the row set R; the lower bound restricts the inner sum to the column
set C. Every evaluation p_T(x'_i | x_j) is computed at most once: rows that
have been completed keep their entries at not-yet-used columns so later
column promotions can reuse them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .belief import SimplificationIndexSet, WeightedParticleBelief
from .errors import AlreadyAtMaxLevel, NonpositiveLikelihood
from .ledger import RunLedger
from .models import ObservationModel, TransitionModel

FLOOR = 1e-300
LOG_FLOOR = math.log(FLOOR)


def _log_first_term(log_pz: np.ndarray, prior_weights: np.ndarray) -> float:
    with np.errstate(divide="ignore"):
        terms = log_pz + np.log(prior_weights)
    top = np.max(terms)
    if not np.isfinite(top):
        return LOG_FLOOR
    value = top + math.log(math.fsum(np.exp(terms - top)))
    return max(value, LOG_FLOOR)


def _row_terms(log_pz: np.ndarray, mixtures: np.ndarray) -> np.ndarray:
    """log(max(p_Z * mixture, FLOOR)) computed without underflowing p_Z."""
    with np.errstate(divide="ignore"):
        logs = log_pz + np.log(mixtures)
    if np.any(np.isnan(logs)):
        raise NonpositiveLikelihood("negative or NaN density inside a log")
    return np.maximum(logs, LOG_FLOOR)


def boers_entropy(b_prev: WeightedParticleBelief, action, observation,
                  b_post: WeightedParticleBelief, transition: TransitionModel,
                  obs: ObservationModel, ledger: RunLedger | None = None) -> float:
    """Boers estimate of the posterior differential entropy."""
    if b_prev.n_x != b_post.n_x:
        raise ValueError("beliefs must have the same particle count")
    n = b_post.n_x
    log_pz = obs.log_likelihood(observation, b_post.particles)
    kernel = np.exp(transition.log_density_pairwise(
        b_post.particles, b_prev.particles, action))
    mixtures = (kernel * b_prev.weights[None, :]).sum(axis=1)
    if ledger is not None:
        ledger.obs_calls += n
        ledger.motion_calls += n * n
    first = _log_first_term(log_pz, b_prev.weights)
    second = math.fsum(b_post.weights * _row_terms(log_pz, mixtures))
    return first - second


@dataclass
class EntropyTermCache:
    """Partial sums backing one (lower, upper) pair.

    ``prior_mix[i]`` is sum_{j in C} p_T(x'_i|x_j) w_j for every row i.
    ``full_mix[i]`` is the complete mixture for covered rows (NaN elsewhere).
    ``pending_block`` holds the kernel rows of the covered rows listed in
    ``pending_rows``; only entries at columns outside C are still needed.
    """

    b_prev: WeightedParticleBelief
    b_post: WeightedParticleBelief
    action: np.ndarray
    transition: TransitionModel
    density_max: float
    log_pz: np.ndarray
    log_first: float
    prior_mix: np.ndarray
    full_mix: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    pending_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    pending_block: np.ndarray | None = None

    def drop_pending(self) -> None:
        self.pending_rows = np.zeros(0, dtype=int)
        self.pending_block = None


@dataclass
class EntropyBoundsState:
    level: int
    lower: float
    upper: float
    cache: EntropyTermCache
    n_max: int

    @property
    def at_max(self) -> bool:
        return self.level >= self.n_max

    @property
    def rows_used(self) -> int:
        return int(self.cache.rows.sum())


def _kernel(cache: EntropyTermCache, rows: np.ndarray, cols: np.ndarray,
            ledger: RunLedger | None) -> np.ndarray:
    if ledger is not None:
        ledger.motion_calls += len(rows) * len(cols)
    if len(rows) == 0 or len(cols) == 0:
        return np.zeros((len(rows), len(cols)))
    return np.exp(cache.transition.log_density_pairwise(
        cache.b_post.particles[rows], cache.b_prev.particles[cols], cache.action))


def _add_columns(cache: EntropyTermCache, new_cols: np.ndarray,
                 ledger: RunLedger | None) -> None:
    if len(new_cols) == 0:
        return
    w_new = cache.b_prev.weights[new_cols]
    if len(cache.pending_rows):
        cache.prior_mix[cache.pending_rows] += cache.pending_block[:, new_cols] @ w_new
    open_rows = np.flatnonzero(~cache.rows)
    block = _kernel(cache, open_rows, new_cols, ledger)
    cache.prior_mix[open_rows] += block @ w_new
    cache.cols[new_cols] = True


def _add_rows(cache: EntropyTermCache, new_rows: np.ndarray,
              ledger: RunLedger | None) -> None:
    if len(new_rows) == 0:
        return
    rest = np.flatnonzero(~cache.cols)
    block = _kernel(cache, new_rows, rest, ledger)
    cache.full_mix[new_rows] = cache.prior_mix[new_rows] + block @ cache.b_prev.weights[rest]
    cache.rows[new_rows] = True
    if len(rest):
        rows = np.zeros((len(new_rows), cache.b_prev.n_x))
        rows[:, rest] = block
        if cache.pending_block is None:
            cache.pending_rows, cache.pending_block = np.asarray(new_rows), rows
        else:
            cache.pending_rows = np.concatenate([cache.pending_rows, new_rows])
            cache.pending_block = np.vstack([cache.pending_block, rows])


def _evaluate(cache: EntropyTermCache) -> tuple[float, float]:
    w_post = cache.b_post.weights
    lower_terms = _row_terms(cache.log_pz, cache.prior_mix)
    upper_terms = np.where(
        cache.rows,
        _row_terms(cache.log_pz, np.where(cache.rows, cache.full_mix, 1.0)),
        np.maximum(cache.log_pz + math.log(cache.density_max), LOG_FLOOR))
    upper = math.fsum(w_post * upper_terms) - cache.log_first
    if cache.rows.all() and cache.cols.all():
        return upper, upper
    lower = math.fsum(w_post * lower_terms) - cache.log_first
    return lower, upper


def _as_indices(index_set) -> np.ndarray:
    if isinstance(index_set, SimplificationIndexSet):
        return np.asarray(index_set.indices, dtype=int)
    return np.asarray(index_set, dtype=int)


def entropy_bounds_at_level(b_prev: WeightedParticleBelief, action, observation,
                            b_post: WeightedParticleBelief, index_prev, index_post,
                            m: float, transition: TransitionModel,
                            obs: ObservationModel, n_max: int,
                            level: int | None = None,
                            ledger: RunLedger | None = None) -> EntropyBoundsState:
    """Bounds (lower, upper) on -H using columns ``index_prev`` and rows ``index_post``.

    ``level`` defaults to the level stored on the index sets. When both sets
    cover every particle the two bounds coincide.
    """
    if b_prev.n_x != b_post.n_x:
        raise ValueError("beliefs must have the same particle count")
    if level is None:
        level = getattr(index_post, "level", None) or getattr(index_prev, "level")
    n = b_post.n_x
    log_pz = obs.log_likelihood(observation, b_post.particles)
    if ledger is not None:
        ledger.obs_calls += n
    cache = EntropyTermCache(
        b_prev=b_prev, b_post=b_post, action=np.asarray(action, dtype=float),
        transition=transition, density_max=float(m), log_pz=log_pz,
        log_first=_log_first_term(log_pz, b_prev.weights),
        prior_mix=np.zeros(n), full_mix=np.full(n, np.nan),
        rows=np.zeros(n, dtype=bool), cols=np.zeros(n, dtype=bool))
    _add_columns(cache, _as_indices(index_prev), ledger)
    _add_rows(cache, _as_indices(index_post), ledger)
    lower, upper = _evaluate(cache)
    if cache.rows.all() and cache.cols.all():
        cache.drop_pending()
    return EntropyBoundsState(level, lower, upper, cache, n_max)


def promote_entropy_bounds(state: EntropyBoundsState, next_prev_indices,
                           next_post_indices, ledger: RunLedger | None = None
                           ) -> EntropyBoundsState:
    """Advance one level, evaluating only kernel entries not seen before.

    The state is updated in place and also returned.
    """
    if state.at_max:
        raise AlreadyAtMaxLevel(f"already at level {state.level}")
    cache = state.cache
    new_cols = _as_indices(next_prev_indices)
    new_cols = new_cols[~cache.cols[new_cols]]
    new_rows = _as_indices(next_post_indices)
    new_rows = new_rows[~cache.rows[new_rows]]
    _add_columns(cache, new_cols, ledger)
    _add_rows(cache, new_rows, ledger)
    state.level += 1
    state.lower, state.upper = _evaluate(cache)
    if cache.rows.all() and cache.cols.all():
        cache.drop_pending()
    return state
