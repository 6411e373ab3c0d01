import numpy as np
import pytest

from adaptive_bsp.belief import (
    SimplificationSchedule,
    WeightedParticleBelief,
    make_index_chain,
    normalize_weights,
)
from adaptive_bsp.errors import AllWeightsZero


def belief(weights):
    return WeightedParticleBelief(np.zeros((len(weights), 2)), weights)


def test_normalize_equal_weights():
    assert np.allclose(normalize_weights(belief([2.0, 2.0])).weights, [0.5, 0.5])


def test_normalize_keeps_ratios():
    assert np.allclose(normalize_weights(belief([1.0, 0.0, 3.0])).weights, [0.25, 0.0, 0.75])


def test_normalize_all_zero_raises():
    with pytest.raises(AllWeightsZero):
        normalize_weights(belief([0.0, 0.0]))


def test_normalize_is_idempotent_bitwise():
    b = normalize_weights(belief([0.3, 1.7, 2.9, 0.1]))
    again = normalize_weights(b)
    assert np.array_equal(b.weights, again.weights)


def test_from_log_weights_all_minus_inf():
    with pytest.raises(AllWeightsZero):
        WeightedParticleBelief.from_log_weights(np.zeros((2, 2)), [-np.inf, -np.inf])


def test_belief_rejects_bad_input():
    with pytest.raises(ValueError):
        WeightedParticleBelief(np.zeros((2, 2)), [0.5, -0.5])
    with pytest.raises(ValueError):
        WeightedParticleBelief(np.zeros((3, 2)), [0.5, 0.5])


def test_belief_is_read_only():
    b = WeightedParticleBelief.uniform(np.ones((3, 2)))
    with pytest.raises(ValueError):
        b.weights[0] = 1.0


def test_mean_and_covariance():
    b = WeightedParticleBelief([[0.0, 0.0], [2.0, 4.0]], [0.5, 0.5])
    assert np.allclose(b.mean(), [1.0, 2.0])
    assert np.allclose(b.covariance(), [[1.0, 2.0], [2.0, 4.0]])


def test_schedule_validation():
    with pytest.raises(ValueError):
        SimplificationSchedule((3, 3, 5))
    with pytest.raises(ValueError):
        SimplificationSchedule((0, 4))


def test_uniform_schedule_sizes():
    assert SimplificationSchedule.uniform(100).level_sizes == tuple(range(10, 101, 10))
    assert SimplificationSchedule.uniform(50).level_sizes == tuple(range(5, 51, 5))
    small = SimplificationSchedule.uniform(4, 10)
    assert small.level_sizes == (1, 2, 3, 4)
    assert small.n_max == 4 and small.n_x == 4


def test_chain_top_level_is_everything():
    chain = make_index_chain(4, SimplificationSchedule((2, 4)), np.random.default_rng(0))
    assert len(chain) == 2
    assert set(chain[0].indices) < set(chain[1].indices)
    assert set(chain[1].indices) == {0, 1, 2, 3}


def test_chain_nesting_and_sizes():
    schedule = SimplificationSchedule.uniform(100)
    chain = make_index_chain(100, schedule, np.random.default_rng(7))
    assert [len(c) for c in chain] == [10 * s for s in range(1, 11)]
    assert [c.level for c in chain] == list(range(1, 11))
    for lo, hi in zip(chain, chain[1:]):
        assert set(lo.indices) < set(hi.indices)
    for c in chain:
        assert len(set(c.indices)) == len(c)


def test_chain_is_deterministic():
    schedule = SimplificationSchedule.uniform(30)
    a = make_index_chain(30, schedule, np.random.default_rng(3))
    b = make_index_chain(30, schedule, np.random.default_rng(3))
    assert all(np.array_equal(x.indices, y.indices) for x, y in zip(a, b))


def test_chain_rejects_wrong_size():
    with pytest.raises(ValueError):
        make_index_chain(10, SimplificationSchedule((2, 4)), np.random.default_rng(0))


def test_chain_draws_are_uniform():
    schedule = SimplificationSchedule((1, 5))
    rng = np.random.default_rng(11)
    counts = np.zeros(5)
    for _ in range(5000):
        counts[make_index_chain(5, schedule, rng)[0].indices[0]] += 1
    assert np.all(np.abs(counts / 5000 - 0.2) < 0.03)
