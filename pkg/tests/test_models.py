import math

import numpy as np
import pytest

from adaptive_bsp.belief import WeightedParticleBelief
from adaptive_bsp.errors import UnboundedDensity, ZeroLikelihoodObservation
from adaptive_bsp.models import (
    BeaconObservationModel,
    GaussianDriftModel,
    ObservationModel,
    ProductTransitionModel,
    TargetTrackingObservationModel,
    TransitionModel,
    pf_update,
    sample_observation,
    transition_density_max,
)


class SideLikelihood(ObservationModel):
    """Likelihood 0.2 left of the y axis and 0.8 right of it."""

    def sample(self, state, rng):
        return np.zeros(2)

    def log_likelihood(self, observation, states):
        return np.log(np.where(states[:, 0] < 0, 0.2, 0.8))


class Blind(ObservationModel):
    def sample(self, state, rng):
        return np.zeros(2)

    def log_likelihood(self, observation, states):
        return np.full(len(states), -np.inf)


class NoSupremum(TransitionModel):
    def sample(self, states, action, rng):
        return states

    def log_density(self, next_states, states, action):
        return np.zeros(len(states))

    def log_density_pairwise(self, next_states, states, action):
        return np.zeros((len(next_states), len(states)))


def test_density_max_closed_form():
    assert transition_density_max(GaussianDriftModel(0.1)) == pytest.approx(1 / (2 * math.pi * 0.01))
    assert transition_density_max(GaussianDriftModel(1.0)) == pytest.approx(0.15915494, rel=1e-7)


def test_density_max_unbounded():
    with pytest.raises(UnboundedDensity):
        transition_density_max(NoSupremum())


def test_density_max_is_never_exceeded():
    model = GaussianDriftModel(0.3)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(10 ** 6, 2))
    nxt = x + 0.3 * rng.normal(size=x.shape) * rng.uniform(0, 2, size=(10 ** 6, 1))
    assert np.max(model.density(nxt, x, np.zeros(2))) <= model.density_max


def test_gaussian_density_integrates_to_one():
    model = GaussianDriftModel(0.5)
    grid = np.linspace(-4, 4, 401)
    xx, yy = np.meshgrid(grid, grid)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    dens = model.density(pts, np.tile([0.2, -0.1], (len(pts), 1)), np.array([0.3, 0.1]))
    assert dens.sum() * (grid[1] - grid[0]) ** 2 == pytest.approx(1.0, abs=1e-6)


def test_pairwise_matches_rowwise():
    model = GaussianDriftModel(0.7)
    rng = np.random.default_rng(1)
    nxt, cur, a = rng.normal(size=(4, 2)), rng.normal(size=(3, 2)), rng.normal(size=2)
    pair = model.log_density_pairwise(nxt, cur, a)
    for i in range(4):
        for j in range(3):
            assert pair[i, j] == pytest.approx(model.log_density(nxt[i:i + 1], cur[j:j + 1], a)[0])


def test_product_model_factorizes():
    a_model, b_model = GaussianDriftModel(0.2), GaussianDriftModel(0.9)
    joint = ProductTransitionModel([a_model, b_model], [2, 2])
    rng = np.random.default_rng(2)
    x, nxt, act = rng.normal(size=(5, 4)), rng.normal(size=(5, 4)), rng.normal(size=4)
    cov = np.diag([0.04, 0.04, 0.81, 0.81])
    diff = nxt - x - act
    direct = -0.5 * (4 * math.log(2 * math.pi) + math.log(np.linalg.det(cov))
                     + np.einsum("ij,jk,ik->i", diff, np.linalg.inv(cov), diff))
    assert np.allclose(joint.log_density(nxt, x, act), direct)
    assert joint.density_max == pytest.approx(a_model.density_max * b_model.density_max)
    pair = joint.log_density_pairwise(nxt, x, act)
    assert np.allclose(np.diag(pair), direct)


def test_beacon_noise_at_beacon_uses_floor():
    obs = BeaconObservationModel([[1.0, 1.0], [5.0, 5.0]], 0.1, 1e-4)
    assert obs.noise_std(np.array([[1.0, 1.0]]))[0] == pytest.approx(0.1 * 1e-4)
    assert obs.noise_std(np.array([[1.0, 4.0]]))[0] == pytest.approx(0.3)


def test_beacon_noise_cap_and_mean():
    obs = BeaconObservationModel([[0.0, 0.0]], 0.5, 1e-4, relative=False, cap=1.0)
    assert obs.noise_std(np.array([[3.0, 4.0]]))[0] == pytest.approx(0.5)
    rel = BeaconObservationModel([[1.0, 2.0]], 0.5, 1e-4)
    ll = rel.log_likelihood(np.array([2.0, 2.0]), np.array([[3.0, 4.0]]))
    var = (0.5 * math.sqrt(8.0)) ** 2
    assert ll[0] == pytest.approx(-math.log(2 * math.pi * var))


def test_target_tracking_observation_switch():
    agent = BeaconObservationModel([[0.0, 0.0]], 0.1, 1e-4)
    obs = TargetTrackingObservationModel(agent, far_sigma=0.3, near_sigma=0.05, d_min=1e-4)
    far = np.array([[1.0, 1.0, 4.0, 5.0]])
    z = np.array([1.0, 1.0, -3.0, -4.0])
    rel_var = 0.09 * 5.0
    expected = agent.log_likelihood(z[:2], far[:, :2])[0] - math.log(2 * math.pi * rel_var)
    assert obs.log_likelihood(z, far)[0] == pytest.approx(expected)
    near = np.array([[1.0, 1.0, 1.0, 1.0]])
    z = np.array([1.0, 1.0, 0.0, 0.0])
    expected = agent.log_likelihood(z[:2], near[:, :2])[0] - math.log(2 * math.pi * 0.0025)
    assert obs.log_likelihood(z, near)[0] == pytest.approx(expected)


def test_pf_update_single_particle():
    b = WeightedParticleBelief.uniform([[0.0, 0.0]])
    post = pf_update(b, np.array([1.0, 0.0]), np.zeros(2), GaussianDriftModel(0.1),
                     BeaconObservationModel([[0.0, 0.0]], 0.1, 1e-4), np.random.default_rng(0))
    assert post.n_x == 1 and post.weights[0] == 1.0


def test_pf_update_proportional_weights():
    b = WeightedParticleBelief.uniform([[-10.0, 0.0], [10.0, 0.0]])
    post = pf_update(b, np.zeros(2), np.zeros(2), GaussianDriftModel(0.01), SideLikelihood(),
                     np.random.default_rng(0))
    assert np.allclose(post.weights, [0.2, 0.8])


def test_pf_update_zero_likelihood():
    b = WeightedParticleBelief.uniform(np.zeros((3, 2)))
    with pytest.raises(ZeroLikelihoodObservation):
        pf_update(b, np.zeros(2), np.zeros(2), GaussianDriftModel(0.1), Blind(),
                  np.random.default_rng(0))


def test_pf_update_is_deterministic():
    b = WeightedParticleBelief.uniform(np.random.default_rng(0).normal(size=(20, 2)))
    args = (np.ones(2), np.array([1.0, 0.5]), GaussianDriftModel(0.3),
            BeaconObservationModel([[0.0, 0.0]], 0.4, 1e-4, relative=False))
    one = pf_update(b, *args, np.random.default_rng(5))
    two = pf_update(b, *args, np.random.default_rng(5))
    assert np.array_equal(one.particles, two.particles)
    assert np.array_equal(one.weights, two.weights)


def test_pf_update_matches_kalman_mean():
    # beacon far away and capped distance give a constant observation std
    sigma_t, sigma_o = 0.5, 0.8
    transition = GaussianDriftModel(sigma_t)
    obs = BeaconObservationModel([[100.0, 100.0]], sigma_o, 1e-4, relative=False, cap=1.0)
    rng = np.random.default_rng(4)
    belief = WeightedParticleBelief.uniform(rng.normal(size=(5000, 2)))
    mean, cov = np.zeros(2), np.eye(2)
    truth = np.zeros(2)
    for a in (np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([1.0, 1.0])):
        truth = truth + a + sigma_t * rng.normal(size=2)
        z = truth + sigma_o * rng.normal(size=2)
        belief = pf_update(belief, a, z, transition, obs, rng)
        mean, cov = mean + a, cov + sigma_t ** 2 * np.eye(2)
        gain = cov @ np.linalg.inv(cov + sigma_o ** 2 * np.eye(2))
        mean, cov = mean + gain @ (z - mean), (np.eye(2) - gain) @ cov
        ess = 1.0 / np.sum(belief.weights ** 2)
        stderr = np.sqrt(np.diag(cov) / ess)
        assert np.all(np.abs(belief.mean() - mean) < 3 * stderr)


def test_sample_observation_deterministic():
    b = WeightedParticleBelief.uniform(np.random.default_rng(0).normal(size=(10, 2)))
    args = (np.ones(2), GaussianDriftModel(0.3), BeaconObservationModel([[0.0, 0.0]], 0.4, 1e-4))
    s1, z1 = sample_observation(b, *args, np.random.default_rng(9))
    s2, z2 = sample_observation(b, *args, np.random.default_rng(9))
    assert np.array_equal(s1, s2) and np.array_equal(z1, z2)


def test_sample_observation_single_particle_distribution():
    b = WeightedParticleBelief.uniform([[0.0, 0.0]])
    transition = GaussianDriftModel(1e-6)
    obs = BeaconObservationModel([[100.0, 0.0]], 0.5, 1e-4, relative=False, cap=1.0)
    rng = np.random.default_rng(3)
    zs = np.array([sample_observation(b, np.array([1.0, 0.0]), transition, obs, rng)[1]
                   for _ in range(4000)])
    assert np.allclose(zs.mean(axis=0), [1.0, 0.0], atol=0.05)
    assert np.allclose(zs.std(axis=0), [0.5, 0.5], atol=0.05)


def test_sample_observation_respects_zero_weight():
    b = WeightedParticleBelief([[0.0, 0.0], [50.0, 50.0]], [1.0, 0.0])
    transition = GaussianDriftModel(0.1)
    obs = BeaconObservationModel([[0.0, 0.0]], 0.1, 1e-4)
    rng = np.random.default_rng(0)
    for _ in range(10 ** 4):
        state, _ = sample_observation(b, np.zeros(2), transition, obs, rng)
        assert state[0] < 25.0
