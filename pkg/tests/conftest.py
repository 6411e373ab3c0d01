import numpy as np
import pytest

from adaptive_bsp.belief import WeightedParticleBelief
from adaptive_bsp.errors import ZeroLikelihoodObservation
from adaptive_bsp.models import (
    BeaconObservationModel,
    GaussianDriftModel,
    pf_update,
    sample_observation,
)

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def report():
    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def random_instance(rng: np.random.Generator, n_x: int, dim: int = 2):
    """A random linear-Gaussian step: (b_prev, action, z, b_post, transition, obs)."""
    sigma = rng.uniform(0.2, 1.0)
    transition = GaussianDriftModel(sigma, dim)
    obs = BeaconObservationModel(rng.uniform(-3, 3, size=(2, 2)), rng.uniform(0.2, 1.0),
                                 1e-4, relative=False)
    particles = rng.normal(0.0, 1.0, size=(n_x, dim))
    weights = rng.dirichlet(np.ones(n_x))
    b_prev = WeightedParticleBelief(particles, weights)
    action = rng.normal(size=dim)
    while True:
        _, z = sample_observation(b_prev, action, transition, obs, rng)
        try:
            b_post = pf_update(b_prev, action, z, transition, obs, rng)
            return b_prev, action, z, b_post, transition, obs
        except ZeroLikelihoodObservation:
            continue


@pytest.fixture
def instance_factory():
    return random_instance
