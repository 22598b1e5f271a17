import numpy as np
import pytest

from gradlab.model import GenerativeParams, InferenceParams, ModelConfig, param_layout


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_point(rng, dim, proposal_variance=2.0 / 3.0):
    """Random (theta, phi, x, config) with O(1) entries."""
    config = ModelConfig(dim, proposal_variance, 1)
    theta = GenerativeParams(rng.normal(size=dim))
    phi = InferenceParams(0.5 * np.eye(dim) + 0.2 * rng.normal(size=(dim, dim)), rng.normal(size=dim))
    x = rng.normal(scale=1.5, size=dim)
    return theta, phi, x, config


def flat_point(theta, phi):
    return param_layout(theta.dim).flatten(theta, phi)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
