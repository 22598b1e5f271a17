import numpy as np
import pytest

from gradlab import replicates as rep
from gradlab.estimators import EstimatorSpec, pool_delta
from gradlab.replicates import replicate_estimates
from gradlab.rng import n_threads, substream

from conftest import random_point

SPECS = [EstimatorSpec.vae(4), EstimatorSpec.iwae(6), EstimatorSpec.ciwae(3, 0.5), EstimatorSpec.piwae(2, 3)]


@pytest.fixture
def problem():
    r = np.random.default_rng(3)
    theta, phi, _, cfg = random_point(r, 3)
    return theta, phi, r.normal(size=(5, 3)), cfg


def test_matches_pooled_estimator_on_same_stream(problem):
    theta, phi, xs, cfg = problem
    out = replicate_estimates(theta, phi, xs, SPECS, 4, cfg, seed=9, threads=1)
    for r in range(4):
        eps = substream(9, "sweep", r).standard_normal((5, 6, 3))
        for s in SPECS:
            np.testing.assert_allclose(out[s][r], pool_delta(theta, phi, xs, eps, s, cfg), rtol=1e-12, atol=1e-14)


def test_independent_of_threads_and_blocks(problem, monkeypatch):
    theta, phi, xs, cfg = problem
    one = replicate_estimates(theta, phi, xs, SPECS, 6, cfg, seed=1, threads=1)
    many = replicate_estimates(theta, phi, xs, SPECS, 6, cfg, seed=1, threads=4)
    monkeypatch.setattr(rep, "BLOCK_ELEMS", 20)
    small = replicate_estimates(theta, phi, xs, SPECS, 6, cfg, seed=1, threads=2)
    for s in SPECS:
        assert np.array_equal(one[s], many[s])
        np.testing.assert_allclose(one[s], small[s], rtol=1e-13, atol=1e-15)


def test_seed_and_purpose_select_streams(problem):
    theta, phi, xs, cfg = problem
    s = SPECS[1]
    a = replicate_estimates(theta, phi, xs, [s], 2, cfg, seed=1)[s]
    assert not np.array_equal(a, replicate_estimates(theta, phi, xs, [s], 2, cfg, seed=2)[s])
    assert not np.array_equal(a, replicate_estimates(theta, phi, xs, [s], 2, cfg, seed=1, purpose="other")[s])


def test_single_datapoint_and_validation(problem):
    theta, phi, xs, cfg = problem
    out = replicate_estimates(theta, phi, xs[0], SPECS[:1], 3, cfg, seed=0)
    assert out[SPECS[0]].shape == (3, 15)
    with pytest.raises(ValueError):
        replicate_estimates(theta, phi, xs, [], 3, cfg, seed=0)
    with pytest.raises(ValueError):
        replicate_estimates(theta, phi, xs, SPECS, 0, cfg, seed=0)


def test_substreams_are_distinct():
    a = substream(0, "sweep", 0).standard_normal(4)
    assert np.array_equal(a, substream(0, "sweep", 0).standard_normal(4))
    assert not np.array_equal(a, substream(0, "sweep", 1).standard_normal(4))
    assert not np.array_equal(a, substream(0, "oracle", 0).standard_normal(4))


def test_thread_cap_from_environment(monkeypatch):
    monkeypatch.setenv("GRADLAB_THREADS", "3")
    assert n_threads() == 3
    monkeypatch.setenv("GRADLAB_THREADS", "many")
    with pytest.raises(ValueError):
        n_threads()
