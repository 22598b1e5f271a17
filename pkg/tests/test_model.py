import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradlab.model import (
    GenerativeParams,
    InferenceParams,
    ModelConfig,
    analytic_optimum,
    grad_log_marginal,
    grad_log_weight,
    grad_log_weight_at,
    log_marginal,
    log_weight,
    log_weight_from_noise,
    param_layout,
    perturb_params,
    reparam_sample,
    sample_dataset,
)

from conftest import random_point

C = 2.0 / 3.0


def one_d(mu=0.0, a=0.5, b=0.0, c=C):
    return GenerativeParams([mu]), InferenceParams([[a]], [b]), ModelConfig(1, c, 1)


def central_difference(f, flat, h=1e-5):
    out = np.empty_like(flat)
    for i in range(flat.size):
        up, dn = flat.copy(), flat.copy()
        up[i] += h
        dn[i] -= h
        out[i] = (f(up) - f(dn)) / (2 * h)
    return out


class TestConfig:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            ModelConfig(0)
        with pytest.raises(ValueError):
            ModelConfig(2, proposal_variance=0.0)
        with pytest.raises(ValueError):
            ModelConfig(2, n_data=0)

    def test_inference_shape_check(self):
        with pytest.raises(ValueError):
            InferenceParams(np.eye(2), np.zeros(3))

    def test_layout_round_trip(self, rng):
        theta, phi, _, _ = random_point(rng, 3)
        layout = param_layout(3)
        flat = layout.flatten(theta, phi)
        assert flat.shape == (15,)
        t2, p2 = layout.unflatten(flat)
        np.testing.assert_array_equal(t2.mu, theta.mu)
        np.testing.assert_array_equal(p2.a_matrix, phi.a_matrix)
        np.testing.assert_array_equal(p2.b_vector, phi.b_vector)
        assert list(layout.labels()[[0, 3, 12]]) == ["mu", "A", "b"]


class TestReparam:
    def test_scalar_example(self):
        _, phi, cfg = one_d()
        z = reparam_sample(phi, [1.0], [1.0], cfg)
        np.testing.assert_allclose(z, [0.5 + np.sqrt(C)], rtol=1e-12)
        np.testing.assert_allclose(z, [1.316497], atol=1e-6)

    def test_zero_noise_is_proposal_mean(self, rng):
        theta, phi, x, cfg = random_point(rng, 4)
        np.testing.assert_allclose(reparam_sample(phi, x, np.zeros(4), cfg), phi.a_matrix @ x + phi.b_vector)

    def test_sample_moments(self, rng):
        _, phi, x, cfg = random_point(rng, 2)
        z = reparam_sample(phi, x, rng.standard_normal((200_000, 2)), cfg)
        np.testing.assert_allclose(z.mean(axis=0), phi.a_matrix @ x + phi.b_vector, atol=4 * np.sqrt(C / 200_000))
        np.testing.assert_allclose(z.var(axis=0), C, rtol=0.02)


class TestLogWeight:
    def test_scalar_example(self):
        theta, phi, cfg = one_d()
        lw = log_weight(theta, phi, [0.0], [0.0], cfg)
        # log N(0;0,1) twice minus log N(0;0,c)
        expected = -np.log(2 * np.pi) + 0.5 * np.log(2 * np.pi * C)
        np.testing.assert_allclose(lw, expected, rtol=1e-12)
        np.testing.assert_allclose(lw, -1.121671, atol=1e-6)

    def test_noise_form_matches_direct(self, rng):
        theta, phi, x, cfg = random_point(rng, 3)
        eps = rng.standard_normal((1, 50, 3))
        direct = log_weight(theta, phi, x, reparam_sample(phi, x, eps[0], cfg), cfg)
        np.testing.assert_allclose(log_weight_from_noise(theta, phi, x[None], eps, cfg)[0], direct, rtol=1e-12, atol=1e-12)

    def test_dim_mismatch(self, rng):
        theta, phi, x, cfg = random_point(rng, 3)
        with pytest.raises(ValueError):
            log_weight(theta, phi, x[:2], x[:2], cfg)


class TestGradient:
    def test_scalar_example(self):
        theta, phi, cfg = one_d(mu=1.0)
        g = grad_log_weight(theta, phi, [1.0], [0.0], cfg)
        np.testing.assert_allclose(g, [-0.5, 1.0, 1.0])

    @pytest.mark.parametrize("c", [2.0 / 3.0, 1.0])
    def test_matches_finite_differences(self, rng, c):
        layout = param_layout(3)
        for _ in range(10):
            theta, phi, x, cfg = random_point(rng, 3, c)
            eps = rng.standard_normal(3)

            def f(flat):
                t, p = layout.unflatten(flat)
                return log_weight(t, p, x, reparam_sample(p, x, eps, cfg), cfg)

            numeric = central_difference(f, layout.flatten(theta, phi))
            np.testing.assert_allclose(grad_log_weight(theta, phi, x, eps, cfg), numeric, rtol=1e-6, atol=1e-8)

    def test_affine_in_z(self, rng):
        theta, phi, x, _ = random_point(rng, 3)
        z = rng.normal(size=(5, 3))
        c = rng.dirichlet(np.ones(5))
        np.testing.assert_allclose(c @ grad_log_weight_at(theta, phi, x, z), grad_log_weight_at(theta, phi, x, c @ z), atol=1e-12)


class TestMarginal:
    def test_value_at_mean(self):
        theta, _, _ = one_d()
        np.testing.assert_allclose(log_marginal(theta, [0.0]), -0.5 * np.log(4 * np.pi), rtol=1e-12)
        np.testing.assert_allclose(log_marginal(theta, [0.0]), -1.265512, atol=1e-6)

    def test_gradient(self):
        theta, _, _ = one_d()
        np.testing.assert_allclose(grad_log_marginal(theta, [2.0]), [1.0])

    def test_gradient_finite_difference(self, rng):
        theta, _, x, _ = random_point(rng, 4)
        numeric = central_difference(lambda mu: log_marginal(GenerativeParams(mu), x), theta.mu.copy())
        np.testing.assert_allclose(grad_log_marginal(theta, x), numeric, rtol=1e-7, atol=1e-9)

    def test_self_normalized_monte_carlo(self, rng):
        theta, phi, cfg = one_d(mu=0.3, a=0.4, b=0.1)
        x = np.array([0.8])
        eps = rng.standard_normal((1, 1_000_000, 1))
        w = np.exp(log_weight_from_noise(theta, phi, x[None], eps, cfg)[0])
        se = w.std(ddof=1) / np.sqrt(w.size)
        assert abs(w.mean() - np.exp(log_marginal(theta, x))) < 4 * se

    def test_weight_constant_at_posterior(self, rng):
        # proposal equal to the posterior N((x+mu)/2, I/2) gives w = Z exactly
        theta = GenerativeParams([0.3, -0.2])
        phi = InferenceParams(0.5 * np.eye(2), 0.5 * theta.mu)
        cfg = ModelConfig(2, 0.5, 1)
        x = np.array([1.0, 2.0])
        lw = log_weight(theta, phi, x, reparam_sample(phi, x, rng.standard_normal((20, 2)), cfg), cfg)
        np.testing.assert_allclose(lw, log_marginal(theta, x), atol=1e-12)


class TestDataAndOptimum:
    def test_dataset_variance(self, rng):
        cfg = ModelConfig(3, C, 100_000)
        data = sample_dataset(cfg, GenerativeParams([1.0, -1.0, 0.0]), rng)
        assert data.shape == (100_000, 3)
        np.testing.assert_allclose(data.mean(axis=0), [1.0, -1.0, 0.0], atol=4 * np.sqrt(2 / 1e5))
        np.testing.assert_allclose(data.var(axis=0), 2.0, rtol=0.03)

    def test_optimum_example(self):
        theta, phi = analytic_optimum([[1.0], [3.0]])
        np.testing.assert_allclose(theta.mu, [2.0])
        np.testing.assert_allclose(phi.a_matrix, [[0.5]])
        np.testing.assert_allclose(phi.b_vector, [1.0])

    def test_optimum_proposal_is_posterior_mean(self, rng):
        data = rng.normal(size=(10, 3))
        theta, phi = analytic_optimum(data)
        np.testing.assert_allclose(data @ phi.a_matrix.T + phi.b_vector, (data + theta.mu) / 2, atol=1e-12)

    def test_perturb_offset_scale(self, rng):
        opt = analytic_optimum(rng.normal(size=(5, 20)))
        layout = param_layout(20)
        base = layout.flatten(*opt)
        diffs = np.concatenate([layout.flatten(*perturb_params(opt, 0.01, rng)) - base for _ in range(20)])
        np.testing.assert_allclose(np.abs(diffs).mean(), 0.01 * np.sqrt(2 / np.pi), rtol=0.05)

    def test_perturb_zero_is_identity(self, rng):
        opt = analytic_optimum(rng.normal(size=(5, 2)))
        layout = param_layout(2)
        np.testing.assert_array_equal(layout.flatten(*perturb_params(opt, 0.0, rng)), layout.flatten(*opt))
        with pytest.raises(ValueError):
            perturb_params(opt, -1.0, rng)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1), st.floats(0.2, 3.0))
def test_noise_route_equals_direct_route(dim, seed, c):
    r = np.random.default_rng(seed)
    theta, phi, x, _ = random_point(r, dim, c)
    cfg = ModelConfig(dim, c, 1)
    eps = r.standard_normal((1, 7, dim))
    direct = log_weight(theta, phi, x, reparam_sample(phi, x, eps[0], cfg), cfg)
    np.testing.assert_allclose(log_weight_from_noise(theta, phi, x[None], eps, cfg)[0], direct, rtol=1e-10, atol=1e-10)
