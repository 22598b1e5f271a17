import numpy as np
import pytest

from gradlab.estimators import EstimatorSpec
from gradlab.model import GenerativeParams, ModelConfig, analytic_optimum, param_layout, sample_dataset
from gradlab.optimize import AdamHyperparams, AdamState, TraceRecord, TrainTrace, adam_step, init_uniform, train


class TestAdam:
    def test_zero_gradient_from_fresh_state(self, rng):
        p = rng.normal(size=6)
        state, out = adam_step(AdamState.zeros(6), p, np.zeros(6))
        np.testing.assert_array_equal(out, p)
        assert state.step_count == 1

    def test_first_step_is_signed_step_size(self, rng):
        g = rng.normal(size=8)
        _, out = adam_step(AdamState.zeros(8), np.zeros(8), g)
        # m_hat = g and v_hat = g^2 exactly after bias correction
        np.testing.assert_allclose(out, 1e-2 * g / (np.abs(g) + 1e-8), rtol=1e-12)
        np.testing.assert_allclose(out, 1e-2 * np.sign(g), rtol=1e-6)

    def test_repeated_gradient_does_not_grow_step(self, rng):
        g = rng.normal(size=5)
        s1, p1 = adam_step(AdamState.zeros(5), np.zeros(5), g)
        _, p2 = adam_step(s1, p1, g)
        assert np.all(np.abs(p2 - p1) <= np.abs(p1) + 1e-9)

    def test_constant_gradient_steady_state(self):
        g = np.array([3.0, -0.2, 1e-3, -50.0])
        state, p = AdamState.zeros(4), np.zeros(4)
        for _ in range(100):
            prev = p
            state, p = adam_step(state, p, g)
        np.testing.assert_allclose(p - prev, 1e-2 * np.sign(g), rtol=0.01)
        assert state.step_count == 100
        assert np.all(state.second_moment >= 0)

    def test_permutation_equivariant(self, rng):
        perm = rng.permutation(7)
        inv = np.argsort(perm)
        grads = rng.normal(size=(5, 7))
        s, p = AdamState.zeros(7), rng.normal(size=7)
        sp, pp = AdamState.zeros(7), p[perm]
        for g in grads:
            s, p = adam_step(s, p, g)
            sp, pp = adam_step(sp, pp, g[perm])
        np.testing.assert_array_equal(pp[inv], p)

    def test_deterministic(self, rng):
        g = rng.normal(size=3)
        assert np.array_equal(adam_step(AdamState.zeros(3), np.ones(3), g)[1], adam_step(AdamState.zeros(3), np.ones(3), g)[1])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            adam_step(AdamState.zeros(3), np.zeros(3), np.zeros(4))

    @pytest.mark.parametrize("kwargs", [dict(step_size=-1.0), dict(beta1=1.0), dict(beta2=-0.1), dict(epsilon=0.0)])
    def test_hyperparameter_validation(self, kwargs):
        with pytest.raises(ValueError):
            AdamHyperparams(**kwargs)


class TestInit:
    def test_degenerate_range(self, rng):
        layout = param_layout(3)
        flat = layout.flatten(*init_uniform(ModelConfig(3), 2.0, 2.0 + 1e-12, rng))
        np.testing.assert_allclose(flat, 2.0, atol=1e-11)

    def test_default_range_mean(self, rng):
        flat = param_layout(100).flatten(*init_uniform(ModelConfig(100), 1.5, 2.5, rng))
        assert flat.size == 10_200
        assert flat.min() >= 1.5 and flat.max() < 2.5
        assert abs(flat.mean() - 2.0) <= 4 * np.sqrt(1 / 12 / flat.size)

    def test_deterministic_and_validated(self):
        a = param_layout(2).flatten(*init_uniform(ModelConfig(2), 0, 1, np.random.default_rng(1)))
        b = param_layout(2).flatten(*init_uniform(ModelConfig(2), 0, 1, np.random.default_rng(1)))
        assert np.array_equal(a, b)
        with pytest.raises(ValueError):
            init_uniform(ModelConfig(2), 1.0, 1.0, np.random.default_rng(1))


@pytest.fixture
def small_data():
    cfg = ModelConfig(3, 2.0 / 3.0, 64)
    return cfg, sample_dataset(cfg, GenerativeParams([0.5, -1.0, 0.2]), np.random.default_rng(0))


class TestTrain:
    def test_one_step_bookkeeping(self, small_data):
        cfg, data = small_data
        trace = train(EstimatorSpec.iwae(4), data, cfg, 1, 8, None, np.random.default_rng(1))
        assert [r.iteration for r in trace.records] == [0, 1]
        assert np.isnan(trace.initial.elbo_estimate) and np.isfinite(trace.final.elbo_estimate)
        assert trace.final_params.shape == (15,)

    def test_thinning(self, small_data):
        cfg, data = small_data
        trace = train(EstimatorSpec.vae(2), data, cfg, 10, 4, None, np.random.default_rng(1), log_every=4)
        assert [r.iteration for r in trace.records] == [0, 4, 8, 10]

    @pytest.mark.parametrize("spec", [EstimatorSpec.vae(3), EstimatorSpec.piwae(2, 2), EstimatorSpec.ciwae(3, 0.5)], ids=lambda s: s.kind)
    def test_zero_step_size_at_optimum_is_identity(self, small_data, spec):
        cfg, data = small_data
        opt = analytic_optimum(data)
        trace = train(spec, data, cfg, 5, 8, AdamHyperparams(step_size=0.0), np.random.default_rng(2), init=opt)
        np.testing.assert_array_equal(trace.final_params, param_layout(3).flatten(*opt))
        assert np.all(trace.column("l2_inference_distance") == 0)

    def test_paired_runs_share_start(self, small_data):
        cfg, data = small_data
        a = train(EstimatorSpec.vae(4), data, cfg, 3, 8, None, np.random.default_rng(5))
        b = train(EstimatorSpec.iwae(4), data, cfg, 3, 8, None, np.random.default_rng(5))
        assert a.initial.l2_inference_distance == b.initial.l2_inference_distance
        assert a.initial.l2_generative_distance == b.initial.l2_generative_distance

    def test_reproducible(self, small_data):
        cfg, data = small_data
        a = train(EstimatorSpec.iwae(3), data, cfg, 20, 8, None, np.random.default_rng(5))
        b = train(EstimatorSpec.iwae(3), data, cfg, 20, 8, None, np.random.default_rng(5))
        np.testing.assert_array_equal(a.column("elbo_estimate"), b.column("elbo_estimate"))
        assert np.array_equal(a.final_params, b.final_params)

    def test_converges_toward_optimum(self, small_data):
        cfg, data = small_data
        trace = train(EstimatorSpec.vae(10), data, cfg, 1500, 16, None, np.random.default_rng(3))
        assert trace.final.l2_inference_distance < 0.5 * trace.initial.l2_inference_distance
        assert trace.final.l2_generative_distance < 0.5 * trace.initial.l2_generative_distance

    @pytest.mark.parametrize("kwargs", [dict(steps=0), dict(minibatch_size=0), dict(log_every=0)])
    def test_validation(self, small_data, kwargs):
        cfg, data = small_data
        args = dict(steps=1, minibatch_size=1, log_every=1) | kwargs
        with pytest.raises(ValueError):
            train(EstimatorSpec.vae(1), data, cfg, args["steps"], args["minibatch_size"], None, np.random.default_rng(0), log_every=args["log_every"])


def test_trace_iterations_strictly_increase():
    trace = TrainTrace()
    trace.append(TraceRecord(0, np.nan, 1.0, 1.0))
    with pytest.raises(ValueError):
        trace.append(TraceRecord(0, 0.0, 1.0, 1.0))
