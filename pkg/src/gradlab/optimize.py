"""Adam gradient ascent on the importance-weighted bound of the Gaussian model."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .estimators import EstimatorSpec, pool_delta
from .model import GenerativeParams, InferenceParams, ModelConfig, analytic_optimum, log_weight_from_noise, param_layout


@dataclass(frozen=True)
class AdamHyperparams:
    step_size: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.step_size < 0:
            raise ValueError(f"step_size must be >= 0, got {self.step_size}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")


@dataclass(frozen=True, eq=False)
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    hyper: AdamHyperparams = field(default_factory=AdamHyperparams)

    @classmethod
    def zeros(cls, size: int, hyper: AdamHyperparams | None = None) -> AdamState:
        return cls(np.zeros(size), np.zeros(size), 0, hyper or AdamHyperparams())


def adam_step(state: AdamState, params, gradient) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam update in the ascent direction."""
    params = np.asarray(params, dtype=float)
    gradient = np.asarray(gradient, dtype=float)
    if params.shape != gradient.shape or params.shape != state.first_moment.shape:
        raise ValueError(
            f"shape mismatch: params {params.shape}, gradient {gradient.shape}, state {state.first_moment.shape}"
        )
    h = state.hyper
    t = state.step_count + 1
    m = h.beta1 * state.first_moment + (1.0 - h.beta1) * gradient
    v = h.beta2 * state.second_moment + (1.0 - h.beta2) * gradient * gradient
    m_hat = m / (1.0 - h.beta1**t)
    v_hat = v / (1.0 - h.beta2**t)
    new_params = params + h.step_size * m_hat / (np.sqrt(v_hat) + h.epsilon)
    return replace(state, first_moment=m, second_moment=v, step_count=t), new_params


def init_uniform(config: ModelConfig, range_low: float, range_high: float, rng) -> tuple[GenerativeParams, InferenceParams]:
    """Every scalar of ``(mu, A, b)`` drawn i.i.d. uniform on ``[range_low, range_high)``."""
    if not range_low < range_high:
        raise ValueError(f"need range_low < range_high, got [{range_low}, {range_high}]")
    layout = param_layout(config.dim)
    return layout.unflatten(rng.uniform(range_low, range_high, layout.size))


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    elbo_estimate: float
    l2_generative_distance: float
    l2_inference_distance: float


@dataclass
class TrainTrace:
    records: list = field(default_factory=list)
    final_params: np.ndarray | None = None

    def append(self, record: TraceRecord) -> None:
        if self.records and record.iteration <= self.records[-1].iteration:
            raise ValueError("trace iterations must be strictly increasing")
        self.records.append(record)

    @property
    def initial(self) -> TraceRecord:
        return self.records[0]

    @property
    def final(self) -> TraceRecord:
        return self.records[-1]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def _elbo_from(log_w: np.ndarray, spec: EstimatorSpec) -> float:
    """Importance-weighted bound from a ``(B, n_particles)`` panel, grouped by ``spec.k``."""
    k = spec.k
    grouped = log_w.reshape(log_w.shape[0], -1, k)
    return float(np.mean(logsumexp(grouped, axis=-1) - np.log(k)))


def train(
    spec: EstimatorSpec,
    dataset,
    config: ModelConfig,
    steps: int,
    minibatch_size: int,
    adam_hyperparams: AdamHyperparams | None,
    rng,
    init=None,
    log_every: int = 1,
) -> TrainTrace:
    """Stochastic gradient ascent with Adam from ``init``.

    Each step draws a minibatch with replacement and applies the spec's
    batch-averaged gradient estimate (for PIWAE the pooled part updates
    ``mu`` and the grouped part updates ``A`` and ``b``).  Distances are to
    the analytic optimum of the full dataset.  ``init`` defaults to a uniform
    draw on ``[1.5, 2.5]``.

    ``rng`` is split into independent streams for minibatch indices and for
    particle noise, so two runs from the same seed see the same initial point
    and the same minibatches whatever their particle budgets.  The logged
    bound is computed on the panel that produced the step's gradient, before
    the update; iteration 0 holds the initial distances and a NaN bound.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if minibatch_size < 1:
        raise ValueError(f"minibatch_size must be >= 1, got {minibatch_size}")
    if log_every < 1:
        raise ValueError(f"log_every must be >= 1, got {log_every}")
    data = np.atleast_2d(np.asarray(dataset, dtype=float))
    n, d = data.shape
    layout = param_layout(d)
    opt_flat = layout.flatten(*analytic_optimum(data))
    if init is None:
        init = init_uniform(config, 1.5, 2.5, rng)
    batch_rng, noise_rng = rng.spawn(2)
    params = layout.flatten(*init)
    state = AdamState.zeros(layout.size, adam_hyperparams)
    trace = TrainTrace()

    def record(it: int, elbo: float) -> None:
        diff = params - opt_flat
        trace.append(
            TraceRecord(it, elbo, float(np.linalg.norm(diff[layout.mu])), float(np.linalg.norm(diff[layout.phi])))
        )

    record(0, float("nan"))
    for it in range(1, steps + 1):
        batch = data[batch_rng.integers(0, n, minibatch_size)]
        theta, phi = layout.unflatten(params)
        eps = noise_rng.standard_normal((minibatch_size, spec.n_particles, d))
        log_w = log_weight_from_noise(theta, phi, batch, eps, config)
        grad = pool_delta(theta, phi, batch, eps, spec, config, log_w=log_w)
        state, params = adam_step(state, params, grad)
        if it % log_every == 0 or it == steps:
            record(it, _elbo_from(log_w, spec))
    trace.final_params = params
    return trace
