"""Linear-Gaussian latent variable model used as the analytic testbed.

The generative model and the proposal are

    z ~ N(mu, I),    x | z ~ N(z, I),    q(z | x) = N(A x + b, c I)

with generative parameters ``theta = mu`` and inference parameters
``phi = (A, b)``.  The proposal scale ``c`` is fixed (not learned).

Every gradient here is the total reparameterized derivative of
``log w = log p(z, x) - log q(z | x)`` with ``z = A x + b + sqrt(c) eps``.
Because the scale is fixed, ``log q`` evaluated at a reparameterized sample
depends on ``eps`` only, so the inference-parameter gradient flows entirely
through ``z``.  All gradients are affine in ``z``, which the estimators
exploit to combine particles before differentiating.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))

GROUPS = ("mu", "A", "b")


@dataclass(frozen=True)
class ModelConfig:
    dim: int
    proposal_variance: float = 2.0 / 3.0
    n_data: int = 1024

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if not self.proposal_variance > 0:
            raise ValueError(f"proposal_variance must be > 0, got {self.proposal_variance}")
        if int(self.n_data) < 1:
            raise ValueError(f"n_data must be >= 1, got {self.n_data}")


@dataclass(frozen=True, eq=False)
class GenerativeParams:
    mu: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float).reshape(-1))

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True, eq=False)
class InferenceParams:
    a_matrix: np.ndarray
    b_vector: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a_matrix, dtype=float))
        b = np.asarray(self.b_vector, dtype=float).reshape(-1)
        if a.shape != (b.shape[0], b.shape[0]):
            raise ValueError(f"a_matrix shape {a.shape} does not match b_vector length {b.shape[0]}")
        object.__setattr__(self, "a_matrix", a)
        object.__setattr__(self, "b_vector", b)

    @property
    def dim(self) -> int:
        return self.b_vector.shape[0]


@dataclass(frozen=True)
class ParamLayout:
    """Flat layout ``[mu (D), A row-major (D*D), b (D)]`` of the joint parameter vector."""

    dim: int

    @property
    def size(self) -> int:
        return self.dim * (self.dim + 2)

    @property
    def mu(self) -> slice:
        return slice(0, self.dim)

    @property
    def a(self) -> slice:
        return slice(self.dim, self.dim + self.dim**2)

    @property
    def b(self) -> slice:
        return slice(self.dim + self.dim**2, self.size)

    @property
    def phi(self) -> slice:
        """Inference parameters ``(A, b)``, which are contiguous."""
        return slice(self.dim, self.size)

    def group_slice(self, group: str) -> slice:
        if group == "theta":
            return self.mu
        if group == "phi":
            return self.phi
        return {"mu": self.mu, "A": self.a, "b": self.b}[group]

    def labels(self) -> np.ndarray:
        """Group label of every flat index."""
        out = np.empty(self.size, dtype=object)
        for g in GROUPS:
            out[self.group_slice(g)] = g
        return out

    def local_index(self) -> np.ndarray:
        """Index of each flat entry within its own group."""
        d = self.dim
        return np.concatenate([np.arange(d), np.arange(d * d), np.arange(d)])

    def flatten(self, theta: GenerativeParams, phi: InferenceParams) -> np.ndarray:
        return np.concatenate([theta.mu, phi.a_matrix.reshape(-1), phi.b_vector])

    def unflatten(self, flat) -> tuple[GenerativeParams, InferenceParams]:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.size,):
            raise ValueError(f"expected flat vector of length {self.size}, got shape {flat.shape}")
        d = self.dim
        return (
            GenerativeParams(flat[self.mu].copy()),
            InferenceParams(flat[self.a].reshape(d, d).copy(), flat[self.b].copy()),
        )


@lru_cache(maxsize=None)
def param_layout(dim: int) -> ParamLayout:
    return ParamLayout(int(dim))


def _check_dims(theta: GenerativeParams, phi: InferenceParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if theta.dim != phi.dim or x.shape[-1] != theta.dim:
        raise ValueError(
            f"shape mismatch: mu has {theta.dim} dims, b has {phi.dim}, x has trailing {x.shape[-1]}"
        )
    return x


def sample_dataset(config: ModelConfig, mu_true: GenerativeParams, rng) -> np.ndarray:
    """Draw ``n_data`` observations ``x = z + noise`` with ``z ~ N(mu_true, I)``.

    Each row is marginally ``N(mu_true, 2 I)``.
    """
    if mu_true.dim != config.dim:
        raise ValueError(f"mu_true has {mu_true.dim} dims, config expects {config.dim}")
    shape = (config.n_data, config.dim)
    z = mu_true.mu + rng.standard_normal(shape)
    return z + rng.standard_normal(shape)


def analytic_optimum(data) -> tuple[GenerativeParams, InferenceParams]:
    """Maximizer of the dataset-averaged bound: ``mu* = mean(x)``, ``A* = I/2``, ``b* = mu*/2``.

    The proposal only controls its mean, so the optimum matches the posterior
    mean ``(x + mu) / 2`` for every ``K``.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.shape[0] == 0:
        raise ValueError("analytic_optimum needs at least one data point")
    mu = data.mean(axis=0)
    d = mu.shape[0]
    return GenerativeParams(mu), InferenceParams(0.5 * np.eye(d), 0.5 * mu)


def proposal_mean(phi: InferenceParams, x) -> np.ndarray:
    return np.asarray(x, dtype=float) @ phi.a_matrix.T + phi.b_vector


def reparam_sample(phi: InferenceParams, x, eps, config: ModelConfig) -> np.ndarray:
    """``z = A x + b + sqrt(c) eps``; broadcasts over leading axes of ``eps``."""
    x = np.asarray(x, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if x.shape[-1] != phi.dim or eps.shape[-1] != phi.dim:
        raise ValueError(f"shape mismatch: x {x.shape}, eps {eps.shape}, dim {phi.dim}")
    return proposal_mean(phi, x) + np.sqrt(config.proposal_variance) * eps


def log_weight(theta: GenerativeParams, phi: InferenceParams, x, z, config: ModelConfig):
    """``log N(z; mu, I) + log N(x; z, I) - log N(z; A x + b, c I)``.

    Vectorized over leading axes of ``z``.
    """
    x = _check_dims(theta, phi, x)
    z = np.asarray(z, dtype=float)
    d = theta.dim
    c = config.proposal_variance
    m = proposal_mean(phi, x)
    log_prior = -0.5 * np.sum((z - theta.mu) ** 2, axis=-1) - 0.5 * d * LOG_2PI
    log_lik = -0.5 * np.sum((x - z) ** 2, axis=-1) - 0.5 * d * LOG_2PI
    log_q = -0.5 * np.sum((z - m) ** 2, axis=-1) / c - 0.5 * d * (LOG_2PI + np.log(c))
    return log_prior + log_lik - log_q


def log_weight_from_noise(theta: GenerativeParams, phi: InferenceParams, xs, eps, config: ModelConfig):
    """``log w`` at ``z = A x + b + sqrt(c) eps`` without materializing ``z``.

    Substituting the sample gives the quadratic
    ``const_n + sqrt(c) eps . (x + mu - 2 m) + (1/2 - c) |eps|^2`` with
    ``m = A x + b``.  ``xs`` is ``(N, D)`` and ``eps`` is ``(N, T, D)``.
    """
    xs = np.atleast_2d(_check_dims(theta, phi, xs))
    eps = np.asarray(eps, dtype=float)
    d = theta.dim
    c = config.proposal_variance
    m = proposal_mean(phi, xs)
    v = xs + theta.mu - 2.0 * m
    const = (
        -0.5 * np.sum((m - theta.mu) ** 2, axis=-1)
        - 0.5 * np.sum((xs - m) ** 2, axis=-1)
        + 0.5 * d * (np.log(c) - LOG_2PI)
    )
    proj = np.matmul(eps, v[:, :, None])[..., 0]
    sq = np.einsum("ntd,ntd->nt", eps, eps)
    return const[:, None] + np.sqrt(c) * proj + (0.5 - c) * sq


def grad_log_weight_at(theta: GenerativeParams, phi: InferenceParams, x, z) -> np.ndarray:
    """Reparameterized gradient of ``log w`` expressed through the sample ``z``.

    ``d/dmu = z - mu``, ``d/db = (mu - z) + (x - z)``, ``d/dA = (d/db) x^T``.
    Affine in ``z``: a convex combination of gradients equals the gradient at
    the combined ``z``.  Vectorized over leading axes of ``z``; returns the
    flat ``[mu, A, b]`` layout in the last axis.
    """
    x = _check_dims(theta, phi, x)
    z = np.asarray(z, dtype=float)
    g_mu = z - theta.mu
    g_b = theta.mu + x - 2.0 * z
    g_a = g_b[..., :, None] * x[..., None, :]
    lead = np.broadcast_shapes(g_b.shape[:-1], x.shape[:-1])
    g_a = np.broadcast_to(g_a, lead + g_a.shape[-2:]).reshape(lead + (-1,))
    return np.concatenate(
        [np.broadcast_to(g_mu, lead + g_mu.shape[-1:]), g_a, np.broadcast_to(g_b, lead + g_b.shape[-1:])],
        axis=-1,
    )


def grad_log_weight(theta: GenerativeParams, phi: InferenceParams, x, eps, config: ModelConfig) -> np.ndarray:
    """Total derivative of ``log w(z(phi, x, eps))`` w.r.t. ``(mu, A, b)``."""
    z = reparam_sample(phi, x, eps, config)
    return grad_log_weight_at(theta, phi, x, z)


def log_marginal(theta: GenerativeParams, x):
    """Exact ``log p(x) = log N(x; mu, 2 I)``; vectorized over rows of ``x``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != theta.dim:
        raise ValueError(f"x has trailing dim {x.shape[-1]}, mu has {theta.dim}")
    d = theta.dim
    return -0.25 * np.sum((x - theta.mu) ** 2, axis=-1) - 0.5 * d * (LOG_2PI + np.log(2.0))


def grad_log_marginal(theta: GenerativeParams, x) -> np.ndarray:
    """``d/dmu log N(x; mu, 2 I) = (x - mu) / 2``."""
    x = np.asarray(x, dtype=float)
    return 0.5 * (x - theta.mu)


def perturb_params(optimum, offset_std: float, rng) -> tuple[GenerativeParams, InferenceParams]:
    """Shift every scalar of ``(mu, A, b)`` by independent ``N(0, offset_std^2)`` noise."""
    if offset_std < 0:
        raise ValueError(f"offset_std must be >= 0, got {offset_std}")
    theta, phi = optimum
    layout = param_layout(theta.dim)
    flat = layout.flatten(theta, phi)
    if offset_std > 0:
        flat = flat + offset_std * rng.standard_normal(flat.shape)
    return layout.unflatten(flat)
